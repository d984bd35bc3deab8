// SPDX-License-Identifier: Apache-2.0
//
// Distinct-block (DB) locality model for DRAM <-> L2 traffic: block counts,
// data movement cost per iteration, level-3 tile/layout search and the
// derivative-based level-3 loop order.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdcmap/hardware.hpp"
#include "mdcmap/loopnest.hpp"

namespace mdcmap {

struct InfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Innermost (DRAM-contiguous) dimension per tensor, indexed like
// LoopNest::tensors().
using Layout = std::vector<std::size_t>;

inline Layout row_major_layout(const LoopNest& nest) {
    Layout l;
    for (const auto& t : nest.tensors()) l.push_back(nest.first_ref(t).dims.size() - 1);
    return l;
}

inline std::size_t tensor_index(const LoopNest& nest, const std::string& tensor) {
    auto ts = nest.tensors();
    return static_cast<std::size_t>(std::find(ts.begin(), ts.end(), tensor) - ts.begin());
}

// Divisors of n in ascending order.
inline std::vector<i64> divisors(i64 n) {
    std::vector<i64> lo, hi;
    for (i64 d = 1; d * d <= n; ++d)
        if (n % d == 0) {
            lo.push_back(d);
            if (d != n / d) hi.push_back(n / d);
        }
    lo.insert(lo.end(), hi.rbegin(), hi.rend());
    return lo;
}

// Dimension extent used by the DB formula. Paper mode sums the raw tile
// sizes of MIV subscripts; exact mode uses the true span.
inline i64 db_extent(const Subscript& s, const LoopNest& nest, const std::vector<i64>& t3, DbMode mode,
                     i64 dim_extent) {
    i64 e;
    if (mode == DbMode::Paper && classify_subscript(s) == SubscriptKind::MIV) {
        e = 0;
        for (const auto& t : s.terms) e += (t.coeff < 0 ? -t.coeff : t.coeff) * t3[nest.index_of(t.iter)];
    } else {
        e = span_extent(s, nest, t3);
    }
    return std::min(e, dim_extent);
}

namespace detail {

inline i64 floor_div(i64 v, i64 b) { return v >= 0 ? v / b : -((-v + b - 1) / b); }

// Distinct values (blocks of b when b > 1) of one subscript over the tile at
// the origin.
inline i64 exact_dim_count(const Subscript& s, const LoopNest& nest, const std::vector<i64>& t3, i64 b) {
    std::vector<std::pair<i64, i64>> live;   // coeff, tile
    i64 lo = s.constant, hi = s.constant;
    for (const auto& t : s.canonical().terms) {
        const i64 tile = t3[nest.index_of(t.iter)];
        if (tile <= 1) continue;
        live.push_back({t.coeff, tile});
        (t.coeff < 0 ? lo : hi) += t.coeff * (tile - 1);
    }
    // dense when every gap is bridged by the smaller terms
    std::vector<std::pair<i64, i64>> mag;
    for (const auto& [c, t] : live) mag.push_back({c < 0 ? -c : c, t});
    std::sort(mag.begin(), mag.end());
    i64 reach = 0;
    bool dense = true;
    for (const auto& [a, t] : mag) {
        if (a > reach + 1) dense = false;
        reach += a * (t - 1);
    }
    const i64 base = floor_div(lo, b);
    if (dense) return floor_div(hi, b) - base + 1;
    std::vector<char> hit(static_cast<std::size_t>(floor_div(hi, b) - base + 1), 0);
    std::vector<i64> it(live.size(), 0);
    while (true) {
        i64 v = s.constant;
        for (std::size_t k = 0; k < it.size(); ++k) v += live[k].first * it[k];
        hit[static_cast<std::size_t>(floor_div(v, b) - base)] = 1;
        std::size_t k = it.size();
        while (k > 0 && ++it[k - 1] == live[k - 1].second) it[--k] = 0;
        if (k == 0) break;
    }
    return std::count(hit.begin(), hit.end(), 1);
}

}  // namespace detail

// Exact mode counts the blocks one tile at the origin really touches; paper
// mode applies the closed form per dimension. Dimensions that share an
// iterator are counted jointly.
inline i64 distinct_blocks(const LoopNest& nest, const TensorRef& ref, const std::vector<i64>& t3,
                           std::size_t innermost, i64 b, DbMode mode = DbMode::Exact,
                           bool absent_loop_factor = true) {
    if (b < 1) throw std::invalid_argument("block size must be >= 1");
    check_tile(nest, t3);
    const std::size_t nd = ref.dims.size();
    i64 db = 1;
    if (mode == DbMode::Paper) {
        for (std::size_t k = 0; k < nd; ++k) {
            i64 e = db_extent(ref.dims[k].sub, nest, t3, mode, ref.dims[k].extent);
            db *= k == innermost ? (e + b - 1) / b : e;
        }
    } else {
        // group dimensions linked through iterators with more than one value
        std::vector<std::size_t> group(nd);
        std::iota(group.begin(), group.end(), 0);
        std::function<std::size_t(std::size_t)> root = [&](std::size_t x) {
            return group[x] == x ? x : group[x] = root(group[x]);
        };
        for (std::size_t a = 0; a < nd; ++a)
            for (std::size_t c = a + 1; c < nd; ++c)
                for (const auto& t : ref.dims[a].sub.terms)
                    if (t3[nest.index_of(t.iter)] > 1 && ref.dims[c].sub.coeff_of(t.iter) != 0)
                        group[root(c)] = root(a);
        for (std::size_t g = 0; g < nd; ++g) {
            std::vector<std::size_t> members;
            for (std::size_t k = 0; k < nd; ++k)
                if (root(k) == g) members.push_back(k);
            if (members.empty()) continue;
            if (members.size() == 1) {
                const auto k = members[0];
                db *= detail::exact_dim_count(ref.dims[k].sub, nest, t3, k == innermost ? b : 1);
                continue;
            }
            // joint enumeration over the iterators of the group
            std::vector<std::size_t> its;
            for (auto k : members)
                for (const auto& t : ref.dims[k].sub.terms) {
                    auto i = nest.index_of(t.iter);
                    if (t3[i] > 1 && std::find(its.begin(), its.end(), i) == its.end()) its.push_back(i);
                }
            std::set<std::vector<i64>> seen;
            std::vector<i64> pt(nest.iterators.size(), 0);
            std::function<void(std::size_t)> rec = [&](std::size_t d) {
                if (d == its.size()) {
                    std::vector<i64> id;
                    for (auto k : members) {
                        i64 v = ref.dims[k].sub.constant;
                        for (const auto& t : ref.dims[k].sub.terms) v += t.coeff * pt[nest.index_of(t.iter)];
                        id.push_back(k == innermost ? detail::floor_div(v, b) : v);
                    }
                    seen.insert(std::move(id));
                    return;
                }
                for (i64 x = 0; x < t3[its[d]]; ++x) {
                    pt[its[d]] = x;
                    rec(d + 1);
                }
                pt[its[d]] = 0;
            };
            rec(0);
            db *= static_cast<i64>(seen.size());
        }
    }
    if (absent_loop_factor)
        for (std::size_t i = 0; i < nest.iterators.size(); ++i)
            if (!ref.uses(nest.iterators[i].name)) db *= t3[i];
    return db;
}

inline i64 block_elements(const LoopNest& nest, const AcceleratorConfig& hw) {
    return std::max<i64>(1, hw.dram_block_bytes / nest.bytes_per_element);
}

// Sum of DB over every reference, the numerator of the cost per iteration.
inline i64 total_blocks(const LoopNest& nest, const std::vector<i64>& t3, const Layout& layout, i64 b,
                        DbMode mode = DbMode::Exact, bool absent_loop_factor = true) {
    i64 s = 0;
    for (const auto& r : nest.refs)
        s += distinct_blocks(nest, r, t3, layout.at(tensor_index(nest, r.tensor)), b, mode, absent_loop_factor);
    return s;
}

inline i64 tile_iterations(const std::vector<i64>& t) {
    return std::accumulate(t.begin(), t.end(), i64{1}, std::multiplies<>());
}

inline double data_movement_cost(const LoopNest& nest, const std::vector<i64>& t3, const Layout& layout, i64 b,
                                 DbMode mode = DbMode::Exact, bool absent_loop_factor = true) {
    return static_cast<double>(total_blocks(nest, t3, layout, b, mode, absent_loop_factor)) /
           static_cast<double>(tile_iterations(t3));
}

inline bool fits_l2(const LoopNest& nest, const std::vector<i64>& t3, i64 l2_bytes) {
    return 2 * total_footprint(nest, t3) * nest.bytes_per_element <= l2_bytes;
}

struct OffchipPlan {
    std::vector<i64> t3;
    Layout layout;
    std::vector<std::string> order3;   // outermost first
    i64 blocks = 0;                    // sum of DB for one tile
    double dmc = 0.0;
    std::vector<double> derivatives;   // per iterator, nest order
    i64 candidates = 0;                // (t3, layout) pairs considered
};

namespace detail {

// a/b < c/d for positive integers.
inline bool ratio_less(i64 a, i64 b, i64 c, i64 d) {
    return static_cast<__int128>(a) * d < static_cast<__int128>(c) * b;
}

// True when candidate (blocks, t3, layout) beats the incumbent.
inline bool plan_better(i64 blk, const std::vector<i64>& t3, const Layout& lay, const OffchipPlan& inc) {
    i64 it = tile_iterations(t3), jt = tile_iterations(inc.t3);
    if (ratio_less(blk, it, inc.blocks, jt)) return true;
    if (ratio_less(inc.blocks, jt, blk, it)) return false;
    if (it != jt) return it > jt;
    if (t3 != inc.t3) return t3 < inc.t3;
    return lay < inc.layout;
}

inline std::vector<i64> tile_candidates(i64 parent, bool factor) {
    if (factor) return divisors(parent);
    std::vector<i64> v(static_cast<std::size_t>(parent));
    std::iota(v.begin(), v.end(), 1);
    return v;
}

}  // namespace detail

// Exhaustive search over level-3 tiles and unique-innermost layouts.
inline OffchipPlan optimize_offchip_tiles(const LoopNest& nest, const AcceleratorConfig& hw,
                                          const PruningFlags& flags) {
    const std::size_t n = nest.iterators.size();
    const i64 b = block_elements(nest, hw);
    const auto tensors = nest.tensors();
    std::vector<std::vector<i64>> cands(n);
    for (std::size_t i = 0; i < n; ++i)
        cands[i] = detail::tile_candidates(nest.iterators[i].extent, flags.factor_tiles);

    OffchipPlan best;
    bool found = false;
    std::vector<i64> t3(n, 1);
    i64 considered = 0;
    std::size_t layouts = 1;
    for (const auto& t : tensors) layouts *= nest.first_ref(t).dims.size();

    // Per tensor the DB sum over its refs depends only on its own innermost
    // choice, so the best layout for a tile is the per-tensor argmin
    // (smallest index on ties).
    auto evaluate = [&] {
        Layout lay(tensors.size(), 0);
        i64 blk = 0;
        for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
            const auto& first = nest.first_ref(tensors[ti]);
            i64 bestv = -1;
            for (std::size_t d = 0; d < first.dims.size(); ++d) {
                i64 v = 0;
                for (const auto& r : nest.refs)
                    if (r.tensor == tensors[ti])
                        v += distinct_blocks(nest, r, t3, d, b, flags.db_mode, flags.absent_loop_factor);
                if (bestv < 0 || v < bestv) { bestv = v; lay[ti] = d; }
            }
            blk += bestv;
        }
        considered += static_cast<i64>(layouts);
        if (!found || detail::plan_better(blk, t3, lay, best)) {
            best.t3 = t3;
            best.layout = lay;
            best.blocks = blk;
            found = true;
        }
    };

    // Footprint grows with every tile size, so once a prefix overflows L2
    // with the remaining loops at 1, larger candidates overflow too.
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
        if (i == n) { evaluate(); return; }
        for (i64 c : cands[i]) {
            t3[i] = c;
            if (!fits_l2(nest, t3, hw.l2_bytes)) break;
            rec(i + 1);
        }
        t3[i] = 1;
    };
    rec(0);
    if (!found)
        throw InfeasibleError("no level-3 tile fits the " + std::to_string(hw.l2_bytes) +
                              "-byte L2 buffer with double buffering");
    best.dmc = static_cast<double>(best.blocks) / static_cast<double>(tile_iterations(best.t3));
    best.candidates = considered;
    return best;
}

// Partial derivatives of the smoothed cost per iteration (ceil(x/b) read as
// x/b) with respect to each level-3 tile size, at t3.
inline std::vector<double> dmc_derivatives(const LoopNest& nest, const std::vector<i64>& t3, const Layout& layout,
                                           i64 b, DbMode mode, bool absent_loop_factor) {
    const std::size_t n = nest.iterators.size();
    std::vector<double> der(n, 0.0);
    double P = static_cast<double>(tile_iterations(t3));
    for (const auto& r : nest.refs) {
        std::size_t inner = layout.at(tensor_index(nest, r.tensor));
        std::vector<double> ext(r.dims.size());
        double g = 1.0;
        for (std::size_t k = 0; k < r.dims.size(); ++k) {
            const auto& s = r.dims[k].sub;
            double e;
            if (mode == DbMode::Paper && classify_subscript(s) == SubscriptKind::MIV) {
                e = 0;
                for (const auto& t : s.terms) e += std::abs(static_cast<double>(t.coeff)) * t3[nest.index_of(t.iter)];
            } else {
                e = 1;
                for (const auto& t : s.terms)
                    e += std::abs(static_cast<double>(t.coeff)) * (t3[nest.index_of(t.iter)] - 1);
            }
            ext[k] = e;
            g *= k == inner ? e / static_cast<double>(b) : e;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto& it = nest.iterators[i].name;
            if (!r.uses(it) && absent_loop_factor) g *= static_cast<double>(t3[i]);
        }
        double f = g / P;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& it = nest.iterators[i].name;
            double ti = static_cast<double>(t3[i]);
            double slope = -1.0 / ti;
            if (r.uses(it)) {
                for (std::size_t k = 0; k < r.dims.size(); ++k) {
                    i64 c = r.dims[k].sub.coeff_of(it);
                    if (c != 0) slope += std::abs(static_cast<double>(c)) / ext[k];
                }
            } else if (absent_loop_factor) {
                slope += 1.0 / ti;
            }
            der[i] += f * slope;
        }
    }
    return der;
}

// Outermost first. Most negative slope goes innermost; ties put the loop
// with more level-3 tiles inside, then keep later nest loops inside.
inline std::vector<std::string> order_from_derivatives(const LoopNest& nest, const std::vector<i64>& t3,
                                                       const std::vector<double>& der) {
    const std::size_t n = nest.iterators.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    // Bucket slopes that agree to 1e-12 (relative) so the sort below is a
    // strict weak order.
    std::vector<std::size_t> by_slope = idx;
    std::sort(by_slope.begin(), by_slope.end(), [&](std::size_t a, std::size_t b) { return der[a] > der[b]; });
    std::vector<std::size_t> bucket(n, 0);
    for (std::size_t j = 1; j < n; ++j) {
        double a = der[by_slope[j - 1]], c = der[by_slope[j]];
        bool same = std::abs(a - c) <= 1e-12 * std::max({1e-300, std::abs(a), std::abs(c)});
        bucket[by_slope[j]] = bucket[by_slope[j - 1]] + (same ? 0 : 1);
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (bucket[a] != bucket[b]) return bucket[a] < bucket[b];
        i64 ta = (nest.iterators[a].extent + t3[a] - 1) / t3[a];
        i64 tb = (nest.iterators[b].extent + t3[b] - 1) / t3[b];
        if (ta != tb) return ta < tb;
        return a < b;
    });
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(nest.iterators[i].name);
    return out;
}

inline std::vector<std::string> derive_loop_order(const LoopNest& nest, OffchipPlan& plan, i64 b,
                                                  const PruningFlags& flags = {}) {
    plan.derivatives = dmc_derivatives(nest, plan.t3, plan.layout, b, flags.db_mode, flags.absent_loop_factor);
    plan.order3 = order_from_derivatives(nest, plan.t3, plan.derivatives);
    return plan.order3;
}

inline OffchipPlan optimize_offchip(const LoopNest& nest, const AcceleratorConfig& hw,
                                    const PruningFlags& flags = {}) {
    auto plan = optimize_offchip_tiles(nest, hw, flags);
    derive_loop_order(nest, plan, block_elements(nest, hw), flags);
    return plan;
}

// DRAM traffic in bytes for the whole problem under a level-3 schedule:
// every level-3 tile moves its distinct blocks once.
struct DramTraffic {
    double read_bytes = 0;
    double write_bytes = 0;
};

inline DramTraffic dram_traffic(const LoopNest& nest, const std::vector<i64>& t3, const Layout& layout, i64 b,
                                i64 block_bytes, const PruningFlags& flags = {}) {
    double tiles = 1;
    for (std::size_t i = 0; i < t3.size(); ++i)
        tiles *= static_cast<double>((nest.iterators[i].extent + t3[i] - 1) / t3[i]);
    DramTraffic d;
    for (const auto& r : nest.refs) {
        double blk = static_cast<double>(distinct_blocks(nest, r, t3, layout.at(tensor_index(nest, r.tensor)), b,
                                                         flags.db_mode, flags.absent_loop_factor));
        double bytes = blk * tiles * static_cast<double>(block_bytes);
        if (r.access == Access::Read) d.read_bytes += bytes;
        else if (r.access == Access::Write) d.write_bytes += bytes;
        else { d.read_bytes += bytes; d.write_bytes += bytes; }
    }
    return d;
}

}  // namespace mdcmap
