// SPDX-License-Identifier: Apache-2.0
//
// The six-aspect mapping, hardware validation, on-chip subspace enumeration
// and subspace cardinalities.
#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mdcmap/hardware.hpp"
#include "mdcmap/loopnest.hpp"
#include "mdcmap/offchip_cost.hpp"

namespace mdcmap {

struct Mapping {
    std::vector<i64> t1, t2, t3;           // per iterator, nest order
    std::vector<std::string> order2;       // level-2 inter-tile order, outermost first
    std::vector<std::string> order3;       // level-3 inter-tile order, outermost first
    Layout layout;                         // innermost dim per tensor

    i64 block(std::size_t i) const { return t1[i] * t2[i]; }
    i64 parallelism() const {
        return std::accumulate(t2.begin(), t2.end(), i64{1}, std::multiplies<>());
    }
    int parallel_loops() const {
        return static_cast<int>(std::count_if(t2.begin(), t2.end(), [](i64 v) { return v > 1; }));
    }

    // Flat key for deterministic tie-breaks.
    std::vector<i64> encode(const LoopNest& nest) const {
        std::vector<i64> k;
        for (auto v : t1) k.push_back(v);
        for (auto v : t2) k.push_back(v);
        for (const auto& s : order2) k.push_back(static_cast<i64>(nest.index_of(s)));
        for (auto v : t3) k.push_back(v);
        for (const auto& s : order3) k.push_back(static_cast<i64>(nest.index_of(s)));
        for (auto v : layout) k.push_back(static_cast<i64>(v));
        return k;
    }
    bool operator==(const Mapping&) const = default;
};

// All tiles equal to the extents, no parallelism, nest order, row-major.
inline Mapping trivial_mapping(const LoopNest& nest) {
    Mapping m;
    for (const auto& l : nest.iterators) {
        m.t1.push_back(l.extent);
        m.t2.push_back(1);
        m.t3.push_back(l.extent);
        m.order2.push_back(l.name);
        m.order3.push_back(l.name);
    }
    m.layout = row_major_layout(nest);
    return m;
}

struct Violation {
    char code;            // 's' structure, 'a'..'f' per the checks below
    std::string message;
};

namespace detail {

inline bool is_permutation_of(const std::vector<std::string>& order, const LoopNest& nest) {
    if (order.size() != nest.iterators.size()) return false;
    std::set<std::string> seen(order.begin(), order.end());
    if (seen.size() != order.size()) return false;
    return std::all_of(order.begin(), order.end(), [&](const std::string& s) { return nest.has_iterator(s); });
}

}  // namespace detail

inline std::vector<Violation> validate_structure(const Mapping& m, const LoopNest& nest) {
    std::vector<Violation> v;
    const auto n = nest.iterators.size();
    if (m.t1.size() != n || m.t2.size() != n || m.t3.size() != n)
        v.push_back({'s', "tile vectors must have one entry per loop"});
    if (!detail::is_permutation_of(m.order2, nest)) v.push_back({'s', "order2 is not a permutation of the loops"});
    if (!detail::is_permutation_of(m.order3, nest)) v.push_back({'s', "order3 is not a permutation of the loops"});
    auto ts = nest.tensors();
    if (m.layout.size() != ts.size()) {
        v.push_back({'s', "layout must name one dimension per tensor"});
    } else {
        for (std::size_t i = 0; i < ts.size(); ++i)
            if (m.layout[i] >= nest.first_ref(ts[i]).dims.size())
                v.push_back({'s', "layout dimension out of range for " + ts[i]});
    }
    return v;
}

// Checks (a)-(f). Only the L1/L2 and PE-count limits are hard hardware
// constraints; the utilization bound and divisor chain are pruning.
inline std::vector<Violation> validate_mapping(const Mapping& m, const LoopNest& nest, const AcceleratorConfig& hw,
                                               const PruningFlags& flags = {}) {
    auto v = validate_structure(m, nest);
    if (!v.empty()) return v;
    const auto n = nest.iterators.size();
    bool nested = true;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& l = nest.iterators[i];
        if (!(m.t1[i] >= 1 && m.t2[i] >= 1 && m.block(i) <= m.t3[i] && m.t3[i] <= l.extent)) {
            v.push_back({'a', "tile nesting violated on " + l.name});
            nested = false;
        }
    }
    if (nested) {
        i64 l2 = 2 * total_footprint(nest, m.t3) * nest.bytes_per_element;
        if (l2 > hw.l2_bytes)
            v.push_back({'b', "level-3 tile needs " + std::to_string(l2) + " B of L2 with double buffering, have " +
                                  std::to_string(hw.l2_bytes)});
        i64 l1 = 2 * total_footprint(nest, m.t1) * nest.bytes_per_element;
        if (l1 > hw.l1_bytes)
            v.push_back({'c', "level-1 tile needs " + std::to_string(l1) + " B of L1 with double buffering, have " +
                                  std::to_string(hw.l1_bytes)});
    }
    i64 par = m.parallelism();
    if (par > hw.num_pes)
        v.push_back({'d', "parallelism " + std::to_string(par) + " exceeds " + std::to_string(hw.num_pes) + " PEs"});
    else if (flags.utilization &&
             static_cast<double>(par) < hw.utilization_bound * static_cast<double>(hw.num_pes))
        v.push_back({'d', "utilization " + std::to_string(static_cast<double>(par) / hw.num_pes) + " below bound " +
                              std::to_string(hw.utilization_bound)});
    if (m.parallel_loops() > hw.max_parallel_loops)
        v.push_back({'e', std::to_string(m.parallel_loops()) + " parallel loops exceed the limit of " +
                              std::to_string(hw.max_parallel_loops)});
    if (flags.factor_tiles && nested)
        for (std::size_t i = 0; i < n; ++i)
            if (m.t3[i] % m.block(i) != 0 || nest.iterators[i].extent % m.t3[i] != 0)
                v.push_back({'f', "tiles of " + nest.iterators[i].name + " leave a remainder"});
    return v;
}

// ============================================================================
// On-chip enumeration
// ============================================================================

struct OnchipPoint {
    std::vector<std::string> order2;
    std::vector<i64> t2;
    std::vector<i64> t1;
};

// Level-2 degrees that pass (d), (e) and the divisor rule for fixed t3, in
// ascending lexicographic order.
inline std::vector<std::vector<i64>> valid_level2(const LoopNest& nest, const AcceleratorConfig& hw,
                                                  const std::vector<i64>& t3, const PruningFlags& flags) {
    const std::size_t n = nest.iterators.size();
    std::vector<std::vector<i64>> out;
    std::vector<i64> t2(n, 1);
    const double need = flags.utilization ? hw.utilization_bound * static_cast<double>(hw.num_pes) : 0.0;
    std::function<void(std::size_t, i64, int)> rec = [&](std::size_t i, i64 prod, int loops) {
        if (i == n) {
            if (static_cast<double>(prod) >= need) out.push_back(t2);
            return;
        }
        for (i64 c : detail::tile_candidates(t3[i], flags.factor_tiles)) {
            if (prod * c > hw.num_pes) break;
            int l = loops + (c > 1 ? 1 : 0);
            if (l > hw.max_parallel_loops) continue;
            t2[i] = c;
            rec(i + 1, prod * c, l);
        }
        t2[i] = 1;
    };
    rec(0, 1, 0);
    return out;
}

// Level-1 tiles for fixed t2 and t3 that fit L1, ascending lexicographic.
template <class F>
void for_each_level1(const LoopNest& nest, const AcceleratorConfig& hw, const std::vector<i64>& t3,
                     const std::vector<i64>& t2, const PruningFlags& flags, F&& f) {
    const std::size_t n = nest.iterators.size();
    std::vector<i64> t1(n, 1);
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
        if (i == n) { f(t1); return; }
        i64 cap = t3[i] / t2[i];
        std::vector<i64> cands;
        if (flags.factor_tiles) {
            if (t3[i] % t2[i] != 0) return;
            cands = divisors(cap);
        } else {
            cands = detail::tile_candidates(cap, false);
        }
        for (i64 c : cands) {
            t1[i] = c;
            if (2 * total_footprint(nest, t1) * nest.bytes_per_element > hw.l1_bytes) break;
            rec(i + 1);
        }
        t1[i] = 1;
    };
    rec(0);
}

// Every (order2, t2, t1) passing validate_mapping for the fixed level-3
// tiles: order2 outermost, then t2, then t1.
template <class F>
void enumerate_onchip(const LoopNest& nest, const AcceleratorConfig& hw, const std::vector<i64>& t3,
                      const PruningFlags& flags, F&& f) {
    const auto l2 = valid_level2(nest, hw, t3, flags);
    std::vector<std::size_t> perm(nest.iterators.size());
    std::iota(perm.begin(), perm.end(), 0);
    OnchipPoint pt;
    do {
        pt.order2.clear();
        for (auto i : perm) pt.order2.push_back(nest.iterators[i].name);
        for (const auto& t2 : l2) {
            pt.t2 = t2;
            for_each_level1(nest, hw, t3, t2, flags, [&](const std::vector<i64>& t1) {
                pt.t1 = t1;
                f(static_cast<const OnchipPoint&>(pt));
            });
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
}

inline std::vector<OnchipPoint> collect_onchip(const LoopNest& nest, const AcceleratorConfig& hw,
                                               const std::vector<i64>& t3, const PruningFlags& flags) {
    std::vector<OnchipPoint> out;
    enumerate_onchip(nest, hw, t3, flags, [&](const OnchipPoint& p) { out.push_back(p); });
    return out;
}

// ============================================================================
// Subspace sizes
// ============================================================================

using Count = unsigned __int128;

inline std::string to_string(Count v) {
    if (v == 0) return "0";
    std::string s;
    while (v > 0) {
        s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
        v /= 10;
    }
    return {s.rbegin(), s.rend()};
}

inline double to_double(Count v) { return static_cast<double>(static_cast<long double>(v)); }

struct SpaceStats {
    Count offchip_count = 0;    // t3 x order3 x layout
    Count onchip_count = 0;     // order2 x t2 x t1 for the given t3
    Count original_count = 0;   // undecoupled product of all six aspects
    std::vector<i64> t3;        // level-3 tiles the on-chip count was built on
};

inline Count factorial(std::size_t n) {
    Count f = 1;
    for (std::size_t i = 2; i <= n; ++i) f *= i;
    return f;
}

inline Count layout_count(const LoopNest& nest) {
    Count c = 1;
    for (const auto& t : nest.tensors()) c *= nest.first_ref(t).dims.size();
    return c;
}

// Original space: (n!)^2 loop orders x layouts x (divisor tiles per level)^3.
// Counts ignore buffer capacities so that they stay closed form.
inline Count original_space(const LoopNest& nest) {
    Count per_level = 1;
    for (const auto& l : nest.iterators) per_level *= divisors(l.extent).size();
    Count o = factorial(nest.iterators.size());
    return o * o * layout_count(nest) * per_level * per_level * per_level;
}

inline Count offchip_space(const LoopNest& nest, const PruningFlags& flags) {
    Count t = 1;
    for (const auto& l : nest.iterators)
        t *= flags.factor_tiles ? divisors(l.extent).size() : static_cast<std::size_t>(l.extent);
    return t * factorial(nest.iterators.size()) * layout_count(nest);
}

inline Count onchip_space(const LoopNest& nest, const AcceleratorConfig& hw, const std::vector<i64>& t3,
                          const PruningFlags& flags) {
    const std::size_t n = nest.iterators.size();
    // number of level-1 choices for an iterator given its level-2 degree
    auto l1_choices = [&](std::size_t i, i64 t2) -> Count {
        if (flags.factor_tiles) return t3[i] % t2 == 0 ? divisors(t3[i] / t2).size() : 0;
        return static_cast<Count>(t3[i] / t2);
    };
    Count total = 0;
    const double need = flags.utilization ? hw.utilization_bound * static_cast<double>(hw.num_pes) : 0.0;
    std::function<void(std::size_t, i64, int, Count)> rec = [&](std::size_t i, i64 prod, int loops, Count acc) {
        if (i == n) {
            if (static_cast<double>(prod) >= need) total += acc;
            return;
        }
        for (i64 c : detail::tile_candidates(t3[i], flags.factor_tiles)) {
            if (prod * c > hw.num_pes) break;
            int l = loops + (c > 1 ? 1 : 0);
            if (l > hw.max_parallel_loops) continue;
            Count k = l1_choices(i, c);
            if (k == 0) continue;
            rec(i + 1, prod * c, l, acc * k);
        }
    };
    rec(0, 1, 0, 1);
    return total * factorial(n);
}

inline SpaceStats space_size(const LoopNest& nest, const AcceleratorConfig& hw, const PruningFlags& flags,
                             const std::vector<i64>& t3) {
    SpaceStats s;
    s.t3 = t3;
    s.offchip_count = offchip_space(nest, flags);
    s.onchip_count = onchip_space(nest, hw, t3, flags);
    s.original_count = original_space(nest);
    return s;
}

// Builds the on-chip count on the optimal level-3 tiles.
inline SpaceStats space_size(const LoopNest& nest, const AcceleratorConfig& hw, const PruningFlags& flags = {}) {
    PruningFlags search = flags;
    search.factor_tiles = true;   // keep the off-chip search itself tractable
    auto plan = optimize_offchip_tiles(nest, hw, search);
    return space_size(nest, hw, flags, plan.t3);
}

// Random mapping passing validate_mapping, or nullopt after `attempts`
// rejected draws. Tiles follow divisor chains when factor pruning is on.
inline std::optional<Mapping> random_mapping(const LoopNest& nest, const AcceleratorConfig& hw,
                                             const PruningFlags& flags, std::mt19937_64& rng, int attempts = 200) {
    const std::size_t n = nest.iterators.size();
    auto pick = [&](const std::vector<i64>& v) {
        return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
    };
    auto range = [](i64 hi) {
        std::vector<i64> v;
        for (i64 x = 1; x <= hi; ++x) v.push_back(x);
        return v;
    };
    for (int a = 0; a < attempts; ++a) {
        Mapping m;
        m.t1.resize(n);
        m.t2.resize(n);
        m.t3.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const i64 e = nest.iterators[i].extent;
            m.t3[i] = pick(flags.factor_tiles ? divisors(e) : range(e));
            const i64 b = pick(flags.factor_tiles ? divisors(m.t3[i]) : range(m.t3[i]));
            m.t1[i] = pick(flags.factor_tiles ? divisors(b) : range(b));
            m.t2[i] = flags.factor_tiles ? b / m.t1[i] : std::max<i64>(1, b / m.t1[i]);
        }
        for (const auto& l : nest.iterators) {
            m.order2.push_back(l.name);
            m.order3.push_back(l.name);
        }
        std::shuffle(m.order2.begin(), m.order2.end(), rng);
        std::shuffle(m.order3.begin(), m.order3.end(), rng);
        for (const auto& t : nest.tensors())
            m.layout.push_back(std::uniform_int_distribution<std::size_t>(0, nest.first_ref(t).dims.size() - 1)(rng));
        if (validate_mapping(m, nest, hw, flags).empty()) return m;
    }
    return std::nullopt;
}

}  // namespace mdcmap
