// SPDX-License-Identifier: Apache-2.0
//
// Analytical cost model over directive programs.
//
// Execution model. Every directive steps through the current window of its
// dimension; the global clock is the lexicographic order of the step indices
// of all directives, outermost first. PEs run in lockstep. A PE is active at
// a step when each dimension gives it a nonempty window. Per step and tensor
// a PE holds the bounding box of the tensor elements its windows touch:
//   fill       box(t) minus box(t-1), box(t-1) empty when the PE idled
//   forwarded  part of the fill already in the neighbour's current box, along
//              the innermost spatial axis that shifts an MIV subscript
//   L2 reads   fill minus forwarded, once per multicast group when supported
//   writeback  box(t-1) minus box(t) for written tensors, plus the final box
// Latency is the first transfer, then max(compute, next transfer) per step.
//
// Evaluation. Windows of one dimension evolve independently of the others,
// so each step transition is a product of per-dimension window pairs. The
// model groups transitions by the directive that advances, collects per
// dimension the distinct (before, after) window vectors with multiplicities
// and folds the product over dimensions without visiting individual steps.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdcmap/conformability.hpp"
#include "mdcmap/hardware.hpp"
#include "mdcmap/loopnest.hpp"
#include "mdcmap/mdc.hpp"
#include "mdcmap/offchip_cost.hpp"

namespace mdcmap {

struct AnalysisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline i64 num_time_steps(const Directive& d, i64 extent, i64 units = 1) {
    if (d.kind == DirectiveKind::Cluster) throw std::invalid_argument("Cluster has no time steps");
    if (extent < 1 || d.size < 1 || d.offset < 1) throw std::invalid_argument("extent, size and offset must be >= 1");
    i64 steps = 1 + (std::max<i64>(0, extent - d.size) + d.offset - 1) / d.offset;
    if (d.kind == DirectiveKind::SpatialMap) {
        if (units < 1) throw std::invalid_argument("units must be >= 1");
        return (steps + units - 1) / units;
    }
    return steps;
}

struct TensorCounts {
    std::string tensor;
    i64 fills = 0;        // elements written into L1, per PE
    i64 l2_reads = 0;     // elements read from L2
    i64 forwarded = 0;    // elements shifted between neighbouring PEs
    i64 writebacks = 0;   // elements written back to L2
    double dram_read_bytes = 0;
    double dram_write_bytes = 0;
    bool operator==(const TensorCounts&) const = default;
};

struct AccessCounts {   // bytes
    double l1_read = 0, l1_write = 0;
    double l2_read = 0, l2_write = 0;
    double noc = 0;
    double dram_read = 0, dram_write = 0;
    bool operator==(const AccessCounts&) const = default;
};

struct CostReport {
    i64 latency_cycles = 0;
    double runtime_seconds = 0;
    double energy = 0;
    double edp = 0;
    double pe_utilization = 0;
    i64 steps = 0;
    i64 active_pe_steps = 0;
    i64 macs = 0;
    AccessCounts access;
    std::vector<TensorCounts> tensors;
    i64 l1_required_bytes = 0;
    i64 l2_required_bytes = 0;
    bool operator==(const CostReport&) const = default;
};

struct AnalysisOptions {
    const ConformabilityReport* report = nullptr;   // computed when absent
    std::optional<std::vector<i64>> t3;             // level-3 tiles for DRAM traffic
    std::optional<Layout> layout;                   // row-major when absent
    PruningFlags flags;
};

// Level-3 tiles implied by a program: the first directive on each dimension.
inline std::vector<i64> implied_level3(const MdcMapping& mdc, const LoopNest& nest,
                                       const std::vector<std::string>& dims) {
    std::vector<i64> t3 = nest.extents();
    std::vector<bool> seen(t3.size(), false);
    for (const auto& d : mdc.program()) {
        if (d.kind == DirectiveKind::Cluster) continue;
        for (std::size_t i = 0; i < dims.size(); ++i)
            if (dims[i] == d.dim && !seen[i]) {
                seen[i] = true;
                t3[i] = std::min(d.size, t3[i]);
            }
    }
    return t3;
}

namespace detail {

struct Win {
    i64 start = 0;
    i64 len = 0;   // 0 = no window
};
using DimState = std::vector<Win>;   // one entry per unit combination

struct DimDirective {
    DirectiveKind kind;
    i64 size;
    std::size_t pos;    // position in the flattened program
    i64 units = 1;      // spatial only
    i64 stride = 1;     // spatial only: stride of this axis in the combination index
};

struct DimPlan {
    i64 extent = 1;
    i64 combos = 1;
    std::vector<DimDirective> dirs;
    std::vector<std::vector<std::pair<DimState, i64>>> levels;   // node distribution per depth
};

inline i64 steps_of(i64 len, i64 size) { return len <= 0 ? 0 : (len + size - 1) / size; }

inline i64 digit(const DimDirective& d, std::size_t u) {
    return static_cast<i64>(u / static_cast<std::size_t>(d.stride)) % d.units;
}

inline i64 child_count(const DimState& st, const DimDirective& d) {
    i64 n = 0;
    for (std::size_t u = 0; u < st.size(); ++u) {
        i64 s = steps_of(st[u].len, d.size);
        if (d.kind == DirectiveKind::SpatialMap) {
            i64 g = digit(d, u);
            s = s > g ? (s - g + d.units - 1) / d.units : 0;
        }
        n = std::max(n, s);
    }
    return n;
}

inline DimState child_state(const DimState& st, const DimDirective& d, i64 c) {
    DimState out(st.size());
    for (std::size_t u = 0; u < st.size(); ++u) {
        const Win& w = st[u];
        if (w.len <= 0) continue;
        i64 k = d.kind == DirectiveKind::SpatialMap ? c * d.units + digit(d, u) : c;
        if (k >= steps_of(w.len, d.size)) continue;
        out[u] = {w.start + k * d.size, std::min(d.size, w.len - k * d.size)};
    }
    return out;
}

// Child index ranges whose states are translations of each other.
inline std::vector<std::pair<i64, i64>> child_runs(const DimState& st, const DimDirective& d) {
    const i64 n = child_count(st, d);
    std::vector<i64> bp{0, n};
    const bool sp = d.kind == DirectiveKind::SpatialMap;
    for (std::size_t u = 0; u < st.size(); ++u) {
        if (st[u].len <= 0) continue;
        i64 s = steps_of(st[u].len, d.size);
        i64 g = sp ? digit(d, u) : 0, U = sp ? d.units : 1;
        i64 last_full = s - 2 - g >= 0 ? (s - 2 - g) / U : -1;
        i64 last_valid = s - 1 - g >= 0 ? (s - 1 - g) / U : -1;
        bp.push_back(std::clamp<i64>(last_full + 1, 0, n));
        bp.push_back(std::clamp<i64>(last_valid + 1, 0, n));
    }
    std::sort(bp.begin(), bp.end());
    bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
    std::vector<std::pair<i64, i64>> runs;
    for (std::size_t i = 0; i + 1 < bp.size(); ++i) runs.push_back({bp[i], bp[i + 1]});
    return runs;
}

inline i64 reference_start(const DimState& a) {
    for (const auto& w : a)
        if (w.len > 0) return w.start;
    return 0;
}

inline void append_key(std::vector<i64>& key, const DimState& a, i64 ref) {
    for (const auto& w : a) {
        key.push_back(w.len);
        key.push_back(w.len > 0 ? w.start - ref : 0);
    }
}

inline DimState descend(DimState st, const DimPlan& p, std::size_t from, bool last) {
    for (std::size_t k = from; k < p.dirs.size(); ++k) {
        i64 n = child_count(st, p.dirs[k]);
        st = child_state(st, p.dirs[k], last ? n - 1 : 0);
    }
    return st;
}

inline void build_levels(DimPlan& p) {
    p.levels.assign(p.dirs.size() + 1, {});
    p.levels[0].push_back({DimState(static_cast<std::size_t>(p.combos), Win{0, p.extent}), 1});
    for (std::size_t k = 0; k < p.dirs.size(); ++k) {
        std::map<std::vector<i64>, std::size_t> index;
        auto& next = p.levels[k + 1];
        for (const auto& [st, w] : p.levels[k])
            for (auto [b, e] : child_runs(st, p.dirs[k])) {
                DimState ch = child_state(st, p.dirs[k], b);
                std::vector<i64> key;
                append_key(key, ch, reference_start(ch));
                auto [it, fresh] = index.emplace(std::move(key), next.size());
                if (fresh) next.push_back({std::move(ch), 0});
                next[it->second].second += w * (e - b);
            }
    }
}

struct PairState {
    DimState before, after;
    i64 count = 0;
    i64 valid_before = 0, valid_after = 0, valid_both = 0;
    i64 max_len_before = 0, sum_len_before = 0;
};

class PairCollector {
public:
    void add(DimState a, DimState b, i64 w) {
        i64 ref = reference_start(a);
        if (ref == 0 && std::none_of(a.begin(), a.end(), [](const Win& x) { return x.len > 0; }))
            ref = reference_start(b);
        std::vector<i64> key;
        append_key(key, a, ref);
        append_key(key, b, ref);
        auto [it, fresh] = index_.emplace(std::move(key), pairs_.size());
        if (fresh) {
            PairState p;
            p.before = std::move(a);
            p.after = std::move(b);
            for (std::size_t u = 0; u < p.before.size(); ++u) {
                bool x = p.before[u].len > 0, y = p.after[u].len > 0;
                p.valid_before += x;
                p.valid_after += y;
                p.valid_both += x && y;
                if (x) {
                    p.max_len_before = std::max(p.max_len_before, p.before[u].len);
                    p.sum_len_before += p.before[u].len;
                }
            }
            pairs_.push_back(std::move(p));
        }
        pairs_[it->second].count += w;
    }
    std::vector<PairState> take() { return std::move(pairs_); }

private:
    std::map<std::vector<i64>, std::size_t> index_;
    std::vector<PairState> pairs_;
};

struct SubTerm {
    std::size_t dim;
    i64 coeff;
};
struct SubExpr {
    i64 constant = 0;
    std::vector<SubTerm> terms;
};
struct TensorDimModel {
    std::vector<SubExpr> refs;   // one subscript per reference to the tensor
};
struct Component {
    std::vector<std::size_t> dims;
    std::vector<std::size_t> tdims;   // tensor dims inside this component
};
struct TensorModel {
    std::string name;
    bool written = false;
    std::vector<TensorDimModel> tdims;
    std::vector<Component> comps;
    std::vector<std::size_t> other_dims;   // dims the tensor ignores
    std::optional<std::size_t> fw_dim;     // neighbour-forwarding axis
    i64 fw_stride = 1, fw_units = 1;
};

struct Interval {
    i64 lo, hi;
};

inline Interval eval_interval(const TensorDimModel& td, const std::vector<const Win*>& w) {
    Interval r{0, 0};
    bool first = true;
    for (const auto& s : td.refs) {
        i64 lo = s.constant, hi = s.constant;
        for (const auto& t : s.terms) {
            const Win& x = *w[t.dim];
            i64 a = t.coeff * x.start, b = t.coeff * (x.start + x.len - 1);
            lo += std::min(a, b);
            hi += std::max(a, b);
        }
        if (first) r = {lo, hi};
        else r = {std::min(r.lo, lo), std::max(r.hi, hi)};
        first = false;
    }
    return r;
}

inline i64 overlap(const Interval& a, const Interval& b) { return std::max<i64>(0, std::min(a.hi, b.hi) - std::max(a.lo, b.lo) + 1); }
inline i64 overlap3(const Interval& a, const Interval& b, const Interval& c) {
    return std::max<i64>(0, std::min({a.hi, b.hi, c.hi}) - std::max({a.lo, b.lo, c.lo}) + 1);
}

struct CompSums {
    i64 s1 = 0, s2 = 0, s3 = 0, s4 = 0, w1 = 0, w2 = 0;
};

inline CompSums component_sums(const TensorModel& tm, const Component& c, const std::vector<const PairState*>& st,
                               std::size_t num_dims) {
    CompSums r;
    const bool has_fw = tm.fw_dim && std::find(c.dims.begin(), c.dims.end(), *tm.fw_dim) != c.dims.end();
    std::vector<std::size_t> combo(c.dims.size(), 0);
    std::vector<const Win*> wa(num_dims, nullptr), wb(num_dims, nullptr), wq(num_dims, nullptr);
    static const Win none{};
    while (true) {
        bool x = true, y = true, z = has_fw;
        for (std::size_t k = 0; k < c.dims.size(); ++k) {
            const auto d = c.dims[k];
            const PairState& p = *st[d];
            wa[d] = &p.before[combo[k]];
            wb[d] = &p.after[combo[k]];
            wq[d] = wb[d];
            x = x && wb[d]->len > 0;
            y = y && wa[d]->len > 0;
            if (has_fw && d == *tm.fw_dim) {
                i64 g = static_cast<i64>(combo[k] / static_cast<std::size_t>(tm.fw_stride)) % tm.fw_units;
                if (g == 0) {
                    z = false;
                    wq[d] = &none;
                } else {
                    wq[d] = &p.after[combo[k] - static_cast<std::size_t>(tm.fw_stride)];
                    z = z && wq[d]->len > 0;
                }
            }
        }
        if (x || y) {
            i64 p1 = 1, p2 = 1, p3 = 1, p4 = 1, q1 = 1, q2 = 1;
            for (auto g : c.tdims) {
                const auto& td = tm.tdims[g];
                Interval ib{0, -1}, ia{0, -1}, iq{0, -1};
                if (x) ib = eval_interval(td, wb);
                if (y) ia = eval_interval(td, wa);
                if (x && z) iq = eval_interval(td, wq);
                i64 lb = ib.hi - ib.lo + 1, la = ia.hi - ia.lo + 1;
                p1 *= lb;
                q1 *= la;
                if (x && y) {
                    i64 ab = overlap(ib, ia);
                    p2 *= ab;
                    q2 *= ab;
                }
                if (x && z) {
                    p3 *= overlap(ib, iq);
                    if (y) p4 *= overlap3(ib, ia, iq);
                }
            }
            if (x) r.s1 += p1;
            if (x && y) { r.s2 += p2; r.w2 += q2; }
            if (x && z) r.s3 += p3;
            if (x && y && z) r.s4 += p4;
            if (y) r.w1 += q1;
        }
        std::size_t k = 0;
        for (; k < c.dims.size(); ++k) {
            if (++combo[k] < st[c.dims[k]]->before.size()) break;
            combo[k] = 0;
        }
        if (k == c.dims.size()) break;
    }
    if (!has_fw) { r.s3 = r.s1; r.s4 = r.s2; }
    return r;
}

inline i64 transfer_cycles(i64 elements, i64 bytes_per_element, double bytes_per_cycle) {
    if (elements <= 0) return 0;
    double c = static_cast<double>(elements * bytes_per_element) / bytes_per_cycle;
    return static_cast<i64>(std::ceil(c - 1e-9));
}

}  // namespace detail

namespace detail {

// Per-dimension plans and tensor models of one program.
using PairList = std::vector<PairState>;

// Per-dimension plans and tensor models of one program. hold[i][k] lists
// the window pairs of dimension i with its first k directives fixed and the
// rest reset; step[i][k] those where directive k advances.
struct Model {
    std::size_t n = 0;
    std::vector<std::string> dim_names;
    std::vector<DimPlan> dims;
    std::vector<TensorModel> tms;
    std::vector<std::vector<PairList>> hold, step;
    std::vector<PairList> first, last;   // begin and end transitions
    bool multicast = false;
    double bpc = 1;
    i64 bpe = 1;
    // component sums by (tensor, component, pair lists of its dims)
    struct Table {
        std::vector<std::size_t> stride;
        std::vector<CompSums> sums;
    };
    mutable std::map<std::vector<const void*>, Table> tables;
};

struct Class {
    std::vector<const PairList*> per_dim;
    bool real_before = true;
};

// Counts accumulated over transitions.
struct Tally {
    i64 steps = 0, active = 0, macs = 0, latency = 0, compute = 0;
    std::vector<std::array<i64, 4>> t;   // fills, l2 reads, forwarded, writebacks
    Tally& operator+=(const Tally& o) {
        steps += o.steps;
        active += o.active;
        macs += o.macs;
        latency += o.latency;
        compute += o.compute;
        if (t.size() < o.t.size()) t.resize(o.t.size(), {0, 0, 0, 0});
        for (std::size_t i = 0; i < o.t.size(); ++i)
            for (std::size_t k = 0; k < 4; ++k) t[i][k] += o.t[i][k];
        return *this;
    }
};

inline void build_pairs(Model& M) {
    const std::size_t n = M.n;
    M.hold.assign(n, {});
    M.step.assign(n, {});
    M.first.assign(n, {});
    M.last.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = M.dims[i];
        const DimState none(static_cast<std::size_t>(p.combos));
        const DimState& root = p.levels[0][0].first;
        {
            PairCollector a, b;
            a.add(none, descend(root, p, 0, false), 1);
            b.add(descend(root, p, 0, true), none, 1);
            M.first[i] = a.take();
            M.last[i] = b.take();
        }
        for (std::size_t dp = 0; dp <= p.dirs.size(); ++dp) {
            PairCollector pc;
            for (const auto& [st, w] : p.levels[dp]) pc.add(descend(st, p, dp, true), descend(st, p, dp, false), w);
            M.hold[i].push_back(pc.take());
        }
        for (std::size_t dp = 0; dp < p.dirs.size(); ++dp) {
            PairCollector pc;
            const auto& dd = p.dirs[dp];
            for (const auto& [st, w] : p.levels[dp]) {
                auto runs = child_runs(st, dd);
                for (std::size_t r = 0; r < runs.size(); ++r) {
                    auto [b, e2] = runs[r];
                    if (e2 - b >= 2)
                        pc.add(descend(child_state(st, dd, b), p, dp + 1, true),
                               descend(child_state(st, dd, b + 1), p, dp + 1, false), w * (e2 - b - 1));
                    if (r + 1 < runs.size())
                        pc.add(descend(child_state(st, dd, e2 - 1), p, dp + 1, true),
                               descend(child_state(st, dd, e2), p, dp + 1, false), w);
                }
            }
            M.step[i].push_back(pc.take());
        }
    }
}

inline Model build_model(const MdcMapping& mdc, const LoopNest& nest, const AcceleratorConfig& hw,
                         const std::vector<std::string>& dim_names) {
    Model M;
    const std::size_t n = nest.iterators.size();
    M.n = n;
    M.dim_names = dim_names;
    M.multicast = hw.multicast;
    M.bpc = hw.noc_bytes_per_cycle();
    M.bpe = nest.bytes_per_element;
    auto& dims = M.dims;
    dims.resize(n);
    for (std::size_t i = 0; i < n; ++i) dims[i].extent = nest.iterators[i].extent;
    {
        auto lv = pe_levels(mdc, hw.num_pes);
        std::size_t level = 0, pos = 0;
        for (std::size_t r = 0; r < mdc.regions.size(); ++r) {
            for (const auto& d : mdc.regions[r].directives) {
                std::size_t i = static_cast<std::size_t>(
                    std::find(dim_names.begin(), dim_names.end(), d.dim) - dim_names.begin());
                DimDirective dd{d.kind, d.size, pos++, 1, 1};
                if (d.kind == DirectiveKind::SpatialMap) {
                    i64 inner = level + 1 < lv.size() ? lv[level + 1] : 1;
                    dd.units = std::max<i64>(1, lv[level] / inner);
                }
                dims[i].dirs.push_back(dd);
            }
            if (r < mdc.clusters.size() && mdc.clusters[r] > 1) ++level;
        }
    }
    // Units beyond the largest step count never work; trim them, then
    // assign combination strides (first spatial axis most significant).
    for (auto& p : dims) {
        i64 max_len = p.extent;
        for (auto& d : p.dirs) {
            i64 steps = steps_of(max_len, d.size);
            if (d.kind == DirectiveKind::SpatialMap) d.units = std::min(d.units, steps);
            max_len = std::min(max_len, d.size);
        }
        p.combos = 1;
        for (auto it = p.dirs.rbegin(); it != p.dirs.rend(); ++it)
            if (it->kind == DirectiveKind::SpatialMap) {
                it->stride = p.combos;
                p.combos *= it->units;
            }
        build_levels(p);
    }

    for (const auto& tname : nest.tensors()) {
        TensorModel tm;
        tm.name = tname;
        const auto& first = nest.first_ref(tname);
        tm.tdims.resize(first.dims.size());
        std::vector<bool> used(n, false);
        std::vector<bool> miv(n, false);
        for (const auto& r : nest.refs) {
            if (r.tensor != tname) continue;
            tm.written = tm.written || r.writes();
            for (std::size_t k = 0; k < r.dims.size() && k < tm.tdims.size(); ++k) {
                SubExpr s;
                auto c = r.dims[k].sub.canonical();
                s.constant = c.constant;
                for (const auto& t : c.terms) {
                    auto i = nest.index_of(t.iter);
                    s.terms.push_back({i, t.coeff});
                    used[i] = true;
                    if (c.terms.size() > 1) miv[i] = true;
                }
                tm.tdims[k].refs.push_back(s);
            }
        }
        // components: union of dims sharing a tensor dim
        std::vector<std::size_t> parent(n);
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&](std::size_t a) {
            while (parent[a] != a) a = parent[a] = parent[parent[a]];
            return a;
        };
        for (const auto& td : tm.tdims) {
            std::optional<std::size_t> root;
            for (const auto& s : td.refs)
                for (const auto& t : s.terms) {
                    if (!root) root = find(t.dim);
                    else parent[find(t.dim)] = *root;
                }
        }
        std::map<std::size_t, std::size_t> comp_of;
        for (std::size_t i = 0; i < n; ++i) {
            if (!used[i]) { tm.other_dims.push_back(i); continue; }
            auto rt = find(i);
            auto [it, fresh] = comp_of.emplace(rt, tm.comps.size());
            if (fresh) tm.comps.emplace_back();
            tm.comps[it->second].dims.push_back(i);
        }
        for (std::size_t k = 0; k < tm.tdims.size(); ++k) {
            for (const auto& s : tm.tdims[k].refs)
                if (!s.terms.empty()) {
                    tm.comps[comp_of[find(s.terms[0].dim)]].tdims.push_back(k);
                    break;
                }
        }
        // innermost spatial axis over an MIV-indexed dim
        std::size_t best_pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!miv[i]) continue;
            for (const auto& d : dims[i].dirs)
                if (d.kind == DirectiveKind::SpatialMap && (!tm.fw_dim || d.pos > best_pos)) {
                    tm.fw_dim = i;
                    tm.fw_stride = d.stride;
                    tm.fw_units = d.units;
                    best_pos = d.pos;
                }
        }
        M.tms.push_back(std::move(tm));
    }
    build_pairs(M);
    return M;
}

inline Class begin_class(const Model& M) {
    Class c;
    c.real_before = false;
    for (std::size_t i = 0; i < M.n; ++i) c.per_dim.push_back(&M.first[i]);
    return c;
}

inline Class end_class(const Model& M) {
    Class c;
    for (std::size_t i = 0; i < M.n; ++i) c.per_dim.push_back(&M.last[i]);
    return c;
}

// Transitions where directive `depth[dim]` of `dim` advances; every other
// dimension i has its first depth[i] directives fixed and the rest reset.
// Returns nullopt when no such transition exists.
inline std::optional<Class> step_class(const Model& M, std::size_t dim, const std::vector<std::size_t>& depth) {
    Class c;
    for (std::size_t i = 0; i < M.n; ++i) {
        const PairList& l = i == dim ? M.step[i][depth[i]] : M.hold[i][depth[i]];
        if (l.empty()) return std::nullopt;
        c.per_dim.push_back(&l);
    }
    return c;
}

// Depths induced by program position: directives before `pos` are fixed.
inline std::vector<std::size_t> depths_at(const Model& M, std::size_t pos) {
    std::vector<std::size_t> depth(M.n);
    for (std::size_t i = 0; i < M.n; ++i) {
        const auto& d = M.dims[i].dirs;
        depth[i] = static_cast<std::size_t>(
            std::count_if(d.begin(), d.end(), [&](const DimDirective& x) { return x.pos < pos; }));
    }
    return depth;
}

inline Tally tally_class(const Model& M, const Class& cls) {
    Tally out;
    const std::size_t n = M.n;
    out.t.assign(M.tms.size(), {0, 0, 0, 0});
    std::vector<const PairState*> pick(n, nullptr);
    // component sums depend on the component's dimensions only
    std::vector<std::vector<const Model::Table*>> tables(M.tms.size());
    for (std::size_t t = 0; t < M.tms.size(); ++t)
        for (std::size_t ci = 0; ci < M.tms[t].comps.size(); ++ci) {
            const auto& c = M.tms[t].comps[ci];
            std::vector<const void*> key{&M.tms[t], &c};
            for (auto d : c.dims) key.push_back(cls.per_dim[d]);
            auto [it, fresh] = M.tables.try_emplace(std::move(key));
            Model::Table& tb = it->second;
            if (fresh) {
                std::size_t size = 1;
                for (auto d : c.dims) {
                    tb.stride.push_back(size);
                    size *= cls.per_dim[d]->size();
                }
                tb.sums.resize(size);
                std::vector<std::size_t> ix(c.dims.size(), 0);
                for (std::size_t f = 0; f < size; ++f) {
                    for (std::size_t k = 0; k < c.dims.size(); ++k)
                        pick[c.dims[k]] = &(*cls.per_dim[c.dims[k]])[ix[k]];
                    tb.sums[f] = component_sums(M.tms[t], c, pick, n);
                    for (std::size_t k = 0; k < ix.size(); ++k) {
                        if (++ix[k] < cls.per_dim[c.dims[k]]->size()) break;
                        ix[k] = 0;
                    }
                }
            }
            tables[t].push_back(&tb);
        }
    std::vector<std::size_t> idx(n, 0);
    while (true) {
        i64 mult = 1, active = 1, cmax = 1, macs = 1;
        for (std::size_t i = 0; i < n; ++i) {
            pick[i] = &(*cls.per_dim[i])[idx[i]];
            mult *= pick[i]->count;
            active *= pick[i]->valid_before;
            cmax *= pick[i]->max_len_before;
            macs *= pick[i]->sum_len_before;
        }
        if (!cls.real_before) cmax = 0;
        else {
            out.steps += mult;
            out.active += mult * active;
            out.macs += mult * macs;
            out.compute += mult * cmax;
        }
        i64 moved = 0;
        for (std::size_t t = 0; t < M.tms.size(); ++t) {
            const auto& tm = M.tms[t];
            i64 p1 = 1, p2 = 1, p3 = 1, p4 = 1, w1 = 1, w2 = 1;
            for (std::size_t ci = 0; ci < tm.comps.size(); ++ci) {
                const auto& tb = *tables[t][ci];
                const auto& cd = tm.comps[ci].dims;
                std::size_t f = 0;
                for (std::size_t k = 0; k < cd.size(); ++k) f += idx[cd[k]] * tb.stride[k];
                const auto& s = tb.sums[f];
                p1 *= s.s1; p2 *= s.s2; p3 *= s.s3; p4 *= s.s4; w1 *= s.w1; w2 *= s.w2;
            }
            if (!tm.fw_dim) p3 = p4 = 0;
            i64 nb = 1, nab = 1, na = 1, k1 = 1, k2 = 1;
            for (auto d : tm.other_dims) {
                nb *= pick[d]->valid_after;
                na *= pick[d]->valid_before;
                nab *= pick[d]->valid_both;
                k1 *= pick[d]->valid_after > 0;
                k2 *= pick[d]->valid_after > 0 && pick[d]->valid_after == pick[d]->valid_both;
            }
            i64 fill = nb * p1 - nab * p2;
            i64 reads, fw;
            if (M.multicast) {
                fw = k1 * p3 - k2 * p4;
                reads = (k1 * p1 - k2 * p2) - fw;
            } else {
                fw = nb * p3 - nab * p4;
                reads = fill - fw;
            }
            i64 wb = tm.written ? na * w1 - nab * w2 : 0;
            auto& tc = out.t[t];
            tc[0] += mult * fill;
            tc[1] += mult * reads;
            tc[2] += mult * fw;
            tc[3] += mult * wb;
            moved += reads + fw + wb;
        }
        out.latency += mult * std::max(cmax, transfer_cycles(moved, M.bpe, M.bpc));
        std::size_t k = 0;
        for (; k < n; ++k) {
            if (++idx[k] < cls.per_dim[k]->size()) break;
            idx[k] = 0;
        }
        if (k == n) break;
    }
    return out;
}

// Every transition of the program.
inline Tally tally_program(const Model& M) {
    Tally total;
    total.t.assign(M.tms.size(), {0, 0, 0, 0});
    total += tally_class(M, begin_class(M));
    std::vector<std::pair<std::size_t, std::size_t>> all;   // (pos, dim)
    for (std::size_t i = 0; i < M.n; ++i)
        for (const auto& d : M.dims[i].dirs) all.push_back({d.pos, i});
    std::sort(all.begin(), all.end());
    for (auto [pos, dim] : all)
        if (auto c = step_class(M, dim, depths_at(M, pos))) total += tally_class(M, *c);
    total += tally_class(M, end_class(M));
    return total;
}

// Per-reference DRAM bytes of the level-3 schedule, by tensor.
inline std::vector<std::pair<double, double>> dram_bytes(const LoopNest& nest, const AcceleratorConfig& hw,
                                                         const std::vector<i64>& t3, const Layout& layout,
                                                         const PruningFlags& flags) {
    std::vector<std::pair<double, double>> out(nest.tensors().size(), {0.0, 0.0});
    const i64 b = block_elements(nest, hw);
    double tiles = 1;
    for (std::size_t i = 0; i < nest.iterators.size(); ++i)
        tiles *= static_cast<double>((nest.iterators[i].extent + t3[i] - 1) / t3[i]);
    for (const auto& r : nest.refs) {
        double bytes = static_cast<double>(distinct_blocks(nest, r, t3, layout.at(tensor_index(nest, r.tensor)), b,
                                                           flags.db_mode, flags.absent_loop_factor)) *
                       tiles * static_cast<double>(hw.dram_block_bytes);
        auto& tc = out[tensor_index(nest, r.tensor)];
        if (r.access != Access::Write) tc.first += bytes;
        if (r.access != Access::Read) tc.second += bytes;
    }
    return out;
}

// Byte counts per access class.
inline AccessCounts access_of(const Tally& tl, const LoopNest& nest, const std::vector<std::pair<double, double>>& dram,
                              i64 bpe) {
    i64 read_refs = 0, write_refs = 0;
    for (const auto& r : nest.refs) {
        if (r.access != Access::Write) ++read_refs;
        if (r.writes()) ++write_refs;
    }
    const double B = static_cast<double>(bpe);
    AccessCounts a;
    a.l1_read = static_cast<double>(tl.macs * read_refs) * B;
    a.l1_write = static_cast<double>(tl.macs * write_refs) * B;
    for (std::size_t t = 0; t < dram.size(); ++t) {
        const std::array<i64, 4> c = t < tl.t.size() ? tl.t[t] : std::array<i64, 4>{0, 0, 0, 0};
        a.l1_write += static_cast<double>(c[0]) * B;
        a.l2_read += static_cast<double>(c[1]) * B + dram[t].second;
        a.l2_write += static_cast<double>(c[3]) * B + dram[t].first;
        a.noc += static_cast<double>(c[1] + c[2] + c[3]) * B;
        a.dram_read += dram[t].first;
        a.dram_write += dram[t].second;
    }
    return a;
}

inline double energy_of(const AccessCounts& a, i64 macs, const EnergyProfile& e) {
    return e.mac * static_cast<double>(macs) + e.l1_read * a.l1_read + e.l1_write * a.l1_write +
           e.l2_read * a.l2_read + e.l2_write * a.l2_write + e.noc_per_byte_per_hop * e.hops * a.noc +
           e.dram_read * a.dram_read + e.dram_write * a.dram_write;
}

// Report from transition counts. `l1_elements` is the per-PE buffer need.
inline CostReport make_report(const Tally& tl, const Model& M, const LoopNest& nest, const AcceleratorConfig& hw,
                              const EnergyProfile& e, const std::vector<std::pair<double, double>>& dram,
                              i64 l1_elements, const std::vector<i64>& t3) {
    CostReport out;
    out.latency_cycles = tl.latency;
    out.steps = tl.steps;
    out.active_pe_steps = tl.active;
    out.macs = tl.macs;
    for (std::size_t t = 0; t < M.tms.size(); ++t) {
        TensorCounts tc{M.tms[t].name};
        if (t < tl.t.size()) {
            tc.fills = tl.t[t][0];
            tc.l2_reads = tl.t[t][1];
            tc.forwarded = tl.t[t][2];
            tc.writebacks = tl.t[t][3];
        }
        tc.dram_read_bytes = dram[t].first;
        tc.dram_write_bytes = dram[t].second;
        out.tensors.push_back(tc);
    }
    out.access = access_of(tl, nest, dram, M.bpe);
    out.energy = energy_of(out.access, out.macs, e);
    out.runtime_seconds = static_cast<double>(out.latency_cycles) / hw.clock_hz();
    out.edp = out.energy * out.runtime_seconds;
    out.pe_utilization = out.steps > 0 ? static_cast<double>(out.active_pe_steps) /
                                             (static_cast<double>(out.steps) * static_cast<double>(hw.num_pes))
                                       : 0.0;
    out.l1_required_bytes = 2 * l1_elements * M.bpe;
    out.l2_required_bytes = 2 * total_footprint(nest, t3) * M.bpe;
    return out;
}

}  // namespace detail

inline CostReport analyze_mapping(const MdcMapping& mdc, const LoopNest& nest, const AcceleratorConfig& hw,
                                  const EnergyProfile& e, const AnalysisOptions& opt = {}) {
    using namespace detail;
    std::optional<ConformabilityReport> own;
    if (!opt.report) own = check_conformable(nest);
    const ConformabilityReport& rep = opt.report ? *opt.report : *own;
    if (!rep.verdict) throw AnalysisError("nest '" + nest.name + "' is not conformable");
    auto errs = validate_mdc(mdc, nest, rep, hw.num_pes);
    if (!errs.empty()) throw AnalysisError(errs.front());
    std::vector<std::string> dim_names;
    try {
        dim_names = iterator_dims(nest, rep);
    } catch (const TransformError& ex) {
        throw AnalysisError(ex.what());
    }
    const Model M = build_model(mdc, nest, hw, dim_names);
    const Tally tl = tally_program(M);
    if (tl.macs != nest.total_macs())
        throw AnalysisError("program executes " + std::to_string(tl.macs) + " of " +
                            std::to_string(nest.total_macs()) + " iterations");
    std::vector<i64> t3 = opt.t3 ? *opt.t3 : implied_level3(mdc, nest, dim_names);
    Layout layout = opt.layout ? *opt.layout : row_major_layout(nest);
    i64 l1 = 0;
    for (auto v : directive_volumes(mdc, nest, rep)) l1 += v;
    return make_report(tl, M, nest, hw, e, dram_bytes(nest, hw, t3, layout, opt.flags), l1, t3);
}

inline CostReport analyze_mapping(const MdcMapping& mdc, const LoopNest& nest, const AcceleratorConfig& hw,
                                  const AnalysisOptions& opt = {}) {
    return analyze_mapping(mdc, nest, hw, hw.energy, opt);
}

}  // namespace mdcmap
