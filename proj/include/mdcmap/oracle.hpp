// SPDX-License-Identifier: Apache-2.0
//
// Brute-force references for the two cost models. Nothing here calls into
// the analytical code: block counts enumerate iterations, and the
// simulator executes directive programs step by step on explicit element
// sets.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdcmap/conformability.hpp"
#include "mdcmap/hardware.hpp"
#include "mdcmap/loopnest.hpp"
#include "mdcmap/mdc.hpp"

namespace mdcmap {

struct ScaleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unique DRAM blocks touched by `ref` inside one level-3 tile. Blocks are
// runs of b elements along dimension `innermost`, aligned at multiples of b.
inline i64 exact_distinct_blocks(const LoopNest& nest, const TensorRef& ref, const std::vector<i64>& t3,
                                 std::size_t innermost, i64 b, const std::vector<i64>& origin = {}) {
    const std::size_t n = nest.iterators.size();
    if (t3.size() != n) throw std::invalid_argument("tile size count mismatch");
    if (b < 1) throw std::invalid_argument("block size must be >= 1");
    double vol = 1;
    for (auto t : t3) vol *= static_cast<double>(t);
    if (vol > 1e7) throw ScaleError("tile has more than 1e7 iterations");
    std::vector<i64> lo(n, 0);
    for (std::size_t i = 0; i < origin.size() && i < n; ++i) lo[i] = origin[i];
    std::vector<std::size_t> pos(ref.dims.size());
    std::vector<i64> coeff_by_iter;   // flattened [dim][iter]
    for (std::size_t k = 0; k < ref.dims.size(); ++k)
        for (std::size_t i = 0; i < n; ++i) coeff_by_iter.push_back(ref.dims[k].sub.coeff_of(nest.iterators[i].name));

    std::set<std::vector<i64>> blocks;
    std::vector<i64> it(lo);
    std::vector<i64> hi(n);
    for (std::size_t i = 0; i < n; ++i) hi[i] = std::min(lo[i] + t3[i], nest.iterators[i].extent);
    for (std::size_t i = 0; i < n; ++i)
        if (lo[i] >= hi[i]) return 0;
    while (true) {
        std::vector<i64> id(ref.dims.size());
        for (std::size_t k = 0; k < ref.dims.size(); ++k) {
            i64 v = ref.dims[k].sub.constant;
            for (std::size_t i = 0; i < n; ++i) v += coeff_by_iter[k * n + i] * it[i];
            if (k == innermost) v = v >= 0 ? v / b : -((-v + b - 1) / b);
            id[k] = v;
        }
        blocks.insert(std::move(id));
        std::size_t i = n;
        while (i > 0) {
            --i;
            if (++it[i] < hi[i]) break;
            it[i] = lo[i];
            if (i == 0) return static_cast<i64>(blocks.size());
        }
        if (n == 0) return static_cast<i64>(blocks.size());
    }
}

struct PeWork {
    int pe = 0;
    std::vector<i64> lo, len;   // iteration box, nest order
};

struct SimStep {
    std::vector<i64> time;                  // step index of every directive
    std::vector<PeWork> work;               // active PEs only
    bool edge = false;                      // some active window is truncated
    std::vector<i64> l2_reads, forwarded, writebacks, fills;   // per tensor, arriving for this step
};

struct SimTrace {
    std::vector<std::string> tensors;
    std::vector<SimStep> steps;
    std::vector<i64> final_writebacks;      // per tensor, after the last step
    int pes = 0;                            // PEs addressable by the program
    i64 latency_cycles = 0;
    i64 macs = 0;

    i64 active_pe_steps() const {
        i64 s = 0;
        for (const auto& st : steps) s += static_cast<i64>(st.work.size());
        return s;
    }
    i64 total(const std::vector<i64> SimStep::*f, std::size_t t) const {
        i64 s = 0;
        for (const auto& st : steps) s += (st.*f)[t];
        return s;
    }
    i64 total_writebacks(std::size_t t) const { return total(&SimStep::writebacks, t) + final_writebacks[t]; }
};

namespace oracle_detail {

struct Dir {
    bool spatial;
    i64 size, offset;
    std::size_t iter;
    i64 units = 1;
    i64 radix = 1;   // place of this axis in the PE id
};

struct PeState {
    bool valid = true;
    std::vector<i64> lo, len;
};

}  // namespace oracle_detail

inline SimTrace simulate_mdc_reference(const MdcMapping& mdc, const LoopNest& nest, const AcceleratorConfig& hw) {
    using oracle_detail::Dir;
    using oracle_detail::PeState;
    if (nest.total_macs() > 1000000) throw ScaleError("simulation limited to 1e6 MACs");
    if (hw.num_pes > 64) throw ScaleError("simulation limited to 64 PEs");
    const auto rep = check_conformable(nest);
    const std::size_t n = nest.iterators.size();

    // dimension variable of each iterator
    std::vector<std::string> dimvar(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& d : rep.independent_dims)
            if (d.iterators.size() == 1 && d.iterators[0] == nest.iterators[i].name) dimvar[i] = d.dim_var;
        if (dimvar[i].empty()) throw std::invalid_argument("iterator without independent dimension");
    }

    // PE levels and spatial axes
    std::vector<i64> level_size{hw.num_pes};
    for (auto c : mdc.clusters)
        if (c > 1) level_size.push_back(c);
    std::vector<Dir> dirs;
    std::size_t level = 0;
    for (std::size_t r = 0; r < mdc.regions.size(); ++r) {
        for (const auto& d : mdc.regions[r].directives) {
            Dir x{d.kind == DirectiveKind::SpatialMap, d.size, d.offset, n};
            for (std::size_t i = 0; i < n; ++i)
                if (dimvar[i] == d.dim) x.iter = i;
            if (x.iter == n) throw std::invalid_argument("directive on unknown dimension " + d.dim);
            if (x.spatial) {
                i64 inner = level + 1 < level_size.size() ? level_size[level + 1] : 1;
                x.units = level_size[level] / inner;
            }
            dirs.push_back(x);
        }
        if (r < mdc.clusters.size() && mdc.clusters[r] > 1) ++level;
    }
    i64 pes = 1;
    for (auto it = dirs.rbegin(); it != dirs.rend(); ++it)
        if (it->spatial) {
            it->radix = pes;
            pes *= it->units;
        }
    if (pes > hw.num_pes) throw std::invalid_argument("program addresses more PEs than available");

    // full window of the innermost directive on each iterator
    std::vector<i64> leaf_size = nest.extents();
    for (const auto& d : dirs) leaf_size[d.iter] = std::min(leaf_size[d.iter], d.size);

    SimTrace tr;
    tr.tensors = nest.tensors();
    tr.pes = static_cast<int>(pes);
    const std::size_t nt = tr.tensors.size();

    // tensor element ids for a PE box
    auto elements = [&](const std::string& tensor, const std::vector<i64>& lo, const std::vector<i64>& len) {
        std::set<i64> out;
        std::vector<i64> p(lo);
        while (true) {
            for (const auto& r : nest.refs) {
                if (r.tensor != tensor) continue;
                i64 id = 0;
                for (const auto& d : r.dims) {
                    i64 v = d.sub.constant;
                    for (const auto& t : d.sub.terms) v += t.coeff * p[nest.index_of(t.iter)];
                    id = id * d.extent + v;
                }
                out.insert(id);
            }
            std::size_t i = n;
            while (i > 0) {
                --i;
                if (++p[i] < lo[i] + len[i]) break;
                p[i] = lo[i];
                if (i == 0) return out;
            }
            if (n == 0) return out;
        }
    };

    // per tensor: forwarding axis and the axes in its multicast key
    std::vector<int> fw_axis(nt, -1);
    std::vector<std::vector<std::size_t>> key_axes(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        std::set<std::size_t> used, miv;
        for (const auto& r : nest.refs) {
            if (r.tensor != tr.tensors[t]) continue;
            for (const auto& d : r.dims) {
                for (const auto& term : d.sub.terms) used.insert(nest.index_of(term.iter));
                if (d.sub.canonical().terms.size() > 1)
                    for (const auto& term : d.sub.terms) miv.insert(nest.index_of(term.iter));
            }
        }
        for (std::size_t k = 0; k < dirs.size(); ++k) {
            if (!dirs[k].spatial) continue;
            if (used.count(dirs[k].iter)) key_axes[t].push_back(k);
            if (miv.count(dirs[k].iter)) fw_axis[t] = static_cast<int>(k);
        }
    }
    std::vector<bool> written(nt, false);
    for (const auto& r : nest.refs)
        if (r.writes())
            written[std::find(tr.tensors.begin(), tr.tensors.end(), r.tensor) - tr.tensors.begin()] = true;

    auto digit_of = [&](i64 pe, const Dir& d) { return (pe / d.radix) % d.units; };

    // previous step contents per PE and tensor
    std::vector<std::vector<std::set<i64>>> prev(static_cast<std::size_t>(pes), std::vector<std::set<i64>>(nt));
    std::vector<bool> prev_active(static_cast<std::size_t>(pes), false);
    i64 prev_compute = 0;
    const double bpc = hw.noc_bytes_per_cycle();
    auto cycles = [&](i64 elems) -> i64 {
        if (elems <= 0) return 0;
        return static_cast<i64>(std::ceil(static_cast<double>(elems * nest.bytes_per_element) / bpc - 1e-9));
    };

    std::vector<i64> time(dirs.size(), 0);
    auto leaf = [&](const std::vector<PeState>& st) {
        SimStep step;
        step.time = time;
        step.l2_reads.assign(nt, 0);
        step.forwarded.assign(nt, 0);
        step.writebacks.assign(nt, 0);
        step.fills.assign(nt, 0);
        std::vector<std::vector<std::set<i64>>> cur(static_cast<std::size_t>(pes), std::vector<std::set<i64>>(nt));
        std::vector<bool> active(static_cast<std::size_t>(pes), false);
        i64 compute = 0;
        for (i64 p = 0; p < pes; ++p) {
            const auto& s = st[static_cast<std::size_t>(p)];
            if (!s.valid) continue;
            bool ok = std::all_of(s.len.begin(), s.len.end(), [](i64 l) { return l > 0; });
            if (!ok) continue;
            active[static_cast<std::size_t>(p)] = true;
            step.work.push_back({static_cast<int>(p), s.lo, s.len});
            i64 m = 1;
            for (std::size_t i = 0; i < n; ++i) {
                m *= s.len[i];
                if (s.len[i] < leaf_size[i]) step.edge = true;
            }
            compute = std::max(compute, m);
            tr.macs += m;
            for (std::size_t t = 0; t < nt; ++t) cur[static_cast<std::size_t>(p)][t] = elements(tr.tensors[t], s.lo, s.len);
        }
        i64 moved = 0;
        for (std::size_t t = 0; t < nt; ++t) {
            std::map<std::vector<i64>, std::pair<std::set<i64>, std::set<i64>>> groups;   // need, forwarded
            for (i64 p = 0; p < pes; ++p) {
                auto pu = static_cast<std::size_t>(p);
                if (written[t]) {
                    for (auto v : prev[pu][t])
                        if (!cur[pu][t].count(v)) ++step.writebacks[t];
                }
                if (!active[pu]) continue;
                std::set<i64> need;
                for (auto v : cur[pu][t])
                    if (!prev[pu][t].count(v)) need.insert(v);
                step.fills[t] += static_cast<i64>(need.size());
                std::set<i64> fw;
                if (fw_axis[t] >= 0) {
                    const Dir& d = dirs[static_cast<std::size_t>(fw_axis[t])];
                    if (digit_of(p, d) > 0) {
                        auto q = static_cast<std::size_t>(p - d.radix);
                        if (active[q])
                            for (auto v : need)
                                if (cur[q][t].count(v)) fw.insert(v);
                    }
                }
                if (!hw.multicast) {
                    step.forwarded[t] += static_cast<i64>(fw.size());
                    step.l2_reads[t] += static_cast<i64>(need.size() - fw.size());
                } else {
                    std::vector<i64> key;
                    for (auto k : key_axes[t]) key.push_back(digit_of(p, dirs[k]));
                    auto& g = groups[key];
                    for (auto v : need) (fw.count(v) ? g.second : g.first).insert(v);
                }
            }
            for (auto& [key, g] : groups) {
                for (auto v : g.second) g.first.erase(v);
                step.l2_reads[t] += static_cast<i64>(g.first.size());
                step.forwarded[t] += static_cast<i64>(g.second.size());
            }
            moved += step.l2_reads[t] + step.forwarded[t] + step.writebacks[t];
        }
        tr.latency_cycles += std::max(prev_compute, cycles(moved));
        prev_compute = compute;
        prev = std::move(cur);
        prev_active = active;
        tr.steps.push_back(std::move(step));
    };

    std::vector<PeState> root(static_cast<std::size_t>(pes));
    for (auto& s : root) {
        s.lo.assign(n, 0);
        s.len = nest.extents();
    }
    // depth-first over directive positions
    auto rec = [&](auto&& self, std::size_t j, const std::vector<PeState>& st) -> void {
        if (j == dirs.size()) { leaf(st); return; }
        const Dir& d = dirs[j];
        auto steps_for = [&](const PeState& s) -> i64 {
            i64 L = s.len[d.iter];
            return L <= 0 ? 0 : 1 + (std::max<i64>(0, L - d.size) + d.offset - 1) / d.offset;
        };
        i64 range = 0;
        for (i64 p = 0; p < pes; ++p) {
            const auto& s = st[static_cast<std::size_t>(p)];
            if (!s.valid) continue;
            i64 c = steps_for(s);
            if (d.spatial) {
                i64 g = digit_of(p, d);
                c = c > g ? (c - g + d.units - 1) / d.units : 0;
            }
            range = std::max(range, c);
        }
        for (i64 idx = 0; idx < range; ++idx) {
            std::vector<PeState> next = st;
            for (i64 p = 0; p < pes; ++p) {
                auto& s = next[static_cast<std::size_t>(p)];
                if (!s.valid) continue;
                i64 k = d.spatial ? idx * d.units + digit_of(p, d) : idx;
                if (k >= steps_for(s)) { s.valid = false; continue; }
                i64 L = s.len[d.iter];
                s.lo[d.iter] += k * d.offset;
                s.len[d.iter] = std::max<i64>(0, std::min(d.size, L - k * d.offset));
            }
            time[j] = idx;
            self(self, j + 1, next);
        }
        time[j] = 0;
    };
    rec(rec, 0, root);

    tr.final_writebacks.assign(nt, 0);
    i64 flush = 0;
    for (std::size_t t = 0; t < nt; ++t) {
        if (!written[t]) continue;
        for (i64 p = 0; p < pes; ++p) tr.final_writebacks[t] += static_cast<i64>(prev[static_cast<std::size_t>(p)][t].size());
        flush += tr.final_writebacks[t];
    }
    tr.latency_cycles += std::max(prev_compute, cycles(flush));
    return tr;
}

}  // namespace mdcmap
