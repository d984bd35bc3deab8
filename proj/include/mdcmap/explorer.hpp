// SPDX-License-Identifier: Apache-2.0
//
// Decoupled search: the off-chip plan fixes t3, order3 and the layout, then
// every on-chip point (order2, t2, t1) is transformed and costed. Baseline
// dataflow styles reuse the same pass as filters.
#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mdcmap/conformability.hpp"
#include "mdcmap/hardware.hpp"
#include "mdcmap/mapping.hpp"
#include "mdcmap/mdc.hpp"
#include "mdcmap/offchip_cost.hpp"
#include "mdcmap/onchip_cost.hpp"

namespace mdcmap {

struct StyleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SearchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class SearchGoal { Runtime = 0, Energy = 1, Edp = 2 };
inline constexpr std::array<SearchGoal, 3> kAllGoals{SearchGoal::Runtime, SearchGoal::Energy, SearchGoal::Edp};

inline const char* to_string(SearchGoal g) {
    switch (g) {
    case SearchGoal::Runtime: return "runtime";
    case SearchGoal::Energy: return "energy";
    case SearchGoal::Edp: return "edp";
    }
    return "?";
}
inline SearchGoal parse_goal(const std::string& s) {
    for (auto g : kAllGoals)
        if (s == to_string(g)) return g;
    throw std::invalid_argument("unknown goal '" + s + "' (runtime, energy, edp)");
}

enum class BaselineStyle { RowStationary, WeightStationary, OutputStationary, InterstellarLike, DmazeLike };
inline constexpr std::array<BaselineStyle, 5> kAllStyles{BaselineStyle::RowStationary, BaselineStyle::WeightStationary,
                                                         BaselineStyle::OutputStationary,
                                                         BaselineStyle::InterstellarLike, BaselineStyle::DmazeLike};

inline const char* to_string(BaselineStyle s) {
    switch (s) {
    case BaselineStyle::RowStationary: return "row_stationary";
    case BaselineStyle::WeightStationary: return "weight_stationary";
    case BaselineStyle::OutputStationary: return "output_stationary";
    case BaselineStyle::InterstellarLike: return "interstellar_like";
    case BaselineStyle::DmazeLike: return "dmaze_like";
    }
    return "?";
}
inline BaselineStyle parse_style(const std::string& s) {
    for (auto b : kAllStyles)
        if (s == to_string(b)) return b;
    throw std::invalid_argument("unknown baseline style '" + s + "'");
}

// CONV2D roles (N K C P Q R S) mapped onto the iterators of a nest. GEMM
// C[m][n] += A[m][k] B[k][n] is the 1x1 convolution with K=n, C=k, P=m.
inline std::map<char, std::string> conv_roles(const LoopNest& nest) {
    std::map<char, std::string> r;
    auto has = [&](const char* it) { return nest.has_iterator(it); };
    if (has("p") && has("q") && has("r") && has("s") && has("c")) {
        if (has("n")) r['N'] = "n";
        r['K'] = has("k") ? "k" : "c";   // depthwise: channels are the output channels
        r['C'] = "c";
        r['P'] = "p";
        r['Q'] = "q";
        r['R'] = "r";
        r['S'] = "s";
    } else if (has("m") && has("n") && has("k") && nest.iterators.size() == 3) {
        r['K'] = "n";
        r['C'] = "k";
        r['P'] = "m";
    }
    return r;
}

// Parallel-dimension set and order2 constraint of a style.
struct StyleRule {
    std::vector<std::size_t> parallel;      // iterators allowed to have t2 > 1
    std::vector<bool> inner_group;          // iterators that must be innermost in order2 (empty = none)
};

inline StyleRule style_rule(const LoopNest& nest, BaselineStyle st) {
    auto roles = conv_roles(nest);
    auto need = [&](std::initializer_list<char> rs) {
        std::vector<std::size_t> out;
        for (char c : rs) {
            auto it = roles.find(c);
            if (it == roles.end())
                throw StyleError(std::string(to_string(st)) + " needs CONV2D dimension " + c + ", absent from '" +
                                 nest.name + "'");
            auto i = nest.index_of(it->second);
            if (std::find(out.begin(), out.end(), i) == out.end()) out.push_back(i);
        }
        return out;
    };
    StyleRule r;
    const std::size_t n = nest.iterators.size();
    switch (st) {
    case BaselineStyle::RowStationary: r.parallel = need({'P', 'S'}); break;
    case BaselineStyle::WeightStationary: {
        r.parallel = need({'C', 'K'});
        r.inner_group.assign(n, false);
        // conv filter W, gemm B[k][n]
        const std::string w = nest.has_iterator("m") && !nest.has_iterator("p") ? "B" : "W";
        for (std::size_t i = 0; i < n; ++i)
            for (const auto& ref : nest.refs)
                if (ref.tensor == w && ref.uses(nest.iterators[i].name)) r.inner_group[i] = true;
        break;
    }
    case BaselineStyle::OutputStationary: {
        r.parallel = need({'P', 'Q'});
        r.inner_group.assign(n, false);
        auto out = nest.output_tensor();
        for (std::size_t i = 0; i < n; ++i) {
            bool used = false;
            for (const auto& ref : nest.refs)
                if (out && ref.tensor == *out && ref.uses(nest.iterators[i].name)) used = true;
            r.inner_group[i] = !used;   // reduction iterators
        }
        break;
    }
    case BaselineStyle::InterstellarLike: r.parallel = need({'C', 'K'}); break;
    case BaselineStyle::DmazeLike: r.parallel = need({'K'}); break;
    }
    return r;
}

struct GoalBest {
    bool found = false;
    Mapping mapping;
    MdcMapping mdc;
    CostReport report;
};

struct SearchResult {
    std::string label;                       // "decoupled" or the style name
    std::array<GoalBest, 3> best;            // indexed by SearchGoal
    std::vector<SearchGoal> goals;           // requested goals
    OffchipPlan plan;
    SpaceStats space;
    i64 evaluated = 0;                       // distinct cost evaluations credited to this search
    double search_seconds = 0;               // wall clock, not part of reports

    const GoalBest& get(SearchGoal g) const { return best[static_cast<std::size_t>(g)]; }
};

struct StyleOutcome {
    BaselineStyle style;
    bool applicable = true;
    std::string reason;
    SearchResult result;
};

struct ExploreResult {
    SearchResult decoupled;
    std::vector<StyleOutcome> baselines;
};

struct Roofline {
    double gops = 0;
    double compute_seconds = 0;
    double bandwidth_seconds = 0;
    double peak_seconds = 0;
    std::string bound;   // "compute" or "bandwidth"
};

inline Roofline roofline_peak(const LoopNest& nest, const AcceleratorConfig& hw) {
    Roofline r;
    r.gops = hw.gops();
    double macs = 1;
    for (const auto& l : nest.iterators) macs *= static_cast<double>(l.extent);
    if (nest.iterators.empty()) macs = 0;
    r.compute_seconds = 2.0 * macs / (r.gops * 1e9);
    double bytes = 0;
    for (const auto& t : nest.tensors()) {
        double e = 1;
        for (const auto& d : nest.first_ref(t).dims) e *= static_cast<double>(d.extent);
        bytes += e * static_cast<double>(nest.bytes_per_element);
    }
    r.bandwidth_seconds = bytes / hw.noc_bytes_per_sec();
    r.peak_seconds = std::max(r.compute_seconds, r.bandwidth_seconds);
    r.bound = r.compute_seconds >= r.bandwidth_seconds ? "compute" : "bandwidth";
    return r;
}

namespace detail {

struct Cand {
    i64 latency = 0;
    double energy = 0, edp = 0;
    Mapping mapping;
    std::vector<i64> key;
};

inline double goal_value(i64 latency, double energy, double edp, SearchGoal g) {
    switch (g) {
    case SearchGoal::Runtime: return static_cast<double>(latency);
    case SearchGoal::Energy: return energy;
    case SearchGoal::Edp: return edp;
    }
    return 0;
}

// Goal value, then runtime, then mapping encoding.
struct Tracker {
    std::array<std::optional<Cand>, 3> best;
    i64 evaluated = 0;

    // `make` builds the mapping; only called when the encoding is needed.
    template <class F>
    void offer(i64 lat, double en, double edp, F&& make) {
        std::optional<Cand> c;
        auto get = [&]() -> Cand& {
            if (!c) {
                auto [m, k] = make();
                c = Cand{lat, en, edp, std::move(m), std::move(k)};
            }
            return *c;
        };
        for (auto g : kAllGoals) {
            auto& b = best[static_cast<std::size_t>(g)];
            bool take = !b;
            if (!take) {
                double va = goal_value(lat, en, edp, g), vb = goal_value(b->latency, b->energy, b->edp, g);
                if (va != vb) take = va < vb;
                else if (lat != b->latency) take = lat < b->latency;
                else take = get().key < b->key;
            }
            if (take) b = get();
        }
    }
    void merge(const Tracker& o) {
        evaluated += o.evaluated;
        for (const auto& b : o.best)
            if (b) offer(b->latency, b->energy, b->edp, [&] { return std::make_pair(b->mapping, b->key); });
    }
};

// Smallest permutation keeping `key` (in this order) and the remaining
// iterators ascending.
inline std::vector<std::size_t> merge_order(const std::vector<std::size_t>& key, const std::vector<bool>& is_key,
                                            const std::vector<bool>& take) {
    std::vector<std::size_t> rest, k2, out;
    for (std::size_t i = 0; i < is_key.size(); ++i)
        if (take[i] && !is_key[i]) rest.push_back(i);
    for (auto i : key)
        if (take[i]) k2.push_back(i);
    std::size_t a = 0, b = 0;
    while (a < k2.size() || b < rest.size()) {
        if (b == rest.size() || (a < k2.size() && k2[a] < rest[b])) out.push_back(k2[a++]);
        else out.push_back(rest[b++]);
    }
    return out;
}

}  // namespace detail

struct ExploreOptions {
    PruningFlags flags;
    std::vector<SearchGoal> goals{kAllGoals.begin(), kAllGoals.end()};
    unsigned workers = 1;
    bool decoupled = true;                  // score the unconstrained space
    std::vector<BaselineStyle> styles;      // constrained searches in the same pass
};

// One pass over the on-chip space. The loop order only matters through the
// level-2 directives that take more than one step and through the order of
// the spatial regions, so each point is costed once per distinct relative
// order of those "key" iterators; the other iterators sit at their smallest
// positions, which is also where the encoding tie-break would put them.
inline ExploreResult explore(const LoopNest& nest, const AcceleratorConfig& hw, const ExploreOptions& opt) {
    auto t0 = std::chrono::steady_clock::now();
    hw.validate();
    const auto rep = check_conformable(nest);
    if (!rep.verdict) throw SearchError("nest '" + nest.name + "' is not conformable");
    const std::size_t n = nest.iterators.size();

    ExploreResult res;
    std::vector<StyleRule> rules;
    std::vector<std::size_t> live;   // indices into res.baselines with a rule
    for (auto st : opt.styles) {
        StyleOutcome o{st, true, {}, {}};
        o.result.label = to_string(st);
        try {
            rules.push_back(style_rule(nest, st));
            live.push_back(res.baselines.size());
        } catch (const StyleError& e) {
            o.applicable = false;
            o.reason = e.what();
        }
        res.baselines.push_back(std::move(o));
    }

    OffchipPlan plan = optimize_offchip(nest, hw, opt.flags);
    SpaceStats space = space_size(nest, hw, opt.flags, plan.t3);

    struct Point {
        std::vector<i64> t2, t1;
    };
    std::vector<Point> pts;
    for (const auto& t2 : valid_level2(nest, hw, plan.t3, opt.flags))
        for_each_level1(nest, hw, plan.t3, t2, opt.flags, [&](const std::vector<i64>& t1) { pts.push_back({t2, t1}); });

    const std::size_t ns = rules.size();
    const auto dim_names = iterator_dims(nest, rep);
    const auto tensors = nest.tensors();
    const auto dram = detail::dram_bytes(nest, hw, plan.t3, plan.layout, opt.flags);
    // miv[t][i]: iterator i shares a subscript of tensor t with another iterator
    std::vector<std::vector<bool>> miv(tensors.size(), std::vector<bool>(n, false));
    for (const auto& r : nest.refs)
        for (const auto& d : r.dims) {
            auto c = d.sub.canonical();
            if (c.terms.size() > 1)
                for (const auto& t : c.terms) miv[tensor_index(nest, r.tensor)][nest.index_of(t.iter)] = true;
        }

    auto work = [&](std::size_t begin, std::size_t stride, detail::Tracker& dec, std::vector<detail::Tracker>& bt) {
        using detail::Tally;
        for (std::size_t pi = begin; pi < pts.size(); pi += stride) {
            const auto& pt = pts[pi];
            std::vector<bool> is_key(n), is_a(n), all(n, true);
            std::vector<std::size_t> key, a_bit(n, 0);
            std::size_t na = 0;
            for (std::size_t i = 0; i < n; ++i) {
                is_a[i] = pt.t1[i] * pt.t2[i] < plan.t3[i];
                is_key[i] = is_a[i] || pt.t2[i] > 1;
                if (is_key[i]) key.push_back(i);
                if (is_a[i]) a_bit[i] = na++;
            }
            std::vector<bool> style_ok(ns);
            for (std::size_t s = 0; s < ns; ++s) {
                style_ok[s] = true;
                for (std::size_t i = 0; i < n; ++i)
                    if (pt.t2[i] > 1 && std::find(rules[s].parallel.begin(), rules[s].parallel.end(), i) ==
                                            rules[s].parallel.end())
                        style_ok[s] = false;
            }
            if (!opt.decoupled && std::none_of(style_ok.begin(), style_ok.end(), [](bool b) { return b; })) continue;

            // One model per choice of forwarding axes; level-2 transitions
            // memoized by (advancing dim, set of level-2 dims inside it).
            struct Entry {
                detail::Model model;
                Tally fixed;
                std::vector<std::optional<Tally>> memo;
            };
            std::map<std::vector<int>, Entry> models;
            struct Score {
                i64 latency;
                double energy, edp;
            };
            std::map<std::vector<int>, Score> costs;
            std::vector<std::set<std::vector<int>>> offered(ns);
            std::optional<i64> l1_elems;
            Mapping base;
            base.t1 = pt.t1;
            base.t2 = pt.t2;
            base.t3 = plan.t3;
            base.order3 = plan.order3;
            base.layout = plan.layout;

            auto order_of = [&](const std::vector<std::size_t>& idx) {
                std::vector<std::string> o;
                for (auto i : idx) o.push_back(nest.iterators[i].name);
                return o;
            };
            auto cost_of = [&](const std::vector<std::size_t>& perm, const std::vector<int>& sig,
                               const std::vector<int>& cls) -> Score {
                auto hit = costs.find(cls);
                if (hit != costs.end()) return hit->second;
                auto it = models.find(sig);
                if (it == models.end()) {
                    Mapping m = base;
                    m.order2 = order_of(detail::merge_order(perm, is_key, all));
                    auto mdc = transform_to_mdc(m, nest, rep);
                    if (!l1_elems) {
                        i64 v = 0;
                        for (auto x : directive_volumes(mdc, nest, rep)) v += x;
                        l1_elems = v;
                    }
                    Entry e{detail::build_model(mdc, nest, hw, dim_names), {}, {}};
                    const auto& M = e.model;
                    e.fixed.t.assign(M.tms.size(), {0, 0, 0, 0});
                    e.fixed += detail::tally_class(M, detail::begin_class(M));
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t k = 0; k < M.dims[i].dirs.size(); ++k) {
                            if (k == 1 && is_a[i]) continue;
                            if (auto c = detail::step_class(M, i, detail::depths_at(M, M.dims[i].dirs[k].pos)))
                                e.fixed += detail::tally_class(M, *c);
                        }
                    e.fixed += detail::tally_class(M, detail::end_class(M));
                    e.memo.resize(na << na);
                    it = models.emplace(sig, std::move(e)).first;
                }
                Entry& e = it->second;
                Tally tl = e.fixed;
                std::size_t inner = 0;   // level-2 dims after the current one
                for (auto r = perm.rbegin(); r != perm.rend(); ++r) {
                    const auto j = *r;
                    if (!is_a[j]) continue;
                    auto& slot = e.memo[(a_bit[j] << na) | inner];
                    if (!slot) {
                        std::vector<std::size_t> depth(n, 2);
                        for (std::size_t i = 0; i < n; ++i)
                            if (is_a[i] && (i == j || (inner >> a_bit[i] & 1))) depth[i] = 1;
                        auto c = detail::step_class(e.model, j, depth);
                        slot = c ? detail::tally_class(e.model, *c) : Tally{};
                    }
                    tl += *slot;
                    inner |= std::size_t{1} << a_bit[j];
                }
                if (tl.macs != nest.total_macs())
                    throw AnalysisError("program executes " + std::to_string(tl.macs) + " of " +
                                        std::to_string(nest.total_macs()) + " iterations");
                const auto acc = detail::access_of(tl, nest, dram, nest.bytes_per_element);
                Score sc{tl.latency, detail::energy_of(acc, tl.macs, hw.energy), 0};
                sc.edp = sc.energy * (static_cast<double>(tl.latency) / hw.clock_hz());
                costs.emplace(cls, sc);
                return sc;
            };

            do {
                std::vector<int> sig(tensors.size(), -1), cls;
                for (auto i : key)
                    if (pt.t2[i] > 1)
                        for (std::size_t t = 0; t < tensors.size(); ++t)
                            if (miv[t][i]) sig[t] = static_cast<int>(i);
                cls = sig;
                for (auto i : key)
                    if (is_a[i]) cls.push_back(static_cast<int>(i));
                const bool fresh = !costs.count(cls);
                auto offer = [&](detail::Tracker& tr, const std::vector<std::size_t>& ord) {
                    const Score sc = cost_of(key, sig, cls);
                    ++tr.evaluated;
                    tr.offer(sc.latency, sc.energy, sc.edp, [&] {
                        Mapping m = base;
                        m.order2 = order_of(ord);
                        auto k = m.encode(nest);
                        return std::make_pair(std::move(m), std::move(k));
                    });
                };
                if (opt.decoupled && fresh) offer(dec, detail::merge_order(key, is_key, all));
                for (std::size_t s = 0; s < ns; ++s) {
                    if (!style_ok[s] || offered[s].count(cls)) continue;
                    const auto& g = rules[s].inner_group;
                    std::vector<std::size_t> ord;
                    if (g.empty()) {
                        ord = detail::merge_order(key, is_key, all);
                    } else {
                        bool seen_inner = false, ok = true;
                        for (auto i : key) {
                            if (g[i]) seen_inner = true;
                            else if (seen_inner) ok = false;
                        }
                        if (!ok) continue;
                        std::vector<bool> outer(n), inner(n);
                        for (std::size_t i = 0; i < n; ++i) { outer[i] = !g[i]; inner[i] = g[i]; }
                        ord = detail::merge_order(key, is_key, outer);
                        auto b2 = detail::merge_order(key, is_key, inner);
                        ord.insert(ord.end(), b2.begin(), b2.end());
                    }
                    offered[s].insert(cls);
                    offer(bt[s], ord);
                }
            } while (std::next_permutation(key.begin(), key.end()));
        }
    };

    const unsigned W = std::max(1u, opt.workers);
    detail::Tracker dec;
    std::vector<detail::Tracker> bt(ns);
    if (W == 1) {
        work(0, 1, dec, bt);
    } else {
        std::vector<detail::Tracker> decs(W);
        std::vector<std::vector<detail::Tracker>> bts(W, std::vector<detail::Tracker>(ns));
        std::vector<std::exception_ptr> errs(W);
        std::vector<std::thread> th;
        for (unsigned w = 0; w < W; ++w)
            th.emplace_back([&, w] {
                try {
                    work(w, W, decs[w], bts[w]);
                } catch (...) {
                    errs[w] = std::current_exception();
                }
            });
        for (auto& t : th) t.join();
        for (auto& e : errs)
            if (e) std::rethrow_exception(e);
        for (unsigned w = 0; w < W; ++w) {
            dec.merge(decs[w]);
            for (std::size_t s = 0; s < ns; ++s) bt[s].merge(bts[w][s]);
        }
    }

    auto finish = [&](SearchResult& r, const detail::Tracker& t) {
        r.goals = opt.goals;
        r.plan = plan;
        r.space = space;
        r.evaluated = t.evaluated;
        for (auto g : kAllGoals) {
            const auto& b = t.best[static_cast<std::size_t>(g)];
            if (!b) continue;
            auto& gb = r.best[static_cast<std::size_t>(g)];
            gb.found = true;
            gb.mapping = b->mapping;
            gb.mdc = transform_to_mdc(b->mapping, nest, rep);
            AnalysisOptions ao;
            ao.report = &rep;
            ao.t3 = plan.t3;
            ao.layout = plan.layout;
            ao.flags = opt.flags;
            gb.report = analyze_mapping(gb.mdc, nest, hw, hw.energy, ao);
            if (gb.report.latency_cycles != b->latency || gb.report.energy != b->energy)
                throw SearchError("search score disagrees with the cost model for '" + nest.name + "'");
        }
    };
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.decoupled.label = "decoupled";
    if (opt.decoupled) finish(res.decoupled, dec);
    res.decoupled.search_seconds = secs;
    for (std::size_t s = 0; s < ns; ++s) {
        auto& o = res.baselines[live[s]];
        finish(o.result, bt[s]);
        o.result.search_seconds = secs;
    }
    return res;
}

inline SearchResult decoupled_optimize(const LoopNest& nest, const AcceleratorConfig& hw,
                                       const std::vector<SearchGoal>& goals = {kAllGoals.begin(), kAllGoals.end()},
                                       const PruningFlags& flags = {}, unsigned workers = 1) {
    ExploreOptions o;
    o.flags = flags;
    o.goals = goals;
    o.workers = workers;
    return explore(nest, hw, o).decoupled;
}

inline SearchResult constrained_baseline(const LoopNest& nest, const AcceleratorConfig& hw, BaselineStyle style,
                                         const PruningFlags& flags = {}, unsigned workers = 1) {
    style_rule(nest, style);   // throws StyleError when inapplicable
    ExploreOptions o;
    o.flags = flags;
    o.workers = workers;
    o.decoupled = false;
    o.styles = {style};
    return explore(nest, hw, o).baselines.front().result;
}

}  // namespace mdcmap
