// SPDX-License-Identifier: Apache-2.0
//
// Conformability rules R1-R4 and the dimension dependence graph (DDG).
#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mdcmap/loopnest.hpp"

namespace mdcmap {

struct DdgNode {
    std::string dim_var;
    Subscript sub;        // canonical
    std::string tensor;
    std::size_t position = 0;   // dimension index within the tensor

    std::string label() const { return dim_var + ":" + sub.str(); }
};

struct DimensionDependenceGraph {
    std::vector<DdgNode> nodes;
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // sorted, unique
    std::vector<std::string> independent;                    // dim_vars, node order

    std::vector<std::size_t> in_degree() const {
        std::vector<std::size_t> d(nodes.size(), 0);
        for (const auto& e : edges) ++d[e.second];
        return d;
    }
    bool has_edge(const std::string& from, const std::string& to) const {
        for (const auto& [a, b] : edges)
            if (nodes[a].label() == from && nodes[b].label() == to) return true;
        return false;
    }
    std::optional<std::size_t> find(const std::string& label) const {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].label() == label) return i;
        return std::nullopt;
    }
};

inline DimensionDependenceGraph build_ddg(const LoopNest& nest) {
    DimensionDependenceGraph g;
    for (const auto& r : nest.refs)
        for (std::size_t k = 0; k < r.dims.size(); ++k) {
            Subscript c = r.dims[k].sub.canonical();
            bool dup = std::any_of(g.nodes.begin(), g.nodes.end(), [&](const DdgNode& n) {
                return n.dim_var == r.dims[k].var && n.sub == c;
            });
            if (!dup) g.nodes.push_back({r.dims[k].var, c, r.tensor, k});
        }

    std::set<std::pair<std::size_t, std::size_t>> e;
    const std::size_t n = g.nodes.size();
    auto kind = [&](std::size_t i) { return classify_subscript(g.nodes[i].sub); };
    auto shares = [&](std::size_t a, std::size_t b) {
        for (const auto& t : g.nodes[a].sub.terms)
            if (g.nodes[b].sub.uses(t.iter)) return true;
        return false;
    };

    // Rule 1: SIV/MIV -> MIV over a common iterator.
    for (std::size_t a = 0; a < n; ++a) {
        if (kind(a) == SubscriptKind::Constant) continue;
        for (std::size_t b = 0; b < n; ++b)
            if (a != b && kind(b) == SubscriptKind::MIV && shares(a, b)) e.insert({a, b});
    }

    // Rule 2: SIV groups keyed by iterator; lowest constant is the source.
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t a = 0; a < n; ++a)
        if (kind(a) == SubscriptKind::SIV) groups[g.nodes[a].sub.terms[0].iter].push_back(a);
    for (auto& [it, members] : groups) {
        auto src = *std::min_element(members.begin(), members.end(), [&](std::size_t x, std::size_t y) {
            const auto &nx = g.nodes[x], &ny = g.nodes[y];
            if (nx.sub.constant != ny.sub.constant) return nx.sub.constant < ny.sub.constant;
            if (nx.dim_var != ny.dim_var) return nx.dim_var < ny.dim_var;
            return x < y;
        });
        for (auto m : members)
            if (m != src) e.insert({src, m});
    }

    // Rule 3: bound of i depends on j => nodes using i point to nodes using j.
    for (const auto& li : nest.iterators)
        for (const auto& j : li.bound_dependency)
            for (std::size_t a = 0; a < n; ++a) {
                if (!g.nodes[a].sub.uses(li.name)) continue;
                for (std::size_t b = 0; b < n; ++b)
                    if (a != b && g.nodes[b].sub.uses(j)) e.insert({a, b});
            }

    g.edges.assign(e.begin(), e.end());
    auto deg = g.in_degree();
    for (std::size_t a = 0; a < n; ++a)
        if (deg[a] == 0 &&
            std::find(g.independent.begin(), g.independent.end(), g.nodes[a].dim_var) ==
                g.independent.end())
            g.independent.push_back(g.nodes[a].dim_var);
    return g;
}

// Kahn's algorithm, smallest node index first. Empty when a cycle exists.
inline std::optional<std::vector<std::size_t>> topological_order(const DimensionDependenceGraph& g) {
    auto deg = g.in_degree();
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < deg.size(); ++i)
        if (deg[i] == 0) ready.insert(i);
    std::vector<std::size_t> out;
    while (!ready.empty()) {
        auto a = *ready.begin();
        ready.erase(ready.begin());
        out.push_back(a);
        for (const auto& [x, y] : g.edges)
            if (x == a && --deg[y] == 0) ready.insert(y);
    }
    if (out.size() != g.nodes.size()) return std::nullopt;
    return out;
}

struct RuleResult {
    bool pass = true;
    std::string reason;
};

struct IndependentDim {
    std::string dim_var;
    Subscript sub;
    std::vector<std::string> iterators;   // >1 when free MIV iterators merge
};

struct ConformabilityReport {
    RuleResult r1, r2, r3, r4;
    bool verdict = false;
    std::vector<IndependentDim> independent_dims;   // topological order
    std::optional<std::vector<std::string>> topological_order;
    DimensionDependenceGraph ddg;

    // Independent dim mapped to iterator `it`, if any.
    const IndependentDim* dim_for(const std::string& it) const {
        for (const auto& d : independent_dims)
            if (d.iterators.size() == 1 && d.iterators[0] == it) return &d;
        return nullptr;
    }
};

inline ConformabilityReport check_conformable(const LoopNest& nest) {
    ConformabilityReport rep;

    // R1
    if (nest.stmt.count != 1)
        rep.r1 = {false, "body has " + std::to_string(nest.stmt.count) + " statements"};
    else if (nest.stmt.has_conditional)
        rep.r1 = {false, "body contains a conditional"};
    else if (!nest.stmt.perfectly_nested)
        rep.r1 = {false, "loops are not perfectly nested"};
    else
        rep.r1 = {true, "perfect nest, single statement"};

    // R2: written tensors may only be re-read at the identical subscript,
    // and only as a whitelisted reduction.
    auto whitelisted = [&] {
        auto r = nest.stmt.reduce;
        return r == ReduceOp::Add || r == ReduceOp::Max || r == ReduceOp::Min;
    };
    rep.r2 = {true, "only reduction dependences"};
    for (const auto& w : nest.refs) {
        if (!w.writes()) continue;
        bool reread = w.access == Access::ReadWrite;
        for (const auto& r : nest.refs) {
            if (&r == &w || r.tensor != w.tensor) continue;
            if (r.writes() && &r != &w) {
                bool same = r.dims.size() == w.dims.size();
                for (std::size_t k = 0; same && k < r.dims.size(); ++k)
                    same = r.dims[k].sub == w.dims[k].sub;
                if (!same) { rep.r2 = {false, "output dependence on " + w.tensor}; break; }
            }
            bool same = r.dims.size() == w.dims.size();
            for (std::size_t k = 0; same && k < r.dims.size(); ++k)
                same = r.dims[k].sub == w.dims[k].sub;
            if (!same) {
                rep.r2 = {false, "flow dependence: " + w.tensor + " read at a different index than written"};
                break;
            }
            reread = true;
        }
        if (!rep.r2.pass) break;
        bool reduces = false;
        for (const auto& l : nest.iterators)
            if (!w.uses(l.name)) reduces = true;
        if ((reread || reduces) && !whitelisted()) {
            rep.r2 = {false, std::string("reduction op '") + to_string(nest.stmt.reduce) +
                                 "' on " + w.tensor + " is not one of +, max, min"};
            break;
        }
    }
    if (rep.r2.pass && !nest.output_tensor()) rep.r2 = {false, "no output tensor"};

    // R3
    rep.ddg = build_ddg(nest);
    const auto& g = rep.ddg;
    auto topo = topological_order(g);
    auto deg = g.in_degree();
    rep.r3 = {true, "DDG is acyclic"};
    if (!topo) {
        rep.r3 = {false, "DDG has no topological ordering (mutually dependent dimensions)"};
    } else {
        std::vector<std::string> order;
        for (auto i : *topo) order.push_back(g.nodes[i].label());
        rep.topological_order = order;
        std::map<std::string, int> roots;
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            if (deg[i] == 0) ++roots[g.nodes[i].dim_var];
            else if (g.nodes[i].sub.nonlinear)
                rep.r3 = {false, "dependent dimension " + g.nodes[i].label() + " is not affine"};
        }
        for (const auto& [v, c] : roots)
            if (c > 1) rep.r3 = {false, "dimension variable " + v + " has " + std::to_string(c) +
                                            " zero in-degree nodes"};
        if (g.independent.empty()) rep.r3 = {false, "no independent dimension variables"};
    }

    // R4
    rep.r4 = {true, "independent subscripts are unique iterators"};
    std::vector<std::size_t> roots;
    if (topo) {
        for (auto i : *topo)
            if (deg[i] == 0) roots.push_back(i);
    } else {
        for (std::size_t i = 0; i < g.nodes.size(); ++i)
            if (deg[i] == 0) roots.push_back(i);
    }
    std::set<std::string> claimed;
    for (auto i : roots) {
        const auto& nd = g.nodes[i];
        IndependentDim d{nd.dim_var, nd.sub, {}};
        if (nd.sub.nonlinear || nd.sub.terms.empty()) {
            rep.r4 = {false, nd.label() + " is not a linear combination of iterators"};
        } else if (nd.sub.constant != 0) {
            rep.r4 = {false, nd.label() + " has a constant term"};
        } else {
            for (const auto& t : nd.sub.terms) {
                if (t.coeff != 1) rep.r4 = {false, nd.label() + " has a non-unit coefficient"};
                d.iterators.push_back(t.iter);
            }
            if (d.iterators.size() > 1) {
                // merge only iterators that appear nowhere else
                for (const auto& it : d.iterators)
                    for (std::size_t j = 0; j < g.nodes.size(); ++j)
                        if (j != i && g.nodes[j].sub.uses(it))
                            rep.r4 = {false, nd.label() + ": iterator " + it +
                                                 " is shared, cannot merge"};
            }
            for (const auto& it : d.iterators)
                if (!claimed.insert(it).second)
                    rep.r4 = {false, "iterator " + it + " drives two independent dimensions"};
        }
        rep.independent_dims.push_back(d);
    }
    rep.verdict = rep.r1.pass && rep.r2.pass && rep.r3.pass && rep.r4.pass;
    return rep;
}

}  // namespace mdcmap
