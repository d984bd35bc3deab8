// SPDX-License-Identifier: Apache-2.0
//
// Loop-nest IR: normalized perfectly nested loops with affine tensor
// subscripts, plus the footprint arithmetic used by both cost models.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mdcmap {

using i64 = std::int64_t;

struct NormalizationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TileRangeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ============================================================================
// Subscripts
// ============================================================================

enum class SubscriptKind { Constant, SIV, MIV };

inline const char* to_string(SubscriptKind k) {
    switch (k) {
    case SubscriptKind::Constant: return "Constant";
    case SubscriptKind::SIV: return "SIV";
    case SubscriptKind::MIV: return "MIV";
    }
    return "?";
}

struct Term {
    std::string iter;
    i64 coeff = 1;
    bool operator==(const Term&) const = default;
};

struct Subscript {
    std::vector<Term> terms;
    i64 constant = 0;
    bool nonlinear = false;   // set by front ends for i*j, i/2 and friends

    static Subscript iter(std::string name, i64 coeff = 1, i64 c0 = 0) {
        return Subscript{{Term{std::move(name), coeff}}, c0};
    }
    static Subscript sum(std::vector<Term> t, i64 c0 = 0) {
        return Subscript{std::move(t), c0};
    }

    bool uses(const std::string& it) const {
        return std::any_of(terms.begin(), terms.end(),
                           [&](const Term& t) { return t.iter == it; });
    }
    i64 coeff_of(const std::string& it) const {
        i64 c = 0;
        for (const auto& t : terms)
            if (t.iter == it) c += t.coeff;
        return c;
    }

    // Canonical form: merged duplicate iterators, zero coefficients dropped,
    // terms sorted by iterator name. Used for equality and classification.
    Subscript canonical() const {
        std::map<std::string, i64> acc;
        for (const auto& t : terms) acc[t.iter] += t.coeff;
        Subscript s;
        s.constant = constant;
        s.nonlinear = nonlinear;
        for (const auto& [k, v] : acc)
            if (v != 0) s.terms.push_back({k, v});
        return s;
    }

    std::string str() const {
        std::string out;
        for (const auto& t : terms) {
            if (!out.empty()) out += t.coeff < 0 ? "-" : "+";
            else if (t.coeff < 0) out += "-";
            i64 a = t.coeff < 0 ? -t.coeff : t.coeff;
            if (a != 1) out += std::to_string(a) + "*";
            out += t.iter;
        }
        if (constant != 0 || out.empty()) {
            if (!out.empty() && constant >= 0) out += "+";
            out += std::to_string(constant);
        }
        return out;
    }
};

inline bool operator==(const Subscript& a, const Subscript& b) {
    auto ca = a.canonical(), cb = b.canonical();
    return ca.constant == cb.constant && ca.terms == cb.terms && ca.nonlinear == cb.nonlinear;
}

inline SubscriptKind classify_subscript(const Subscript& s) {
    auto c = s.canonical();
    if (c.terms.empty()) return SubscriptKind::Constant;
    if (c.terms.size() == 1) return SubscriptKind::SIV;
    return SubscriptKind::MIV;
}

// ============================================================================
// Tensors and nests
// ============================================================================

enum class Access { Read, Write, ReadWrite };

inline const char* to_string(Access a) {
    switch (a) {
    case Access::Read: return "read";
    case Access::Write: return "write";
    case Access::ReadWrite: return "read-write";
    }
    return "?";
}

struct TensorDim {
    std::string var;     // dimension variable, e.g. d_O
    Subscript sub;
    i64 extent = 1;      // tensor size along this dimension
};

struct TensorRef {
    std::string tensor;
    Access access = Access::Read;
    std::vector<TensorDim> dims;

    bool writes() const { return access != Access::Read; }
    bool uses(const std::string& it) const {
        return std::any_of(dims.begin(), dims.end(),
                           [&](const TensorDim& d) { return d.sub.uses(it); });
    }
};

struct LoopIterator {
    std::string name;
    i64 extent = 1;
    std::vector<std::string> bound_dependency;  // iterators its bound uses
};

enum class ReduceOp { None, Add, Max, Min, Mul, Other };

inline const char* to_string(ReduceOp r) {
    switch (r) {
    case ReduceOp::None: return "none";
    case ReduceOp::Add: return "+";
    case ReduceOp::Max: return "max";
    case ReduceOp::Min: return "min";
    case ReduceOp::Mul: return "*";
    case ReduceOp::Other: return "other";
    }
    return "?";
}

struct Statement {
    std::string kind = "mac";          // descriptive label
    ReduceOp reduce = ReduceOp::Add;   // op folding into the output
    int count = 1;                     // statements in the body
    bool has_conditional = false;
    bool perfectly_nested = true;
};

struct LoopNest {
    std::string name;
    std::vector<LoopIterator> iterators;   // outermost first
    std::vector<TensorRef> refs;
    std::vector<std::string> reduction_dims;
    Statement stmt;
    i64 bytes_per_element = 1;

    std::size_t index_of(const std::string& it) const {
        for (std::size_t i = 0; i < iterators.size(); ++i)
            if (iterators[i].name == it) return i;
        throw NestError("unknown iterator '" + it + "'");
    }
    bool has_iterator(const std::string& it) const {
        return std::any_of(iterators.begin(), iterators.end(),
                           [&](const LoopIterator& l) { return l.name == it; });
    }
    std::vector<i64> extents() const {
        std::vector<i64> e;
        for (const auto& l : iterators) e.push_back(l.extent);
        return e;
    }
    i64 total_macs() const {
        i64 m = 1;
        for (const auto& l : iterators) m *= l.extent;
        return m;
    }
    bool vacuous(const std::string& it) const {
        return std::none_of(refs.begin(), refs.end(),
                            [&](const TensorRef& r) { return r.uses(it); });
    }

    // Unique tensors in order of first appearance. A tensor referenced
    // several times (stencils) is one buffer entry.
    std::vector<std::string> tensors() const {
        std::vector<std::string> out;
        for (const auto& r : refs)
            if (std::find(out.begin(), out.end(), r.tensor) == out.end())
                out.push_back(r.tensor);
        return out;
    }
    const TensorRef& first_ref(const std::string& tensor) const {
        for (const auto& r : refs)
            if (r.tensor == tensor) return r;
        throw NestError("unknown tensor '" + tensor + "'");
    }
    std::optional<std::string> output_tensor() const {
        for (const auto& r : refs)
            if (r.writes()) return r.tensor;
        return std::nullopt;
    }
};

// Dimension extent induced by a box of iterator sizes: for c_k*i_k + c0 it
// is sum c_k*(size_k-1) + 1. Negative coefficients contribute |c_k|.
inline i64 span_extent(const Subscript& s, const LoopNest& nest,
                       const std::vector<i64>& sizes) {
    i64 e = 1;
    for (const auto& t : s.terms) {
        i64 c = t.coeff < 0 ? -t.coeff : t.coeff;
        e += c * (sizes[nest.index_of(t.iter)] - 1);
    }
    return e;
}

inline void check_tile(const LoopNest& nest, const std::vector<i64>& tile) {
    if (tile.size() != nest.iterators.size())
        throw TileRangeError("tile has " + std::to_string(tile.size()) +
                             " entries, nest has " +
                             std::to_string(nest.iterators.size()) + " loops");
    for (std::size_t i = 0; i < tile.size(); ++i)
        if (tile[i] < 1 || tile[i] > nest.iterators[i].extent)
            throw TileRangeError("tile for '" + nest.iterators[i].name +
                                 "' = " + std::to_string(tile[i]) +
                                 " outside [1, " +
                                 std::to_string(nest.iterators[i].extent) + "]");
}

// Elements of each reference touched by one tile (one entry per ref).
inline std::vector<i64> ref_footprints(const LoopNest& nest,
                                       const std::vector<i64>& tile) {
    check_tile(nest, tile);
    std::vector<i64> out;
    for (const auto& r : nest.refs) {
        i64 f = 1;
        for (const auto& d : r.dims) f *= std::min(span_extent(d.sub, nest, tile), d.extent);
        out.push_back(f);
    }
    return out;
}

// Per-tensor footprint. Multiple references to the same tensor whose
// subscripts differ only by constants are merged into one bounding box.
struct TensorFootprint {
    std::string tensor;
    i64 elements = 0;
};

inline std::vector<TensorFootprint> tensor_footprint(const LoopNest& nest,
                                                     const std::vector<i64>& tile) {
    check_tile(nest, tile);
    std::vector<TensorFootprint> out;
    for (const auto& name : nest.tensors()) {
        const TensorRef& first = nest.first_ref(name);
        std::vector<i64> lo(first.dims.size(), 0), hi(first.dims.size(), 0);
        bool seen = false;
        for (const auto& r : nest.refs) {
            if (r.tensor != name) continue;
            for (std::size_t k = 0; k < r.dims.size() && k < lo.size(); ++k) {
                i64 a = r.dims[k].sub.constant, b = a;
                for (const auto& t : r.dims[k].sub.terms) {
                    i64 span = t.coeff * (tile[nest.index_of(t.iter)] - 1);
                    if (span < 0) a += span; else b += span;
                }
                if (!seen) { lo[k] = a; hi[k] = b; }
                else { lo[k] = std::min(lo[k], a); hi[k] = std::max(hi[k], b); }
            }
            seen = true;
        }
        i64 f = 1;
        for (std::size_t k = 0; k < lo.size(); ++k)
            f *= std::min(hi[k] - lo[k] + 1, first.dims[k].extent);
        out.push_back({name, f});
    }
    return out;
}

inline i64 total_footprint(const LoopNest& nest, const std::vector<i64>& tile) {
    i64 s = 0;
    for (const auto& f : tensor_footprint(nest, tile)) s += f.elements;
    return s;
}

// ============================================================================
// Raw (un-normalized) nests
// ============================================================================

struct RawBound {
    i64 constant = 0;
    std::vector<Term> terms;   // outer iterators
    bool affine = true;
};

struct RawLoop {
    std::string name;
    RawBound lower;
    RawBound upper;            // exclusive
    std::optional<i64> step = 1;   // nullopt: not a compile-time constant
};

struct RawNest {
    std::string name;
    std::vector<RawLoop> loops;
    std::vector<TensorRef> refs;   // subscripts over raw iterators; extents may be 0 (inferred)
    std::vector<std::string> reduction_dims;
    Statement stmt;
    i64 bytes_per_element = 1;
};

namespace detail {

// Affine expression over normalized iterators.
struct Affine {
    std::map<std::string, i64> c;
    i64 c0 = 0;
    i64 min_over(const std::map<std::string, i64>& ext) const {
        i64 v = c0;
        for (const auto& [k, a] : c)
            if (a < 0) v += a * (ext.at(k) - 1);
        return v;
    }
    i64 max_over(const std::map<std::string, i64>& ext) const {
        i64 v = c0;
        for (const auto& [k, a] : c)
            if (a > 0) v += a * (ext.at(k) - 1);
        return v;
    }
};

inline Affine substitute(const RawBound& b, const std::map<std::string, Affine>& env,
                         const std::string& where) {
    if (!b.affine) throw NormalizationError("non-affine bound in loop '" + where + "'");
    Affine a;
    a.c0 = b.constant;
    for (const auto& t : b.terms) {
        auto it = env.find(t.iter);
        if (it == env.end())
            throw NormalizationError("bound of '" + where + "' uses unknown iterator '" +
                                     t.iter + "'");
        for (const auto& [k, v] : it->second.c) a.c[k] += t.coeff * v;
        a.c0 += t.coeff * it->second.c0;
    }
    return a;
}

}  // namespace detail

inline LoopNest normalize(const RawNest& raw) {
    LoopNest n;
    n.name = raw.name;
    n.stmt = raw.stmt;
    n.bytes_per_element = raw.bytes_per_element;
    n.reduction_dims = raw.reduction_dims;
    if (n.bytes_per_element < 1) throw NormalizationError("bytes_per_element < 1");

    std::map<std::string, detail::Affine> env;   // raw iterator -> normalized expr
    std::map<std::string, i64> ext;
    for (const auto& l : raw.loops) {
        if (!l.step) throw NormalizationError("non-constant stride in loop '" + l.name + "'");
        i64 st = *l.step;
        if (st <= 0) throw NormalizationError("non-positive stride in loop '" + l.name + "'");
        auto lo = detail::substitute(l.lower, env, l.name);
        auto hi = detail::substitute(l.upper, env, l.name);
        detail::Affine trip = hi;
        for (const auto& [k, v] : lo.c) trip.c[k] -= v;
        trip.c0 -= lo.c0;
        i64 span = trip.max_over(ext);
        if (span <= 0) throw NormalizationError("empty loop '" + l.name + "'");
        LoopIterator it{l.name, (span + st - 1) / st, {}};
        for (const auto& [k, v] : trip.c)
            if (v != 0) it.bound_dependency.push_back(k);
        for (const auto& [k, v] : lo.c)
            if (v != 0 && std::find(it.bound_dependency.begin(), it.bound_dependency.end(), k) ==
                              it.bound_dependency.end())
                it.bound_dependency.push_back(k);
        detail::Affine self = lo;
        self.c[l.name] += st;
        env[l.name] = self;
        ext[l.name] = it.extent;
        n.iterators.push_back(it);
    }
    for (const auto& r : raw.refs) {
        TensorRef nr{r.tensor, r.access, {}};
        for (const auto& d : r.dims) {
            detail::Affine a;
            a.c0 = d.sub.constant;
            for (const auto& t : d.sub.terms) {
                auto it = env.find(t.iter);
                if (it == env.end())
                    throw NormalizationError("subscript uses unknown iterator '" + t.iter + "'");
                for (const auto& [k, v] : it->second.c) a.c[k] += t.coeff * v;
                a.c0 += t.coeff * it->second.c0;
            }
            Subscript s;
            s.constant = a.c0;
            for (const auto& l : n.iterators) {
                auto f = a.c.find(l.name);
                if (f != a.c.end() && f->second != 0) s.terms.push_back({l.name, f->second});
            }
            i64 extent = d.extent;
            i64 need = a.max_over(ext) + 1;
            if (extent <= 0) extent = need;
            if (a.min_over(ext) < 0 || need > extent)
                throw NormalizationError("subscript " + s.str() + " of " + r.tensor +
                                         " leaves [0, " + std::to_string(extent) + ")");
            nr.dims.push_back({d.var, s, extent});
        }
        n.refs.push_back(nr);
    }
    return n;
}

inline RawNest to_raw(const LoopNest& n) {
    RawNest r;
    r.name = n.name;
    r.refs = n.refs;
    r.reduction_dims = n.reduction_dims;
    r.stmt = n.stmt;
    r.bytes_per_element = n.bytes_per_element;
    for (const auto& l : n.iterators) r.loops.push_back({l.name, {0, {}, true}, {l.extent, {}, true}, 1});
    return r;
}

inline LoopNest normalize(const LoopNest& n) { return normalize(to_raw(n)); }

inline bool same_nest(const LoopNest& a, const LoopNest& b) {
    if (a.iterators.size() != b.iterators.size() || a.refs.size() != b.refs.size()) return false;
    for (std::size_t i = 0; i < a.iterators.size(); ++i)
        if (a.iterators[i].name != b.iterators[i].name ||
            a.iterators[i].extent != b.iterators[i].extent)
            return false;
    for (std::size_t i = 0; i < a.refs.size(); ++i) {
        const auto &x = a.refs[i], &y = b.refs[i];
        if (x.tensor != y.tensor || x.access != y.access || x.dims.size() != y.dims.size())
            return false;
        for (std::size_t k = 0; k < x.dims.size(); ++k)
            if (x.dims[k].var != y.dims[k].var || !(x.dims[k].sub == y.dims[k].sub) ||
                x.dims[k].extent != y.dims[k].extent)
                return false;
    }
    return a.bytes_per_element == b.bytes_per_element;
}

}  // namespace mdcmap
