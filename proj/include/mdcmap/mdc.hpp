// SPDX-License-Identifier: Apache-2.0
//
// Data-centric directive programs (TemporalMap / SpatialMap / Cluster),
// the Mapping -> directive transformation and the textual form.
#pragma once

#include <cctype>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdcmap/conformability.hpp"
#include "mdcmap/loopnest.hpp"
#include "mdcmap/mapping.hpp"

namespace mdcmap {

struct TransformError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MdcParseError : std::runtime_error {
    int line, column;
    MdcParseError(int l, int c, const std::string& msg)
        : std::runtime_error("line " + std::to_string(l) + ", column " + std::to_string(c) + ": " + msg),
          line(l), column(c) {}
};

enum class DirectiveKind { TemporalMap, SpatialMap, Cluster };

struct Directive {
    DirectiveKind kind = DirectiveKind::TemporalMap;
    i64 size = 1;
    i64 offset = 1;       // unused for Cluster
    std::string dim;      // unused for Cluster

    static Directive temporal(i64 s, i64 o, std::string d) { return {DirectiveKind::TemporalMap, s, o, std::move(d)}; }
    static Directive spatial(i64 s, i64 o, std::string d) { return {DirectiveKind::SpatialMap, s, o, std::move(d)}; }
    static Directive cluster(i64 s) { return {DirectiveKind::Cluster, s, 0, {}}; }

    std::string str() const {
        switch (kind) {
        case DirectiveKind::TemporalMap:
            return "TemporalMap(" + std::to_string(size) + "," + std::to_string(offset) + ") " + dim;
        case DirectiveKind::SpatialMap:
            return "SpatialMap(" + std::to_string(size) + "," + std::to_string(offset) + ") " + dim;
        case DirectiveKind::Cluster:
            return "Cluster(" + std::to_string(size) + ")";
        }
        return {};
    }
    bool operator==(const Directive&) const = default;
};

struct Region {
    std::vector<Directive> directives;
    std::string label;
    bool operator==(const Region&) const = default;
};

struct DimSize {
    std::string dim;
    i64 extent = 1;
    bool operator==(const DimSize&) const = default;
};

// Regions are listed outermost first. clusters[i] separates regions i and
// i+1; a size of one only separates, larger sizes open a nested PE level.
struct MdcMapping {
    std::string computation;
    std::vector<DimSize> dims;
    std::vector<Region> regions;
    std::vector<i64> clusters;

    bool operator==(const MdcMapping&) const = default;

    // Directives in program order with Cluster entries in between.
    std::vector<Directive> program() const {
        std::vector<Directive> out;
        for (std::size_t r = 0; r < regions.size(); ++r) {
            for (const auto& d : regions[r].directives) out.push_back(d);
            if (r < clusters.size()) out.push_back(Directive::cluster(clusters[r]));
        }
        return out;
    }
};

// Labels run R1 (innermost) to Rn (outermost).
inline void relabel(MdcMapping& m) {
    const auto n = m.regions.size();
    for (std::size_t r = 0; r < n; ++r) m.regions[r].label = "R" + std::to_string(n - r);
}

inline i64 dependent_extent(const Subscript& s, const LoopNest& nest, const std::vector<i64>& mapped_sizes) {
    return span_extent(s, nest, mapped_sizes);
}

inline std::string describe_computation(const LoopNest& nest) {
    auto ref_str = [](const TensorRef& r) {
        std::string s = r.tensor;
        for (const auto& d : r.dims) s += "[" + d.sub.str() + "]";
        return s;
    };
    std::string lhs, rhs;
    for (const auto& r : nest.refs) {
        if (r.writes()) {
            if (lhs.empty()) lhs = ref_str(r);
        } else {
            if (!rhs.empty()) rhs += " * ";
            rhs += ref_str(r);
        }
    }
    std::string op = " = ";
    switch (nest.stmt.reduce) {
    case ReduceOp::Add: op = " += "; break;
    case ReduceOp::Max: op = " max= "; break;
    case ReduceOp::Min: op = " min= "; break;
    case ReduceOp::Mul: op = " *= "; break;
    default: break;
    }
    return lhs + op + rhs;
}

// Independent dimension variable driving each iterator, nest order.
inline std::vector<std::string> iterator_dims(const LoopNest& nest, const ConformabilityReport& rep) {
    std::vector<std::string> out;
    for (const auto& l : nest.iterators) {
        const IndependentDim* d = rep.dim_for(l.name);
        if (!d) throw TransformError("iterator " + l.name + " has no independent dimension of its own");
        out.push_back(d->dim_var);
    }
    return out;
}

inline MdcMapping transform_to_mdc(const Mapping& m, const LoopNest& nest, const ConformabilityReport& rep) {
    if (!rep.verdict) throw TransformError("nest '" + nest.name + "' is not conformable");
    auto bad = validate_structure(m, nest);
    if (!bad.empty()) throw TransformError(bad.front().message);
    const auto dims = iterator_dims(nest, rep);
    const std::size_t n = nest.iterators.size();

    MdcMapping out;
    out.computation = describe_computation(nest);
    for (std::size_t i = 0; i < n; ++i) out.dims.push_back({dims[i], nest.iterators[i].extent});

    Region l3, l2;
    for (const auto& it : m.order3) {
        auto i = nest.index_of(it);
        l3.directives.push_back(Directive::temporal(m.t3[i], m.t3[i], dims[i]));
    }
    for (const auto& it : m.order2) {
        auto i = nest.index_of(it);
        l2.directives.push_back(Directive::temporal(m.block(i), m.block(i), dims[i]));
    }
    out.regions = {l3, l2};
    out.clusters = {1, 1};

    std::vector<std::size_t> par;
    for (const auto& it : m.order2) {
        auto i = nest.index_of(it);
        if (m.t2[i] > 1) par.push_back(i);
    }
    std::vector<i64> window(n);
    for (std::size_t i = 0; i < n; ++i) window[i] = m.block(i);
    for (std::size_t p = 0; p < par.size(); ++p) {
        Region r;
        const auto i = par[p];
        r.directives.push_back(Directive::spatial(m.t1[i], m.t1[i], dims[i]));
        window[i] = m.t1[i];
        for (const auto& it : m.order2) {
            auto k = nest.index_of(it);
            if (k != i) r.directives.push_back(Directive::temporal(window[k], window[k], dims[k]));
        }
        out.regions.push_back(r);
        i64 inner = 1;
        for (std::size_t q = p + 1; q < par.size(); ++q) inner *= m.t2[par[q]];
        out.clusters.push_back(inner);
    }
    Region point;
    for (std::size_t i = 0; i < n; ++i) point.directives.push_back(Directive::temporal(m.t1[i], m.t1[i], dims[i]));
    out.regions.push_back(point);
    relabel(out);
    return out;
}

inline MdcMapping transform_to_mdc(const Mapping& m, const LoopNest& nest) {
    return transform_to_mdc(m, nest, check_conformable(nest));
}

// Per-tensor elements held by one PE per step, from the innermost region's
// mapped sizes pushed through the dependent subscripts.
inline std::vector<i64> directive_volumes(const MdcMapping& mdc, const LoopNest& nest, const ConformabilityReport& rep) {
    const auto dims = iterator_dims(nest, rep);
    std::vector<i64> sizes = nest.extents();
    if (!mdc.regions.empty())
        for (const auto& d : mdc.regions.back().directives)
            for (std::size_t i = 0; i < dims.size(); ++i)
                if (dims[i] == d.dim) sizes[i] = std::min(d.size, sizes[i]);
    std::vector<i64> out;
    for (const auto& t : nest.tensors()) {
        const auto& first = nest.first_ref(t);
        i64 v = 1;
        for (std::size_t k = 0; k < first.dims.size(); ++k) {
            // merged bounding box over all refs to this tensor
            i64 lo = 0, hi = 0;
            bool seen = false;
            for (const auto& r : nest.refs) {
                if (r.tensor != t) continue;
                const auto& s = r.dims[k].sub;
                i64 a = s.constant, b = s.constant;
                for (const auto& term : s.terms) {
                    i64 span = term.coeff * (sizes[nest.index_of(term.iter)] - 1);
                    (span < 0 ? a : b) += span;
                }
                lo = seen ? std::min(lo, a) : a;
                hi = seen ? std::max(hi, b) : b;
                seen = true;
            }
            v *= std::min(hi - lo + 1, first.dims[k].extent);
        }
        out.push_back(v);
    }
    return out;
}

// ============================================================================
// Validation against a nest
// ============================================================================

// PE level sizes: the whole array, then one entry per Cluster larger than one.
inline std::vector<i64> pe_levels(const MdcMapping& m, i64 num_pes) {
    std::vector<i64> lv{num_pes};
    for (auto c : m.clusters)
        if (c > 1) lv.push_back(c);
    return lv;
}

inline std::vector<std::string> validate_mdc(const MdcMapping& m, const LoopNest& nest, const ConformabilityReport& rep,
                                             i64 num_pes) {
    std::vector<std::string> errs;
    if (m.regions.empty()) errs.push_back("program has no regions");
    if (m.clusters.size() + 1 != m.regions.size() && !m.regions.empty())
        errs.push_back("regions and cluster separators do not alternate");
    std::vector<std::string> dims;
    try {
        dims = iterator_dims(nest, rep);
    } catch (const TransformError& e) {
        errs.push_back(e.what());
    }
    for (const auto& r : m.regions) {
        int spatial = 0;
        std::vector<std::string> seen;
        for (const auto& d : r.directives) {
            if (d.kind == DirectiveKind::Cluster) { errs.push_back("Cluster inside region " + r.label); continue; }
            if (d.size < 1 || d.offset < 1) errs.push_back(d.str() + ": size and offset must be >= 1");
            // independent dims carry iterations: gaps drop them, overlaps repeat them
            else if (d.offset != d.size) errs.push_back(d.str() + ": offset must equal size on an independent dimension");
            if (std::find(dims.begin(), dims.end(), d.dim) == dims.end())
                errs.push_back(d.str() + ": " + d.dim + " is not an independent dimension of the nest");
            if (std::find(seen.begin(), seen.end(), d.dim) != seen.end())
                errs.push_back("region " + r.label + " changes " + d.dim + " twice");
            seen.push_back(d.dim);
            if (d.kind == DirectiveKind::SpatialMap) ++spatial;
        }
        if (spatial > 1) errs.push_back("region " + r.label + " has more than one SpatialMap");
    }
    for (auto c : m.clusters)
        if (c < 1) errs.push_back("Cluster(" + std::to_string(c) + ") must be >= 1");
    auto lv = pe_levels(m, num_pes);
    for (std::size_t k = 1; k < lv.size(); ++k)
        if (lv[k] > lv[k - 1])
            errs.push_back("Cluster(" + std::to_string(lv[k]) + ") exceeds its enclosing level of " +
                           std::to_string(lv[k - 1]) + " PEs");
    // one SpatialMap per PE level
    std::size_t level = 0;
    std::vector<int> per_level(lv.size(), 0);
    for (std::size_t r = 0; r < m.regions.size(); ++r) {
        for (const auto& d : m.regions[r].directives)
            if (d.kind == DirectiveKind::SpatialMap && level < per_level.size()) ++per_level[level];
        if (r < m.clusters.size() && m.clusters[r] > 1) ++level;
    }
    for (std::size_t k = 0; k < per_level.size(); ++k)
        if (per_level[k] > 1) errs.push_back("PE level " + std::to_string(k) + " has more than one SpatialMap");
    return errs;
}

// ============================================================================
// Text form
// ============================================================================

inline std::string render_mdc(const MdcMapping& m) {
    std::ostringstream os;
    os << "Computation: " << m.computation << "\n";
    os << "Dimensions:";
    for (std::size_t i = 0; i < m.dims.size(); ++i)
        os << (i ? ", " : " ") << m.dims[i].dim << "=" << m.dims[i].extent;
    os << "\n";
    for (const auto& d : m.program()) os << d.str() << "\n";
    return os.str();
}

namespace detail {

struct LineCursor {
    const std::string& s;
    int line;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& msg) const { throw MdcParseError(line, static_cast<int>(pos) + 1, msg); }
    void skip_ws() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
        skip_ws();
        if (pos < s.size() && s[pos] == c) { ++pos; return true; }
        return false;
    }
    void expect(char c) {
        if (!eat(c)) fail(std::string("expected '") + c + "'");
    }
    std::string ident() {
        skip_ws();
        std::size_t b = pos;
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
        if (b == pos) fail("expected a name");
        return s.substr(b, pos - b);
    }
    i64 integer() {
        skip_ws();
        std::size_t b = pos;
        if (pos < s.size() && s[pos] == '-') ++pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        if (b == pos || (pos == b + 1 && s[b] == '-')) { pos = b; fail("expected an integer"); }
        try {
            return std::stoll(s.substr(b, pos - b));
        } catch (const std::out_of_range&) {
            pos = b;
            fail("integer out of range");
        }
    }
    bool done() {
        skip_ws();
        return pos >= s.size();
    }
};

}  // namespace detail

inline MdcMapping parse_mdc(const std::string& text) {
    MdcMapping m;
    m.regions.emplace_back();
    std::istringstream is(text);
    std::string raw;
    int line = 0;
    bool have_comp = false, have_dims = false;
    while (std::getline(is, raw)) {
        ++line;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        detail::LineCursor c{raw, line};
        if (c.done()) continue;
        c.skip_ws();
        if (raw.compare(c.pos, 12, "Computation:") == 0) {
            if (have_comp) c.fail("duplicate Computation line");
            std::size_t b = c.pos + 12;
            while (b < raw.size() && raw[b] == ' ') ++b;
            m.computation = raw.substr(b);
            have_comp = true;
            continue;
        }
        if (raw.compare(c.pos, 11, "Dimensions:") == 0) {
            if (have_dims) c.fail("duplicate Dimensions line");
            c.pos += 11;
            have_dims = true;
            if (c.done()) continue;
            do {
                DimSize d;
                d.dim = c.ident();
                c.expect('=');
                std::size_t at = c.pos;
                d.extent = c.integer();
                if (d.extent < 1) { c.pos = at; c.fail("dimension extent must be >= 1"); }
                m.dims.push_back(d);
            } while (c.eat(','));
            if (!c.done()) c.fail("unexpected text after dimension list");
            continue;
        }
        std::size_t start = c.pos;
        std::string kw = c.ident();
        if (kw == "Cluster") {
            c.expect('(');
            std::size_t at = c.pos;
            i64 size = c.integer();
            if (size < 1) { c.pos = at; c.fail("Cluster size must be >= 1"); }
            c.expect(')');
            if (!c.done()) c.fail("unexpected text after Cluster");
            m.clusters.push_back(size);
            m.regions.emplace_back();
            continue;
        }
        if (kw != "TemporalMap" && kw != "SpatialMap") {
            c.pos = start;
            c.fail("unknown directive '" + kw + "'");
        }
        c.expect('(');
        std::size_t at = c.pos;
        i64 size = c.integer();
        if (size < 1) { c.pos = at; c.fail("size must be >= 1"); }
        c.expect(',');
        at = c.pos;
        i64 off = c.integer();
        if (off < 1) { c.pos = at; c.fail("offset must be >= 1"); }
        c.expect(')');
        std::string dim = c.ident();
        if (!c.done()) c.fail("unexpected text after directive");
        m.regions.back().directives.push_back(kw == "TemporalMap" ? Directive::temporal(size, off, dim)
                                                                   : Directive::spatial(size, off, dim));
    }
    if (m.regions.size() == 1 && m.regions[0].directives.empty() && m.clusters.empty())
        throw MdcParseError(line > 0 ? line : 1, 1, "no directives");
    relabel(m);
    return m;
}

}  // namespace mdcmap
