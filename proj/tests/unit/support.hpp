// Shared helpers for the unit and acceptance suites: seeded RNG and brute-force reference counts.
#pragma once

#include <map>
#include <random>
#include <set>
#include <vector>

#include "mdcmap/loopnest.hpp"
#include "mdcmap/offchip_cost.hpp"
#include "mdcmap/oracle.hpp"

namespace testsupport {

using mdcmap::i64;

inline i64 draw(std::mt19937_64& rng, i64 lo, i64 hi) { return std::uniform_int_distribution<i64>(lo, hi)(rng); }

// Calls f(point) for every point of the box [0, ext) in lexicographic order.
template <class F>
void for_box(const std::vector<i64>& ext, F&& f) {
    std::vector<i64> it(ext.size(), 0);
    for (auto e : ext)
        if (e <= 0) return;
    while (true) {
        f(static_cast<const std::vector<i64>&>(it));
        std::size_t k = ext.size();
        while (k > 0) {
            --k;
            if (++it[k] < ext[k]) break;
            it[k] = 0;
            if (k == 0) return;
        }
        if (ext.empty()) return;
    }
}

inline i64 eval(const mdcmap::Subscript& s, const mdcmap::LoopNest& nest, const std::vector<i64>& pt) {
    i64 v = s.constant;
    for (const auto& t : s.terms) v += t.coeff * pt[nest.index_of(t.iter)];
    return v;
}

// Unique tensor elements touched by a tile anchored at the origin.
inline std::map<std::string, i64> brute_footprint(const mdcmap::LoopNest& nest, const std::vector<i64>& tile) {
    std::map<std::string, std::set<std::vector<i64>>> seen;
    for_box(tile, [&](const std::vector<i64>& pt) {
        for (const auto& r : nest.refs) {
            std::vector<i64> idx;
            for (const auto& d : r.dims) idx.push_back(eval(d.sub, nest, pt));
            seen[r.tensor].insert(idx);
        }
    });
    std::map<std::string, i64> out;
    for (const auto& [k, v] : seen) out[k] = static_cast<i64>(v.size());
    return out;
}

using namespace mdcmap;

inline i64 absent_product(const LoopNest& n, const TensorRef& r, const std::vector<i64>& t3) {
    i64 f = 1;
    for (std::size_t i = 0; i < n.iterators.size(); ++i)
        if (!r.uses(n.iterators[i].name)) f *= t3[i];
    return f;
}

struct Brute {
    std::vector<i64> t3;
    Layout layout;
    i64 blocks = -1;
};

// Exhaustive (t3, layout) search scored with the enumeration oracle.
inline Brute brute_offchip(const LoopNest& nest, const AcceleratorConfig& hw) {
    const i64 b = hw.dram_block_bytes / nest.bytes_per_element;
    const auto tensors = nest.tensors();
    std::vector<std::vector<i64>> cands;
    for (const auto& l : nest.iterators) cands.push_back(divisors(l.extent));
    std::vector<i64> lay_ext;
    for (const auto& t : tensors) lay_ext.push_back(static_cast<i64>(nest.first_ref(t).dims.size()));
    std::vector<i64> idx_ext;
    for (const auto& c : cands) idx_ext.push_back(static_cast<i64>(c.size()));
    Brute best;
    for_box(idx_ext, [&](const std::vector<i64>& ix) {
        std::vector<i64> t3;
        for (std::size_t i = 0; i < ix.size(); ++i) t3.push_back(cands[i][static_cast<std::size_t>(ix[i])]);
        i64 fp = 0;
        for (const auto& [t, e] : brute_footprint(nest, t3)) fp += e;
        if (2 * fp * nest.bytes_per_element > hw.l2_bytes) return;
        const i64 iters = tile_iterations(t3);
        for_box(lay_ext, [&](const std::vector<i64>& lay) {
            Layout L(lay.begin(), lay.end());
            i64 blk = 0;
            for (const auto& r : nest.refs) {
                auto ti = tensor_index(nest, r.tensor);
                blk += exact_distinct_blocks(nest, r, t3, L[ti], b) * absent_product(nest, r, t3);
            }
            bool better = best.blocks < 0;
            if (!better) {
                const i64 bi = tile_iterations(best.t3);
                const auto lhs = static_cast<__int128>(blk) * bi, rhs = static_cast<__int128>(best.blocks) * iters;
                if (lhs != rhs) better = lhs < rhs;
                else if (iters != bi) better = iters > bi;
                else if (t3 != best.t3) better = t3 < best.t3;
                else better = L < best.layout;
            }
            if (better) best = {t3, L, blk};
        });
    });
    return best;
}

}  // namespace testsupport
