#include <set>

#include "catch_amalgamated.hpp"
#include "mdcmap/mapping.hpp"
#include "mdcmap/workloads.hpp"
#include "support.hpp"

using namespace mdcmap;

namespace {

bool has_code(const std::vector<Violation>& v, char c) {
    return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.code == c; });
}

AcceleratorConfig roomy(i64 pes) {
    auto hw = preset_p1();
    hw.num_pes = pes;
    hw.l1_bytes = 1 << 20;
    hw.l2_bytes = 1 << 24;
    return hw;
}

// Every (order2, t2, t1) with t1, t2 in [1, t3] that validate_mapping accepts.
std::set<std::tuple<std::vector<std::string>, std::vector<i64>, std::vector<i64>>> brute_onchip(
    const LoopNest& nest, const AcceleratorConfig& hw, const std::vector<i64>& t3, const PruningFlags& flags) {
    std::set<std::tuple<std::vector<std::string>, std::vector<i64>, std::vector<i64>>> out;
    const std::size_t n = nest.iterators.size();
    Mapping m = trivial_mapping(nest);
    m.t3 = t3;
    std::vector<i64> box;
    for (auto v : t3) box.push_back(v);
    for (auto v : t3) box.push_back(v);
    std::vector<std::string> order;
    for (const auto& l : nest.iterators) order.push_back(l.name);
    std::sort(order.begin(), order.end());
    do {
        m.order2 = order;
        testsupport::for_box(box, [&](const std::vector<i64>& pt) {
            for (std::size_t i = 0; i < n; ++i) {
                m.t1[i] = pt[i] + 1;
                m.t2[i] = pt[n + i] + 1;
            }
            if (validate_mapping(m, nest, hw, flags).empty()) out.insert({m.order2, m.t2, m.t1});
        });
    } while (std::next_permutation(order.begin(), order.end()));
    return out;
}

}  // namespace

TEST_CASE("validate_mapping examples", "[mapping]") {
    auto hw = preset_p1();
    SECTION("L1 fits with double buffering") {
        auto g = make_gemm({10, 10, 10});
        Mapping m = trivial_mapping(g);
        m.t1 = {10, 10, 5};   // C 100 + A 50 + B 50 = 200
        m.t3 = {10, 10, 10};
        CHECK(total_footprint(g, m.t1) == 200);
        CHECK_FALSE(has_code(validate_mapping(m, g, hw), 'c'));
        m.t1 = {10, 10, 10};
        CHECK(has_code(validate_mapping(m, g, hw), 'c'));
    }
    SECTION("utilization bound") {
        auto g = make_gemm({16, 16, 16});
        Mapping m = trivial_mapping(g);
        m.t1 = {1, 1, 1};
        m.t2 = {16, 1, 1};
        m.t3 = {16, 1, 1};
        auto v = validate_mapping(m, g, hw);
        CHECK(has_code(v, 'd'));
        PruningFlags off;
        off.utilization = false;
        CHECK_FALSE(has_code(validate_mapping(m, g, hw, off), 'd'));
        m.t2 = {16, 16, 1};
        m.t3 = {16, 16, 1};
        CHECK(has_code(validate_mapping(m, g, hw, off), 'd'));   // 256 PEs
    }
    SECTION("degenerate single-PE mapping") {
        auto g = make_gemm({4, 5, 6});
        PruningFlags f;
        f.utilization = false;
        CHECK(validate_mapping(trivial_mapping(g), g, roomy(1), f).empty());
    }
    SECTION("structure and nesting") {
        auto g = make_gemm({4, 4, 4});
        Mapping m = trivial_mapping(g);
        m.order2 = {"m", "m", "k"};
        CHECK(has_code(validate_mapping(m, g, hw), 's'));
        m = trivial_mapping(g);
        m.t1[0] = 3;
        m.t2[0] = 2;
        CHECK(has_code(validate_mapping(m, g, hw), 'a'));
        m = trivial_mapping(g);
        m.t2 = {2, 2, 2};
        m.t1 = {2, 2, 2};
        auto hw2 = roomy(8);
        hw2.max_parallel_loops = 2;
        CHECK(has_code(validate_mapping(m, g, hw2), 'e'));
        m = trivial_mapping(make_gemm({6, 4, 4}));
        m.t3[0] = 4;
        m.t1[0] = 4;
        CHECK(has_code(validate_mapping(m, make_gemm({6, 4, 4}), roomy(1), PruningFlags{true, false}), 'f'));
    }
}

TEST_CASE("enumerate_onchip matches brute-force filtering", "[mapping]") {
    std::mt19937_64 rng(5);
    using testsupport::draw;
    int checked = 0;
    for (int trial = 0; trial < 40; ++trial) {
        LoopNest nest = trial % 2 ? make_gemm({draw(rng, 1, 4), draw(rng, 1, 4), draw(rng, 1, 4)})
                                  : make_conv1d(draw(rng, 1, 8), draw(rng, 1, 4));
        auto hw = preset_p1();
        hw.num_pes = draw(rng, 1, 12);
        hw.l1_bytes = 2 * draw(rng, 3, 20);
        hw.max_parallel_loops = static_cast<int>(draw(rng, 1, 3));
        hw.utilization_bound = 0.25;
        PruningFlags f;
        f.factor_tiles = trial % 3 != 0;
        f.utilization = trial % 4 != 0;
        std::vector<i64> t3;
        for (const auto& l : nest.iterators) {
            auto d = f.factor_tiles ? divisors(l.extent) : std::vector<i64>{};
            t3.push_back(f.factor_tiles ? d[std::uniform_int_distribution<std::size_t>(0, d.size() - 1)(rng)]
                                        : draw(rng, 1, l.extent));
        }
        std::vector<OnchipPoint> stream = collect_onchip(nest, hw, t3, f);
        std::set<std::tuple<std::vector<std::string>, std::vector<i64>, std::vector<i64>>> got;
        for (const auto& p : stream) got.insert({p.order2, p.t2, p.t1});
        CHECK(got.size() == stream.size());
        CHECK(got == brute_onchip(nest, hw, t3, f));
        CHECK(onchip_space(nest, hw, t3, f) >= static_cast<Count>(0));
        ++checked;
    }
    CHECK(checked == 40);
}

TEST_CASE("enumeration order and small cases", "[mapping]") {
    auto hw = roomy(8);
    PruningFlags f;
    f.utilization = false;
    LoopNest one;
    one.iterators = {{"i", 4, {}}};
    one.refs = {{"O", Access::Write, {{"d_O", Subscript::iter("i"), 4}}}};
    auto pts = collect_onchip(one, hw, {4}, f);
    // (t2, t1) over divisor chains of 4: (1,{1,2,4}) (2,{1,2}) (4,{1})
    REQUIRE(pts.size() == 6);
    std::vector<std::pair<i64, i64>> seq;
    for (const auto& p : pts) seq.push_back({p.t2[0], p.t1[0]});
    CHECK(seq == std::vector<std::pair<i64, i64>>{{1, 1}, {1, 2}, {1, 4}, {2, 1}, {2, 2}, {4, 1}});

    auto strict = preset_p1();
    strict.utilization_bound = 1.0;
    LoopNest prime = one;
    prime.iterators[0].extent = 7;
    prime.refs[0].dims[0].extent = 7;
    CHECK(collect_onchip(prime, strict, {7}, PruningFlags{}).empty());

    LoopNest unit = one;
    unit.iterators[0].extent = 1;
    unit.refs[0].dims[0].extent = 1;
    auto u = collect_onchip(unit, hw, {1}, f);
    REQUIRE(u.size() == 1);
    CHECK(u[0].t1 == std::vector<i64>{1});
    CHECK(u[0].t2 == std::vector<i64>{1});
    auto s = space_size(unit, hw, f);
    CHECK(s.original_count == 1);
    CHECK(s.offchip_count == 1);
    CHECK(s.onchip_count == 1);
}

TEST_CASE("onchip count equals enumeration length", "[mapping]") {
    std::mt19937_64 rng(21);
    using testsupport::draw;
    for (int trial = 0; trial < 30; ++trial) {
        auto nest = trial % 3 == 0 ? make_conv1d(draw(rng, 1, 30), draw(rng, 1, 6))
                                   : make_gemm({draw(rng, 1, 12), draw(rng, 1, 12), draw(rng, 1, 12)});
        auto hw = preset_p1();
        hw.num_pes = draw(rng, 4, 32);
        PruningFlags f;
        f.utilization = trial % 2 == 0;
        f.factor_tiles = trial % 3 != 0;
        auto t3 = nest.extents();
        std::size_t n = 0;
        enumerate_onchip(nest, hw, t3, f, [&](const OnchipPoint&) { ++n; });
        // the closed form ignores L1 capacity, so it bounds the enumeration from above
        CHECK(onchip_space(nest, hw, t3, f) >= static_cast<Count>(n));
        hw.l1_bytes = 1 << 20;
        n = 0;
        enumerate_onchip(nest, hw, t3, f, [&](const OnchipPoint&) { ++n; });
        CHECK(onchip_space(nest, hw, t3, f) == static_cast<Count>(n));
    }
}

TEST_CASE("pruning shrinks the counts", "[mapping]") {
    auto nest = make_conv2d({1, 16, 8, 12, 12, 3, 3});
    auto hw = preset_p1();
    PruningFlags pruned;
    auto loose = PruningFlags::none();
    auto t3 = nest.extents();
    CHECK(offchip_space(nest, pruned) < offchip_space(nest, loose));
    CHECK(onchip_space(nest, hw, t3, pruned) < onchip_space(nest, hw, t3, loose));
    PruningFlags util_only = loose;
    util_only.utilization = true;
    CHECK(onchip_space(nest, hw, t3, util_only) < onchip_space(nest, hw, t3, loose));
    // divisor counts 5 4 6 6 2 2; layouts 3 * 4 * 3
    Count tiles = 5 * 4 * 6 * 6 * 2 * 2;
    CHECK(original_space(nest) == factorial(6) * factorial(6) * Count{36} * tiles * tiles * tiles);
}

TEST_CASE("factor pruning emits divisor chains", "[mapping]") {
    auto nest = make_conv2d({1, 12, 6, 8, 8, 3, 3});
    auto hw = preset_p1();
    std::vector<i64> t3{6, 3, 4, 2, 3, 1};
    std::size_t n = 0, bad = 0;
    enumerate_onchip(nest, hw, t3, PruningFlags{}, [&](const OnchipPoint& p) {
        for (std::size_t i = 0; i < t3.size(); ++i)
            if (t3[i] % (p.t1[i] * p.t2[i]) != 0) ++bad;
        ++n;
    });
    CHECK(n > 0);
    CHECK(bad == 0);
}

TEST_CASE("random_mapping returns valid mappings", "[mapping]") {
    std::mt19937_64 rng(3);
    auto nest = make_conv2d({1, 16, 8, 14, 14, 3, 3});
    auto hw = preset_p1();
    for (int i = 0; i < 50; ++i) {
        auto m = random_mapping(nest, hw, PruningFlags{}, rng);
        REQUIRE(m.has_value());
        CHECK(validate_mapping(*m, nest, hw).empty());
    }
}
