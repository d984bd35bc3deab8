#include "catch_amalgamated.hpp"
#include "mdcmap/explorer.hpp"
#include "mdcmap/io.hpp"
#include "mdcmap/workloads.hpp"

#include <optional>

using namespace mdcmap;

namespace {

AcceleratorConfig pes(i64 n) {
    auto hw = preset_p1();
    hw.num_pes = n;
    return hw;
}

struct Best {
    std::optional<Mapping> m;
    i64 lat = 0;
    double en = 0, edp = 0;
};

// Score every on-chip point with the full cost model and keep the per-goal
// minimum under (goal value, runtime, encoding).
std::array<Best, 3> brute_search(const LoopNest& nest, const AcceleratorConfig& hw, const PruningFlags& flags,
                                 const std::optional<StyleRule>& rule = std::nullopt) {
    const auto plan = optimize_offchip(nest, hw, flags);
    const auto rep = check_conformable(nest);
    std::array<Best, 3> best;
    enumerate_onchip(nest, hw, plan.t3, flags, [&](const OnchipPoint& p) {
        if (rule) {
            for (std::size_t i = 0; i < p.t2.size(); ++i)
                if (p.t2[i] > 1 && std::find(rule->parallel.begin(), rule->parallel.end(), i) == rule->parallel.end())
                    return;
            if (!rule->inner_group.empty()) {
                bool inner = false;
                for (const auto& it : p.order2) {
                    bool g = rule->inner_group[nest.index_of(it)];
                    if (!g && inner) return;
                    inner = inner || g;
                }
            }
        }
        Mapping m;
        m.t1 = p.t1;
        m.t2 = p.t2;
        m.t3 = plan.t3;
        m.order2 = p.order2;
        m.order3 = plan.order3;
        m.layout = plan.layout;
        REQUIRE(validate_mapping(m, nest, hw, flags).empty());
        AnalysisOptions ao;
        ao.t3 = plan.t3;
        ao.layout = plan.layout;
        ao.flags = flags;
        auto r = analyze_mapping(transform_to_mdc(m, nest, rep), nest, hw, ao);
        for (auto g : kAllGoals) {
            auto& b = best[static_cast<std::size_t>(g)];
            bool take = !b.m;
            if (!take) {
                double va = detail::goal_value(r.latency_cycles, r.energy, r.edp, g);
                double vb = detail::goal_value(b.lat, b.en, b.edp, g);
                if (va != vb) take = va < vb;
                else if (r.latency_cycles != b.lat) take = r.latency_cycles < b.lat;
                else take = m.encode(nest) < b.m->encode(nest);
            }
            if (take) b = {m, r.latency_cycles, r.energy, r.edp};
        }
    });
    return best;
}

void check_same(const SearchResult& s, const std::array<Best, 3>& b) {
    for (auto g : kAllGoals) {
        INFO(to_string(g));
        const auto& x = s.get(g);
        const auto& y = b[static_cast<std::size_t>(g)];
        REQUIRE(x.found == y.m.has_value());
        if (!x.found) continue;
        CHECK(x.mapping == *y.m);
        CHECK(x.report.latency_cycles == y.lat);
        CHECK(x.report.energy == y.en);
    }
}

LoopNest small_conv() { return make_conv2d({1, 2, 2, 3, 3, 2, 1, 1, 1, ConvVariant::Regular}); }

}  // namespace

TEST_CASE("search equals exhaustive scoring", "[explorer]") {
    PruningFlags loose = PruningFlags::none();
    SECTION("conv1d") {
        auto n = make_conv1d(6, 3);
        check_same(decoupled_optimize(n, pes(4), {kAllGoals.begin(), kAllGoals.end()}, loose), brute_search(n, pes(4), loose));
        check_same(decoupled_optimize(n, pes(4)), brute_search(n, pes(4), PruningFlags{}));
    }
    SECTION("gemm") {
        auto n = make_gemm({4, 4, 2});
        check_same(decoupled_optimize(n, pes(8), {kAllGoals.begin(), kAllGoals.end()}, loose), brute_search(n, pes(8), loose));
    }
    SECTION("conv2d with small level-3 budget") {
        auto n = small_conv();
        auto hw = pes(6);
        hw.l2_bytes = 64;
        check_same(decoupled_optimize(n, hw), brute_search(n, hw, PruningFlags{}));
    }
}

TEST_CASE("baselines equal filtered exhaustive scoring", "[explorer]") {
    auto n = small_conv();
    auto hw = pes(6);
    for (auto st : kAllStyles) {
        INFO(to_string(st));
        auto r = constrained_baseline(n, hw, st);
        check_same(r, brute_search(n, hw, PruningFlags{}, style_rule(n, st)));
    }
}

TEST_CASE("style constraints hold on the results", "[explorer]") {
    auto n = make_conv2d({1, 4, 4, 3, 3, 3, 3, 1, 1, ConvVariant::Regular});
    auto hw = pes(16);
    ExploreOptions o;
    o.styles = {kAllStyles.begin(), kAllStyles.end()};
    auto res = explore(n, hw, o);
    const auto& dec = res.decoupled.get(SearchGoal::Runtime);
    REQUIRE(dec.found);
    for (const auto& b : res.baselines) {
        INFO(to_string(b.style));
        REQUIRE(b.applicable);
        for (auto g : kAllGoals) {
            const auto& x = b.result.get(g);
            if (!x.found) continue;
            const auto& m = x.mapping;
            auto par = [&](const char* it) { return m.t2[n.index_of(it)] > 1; };
            CHECK(validate_mapping(m, n, hw).empty());
            // superset dominance
            CHECK(detail::goal_value(res.decoupled.get(g).report.latency_cycles, res.decoupled.get(g).report.energy,
                                     res.decoupled.get(g).report.edp, g) <=
                  detail::goal_value(x.report.latency_cycles, x.report.energy, x.report.edp, g));
            switch (b.style) {
            case BaselineStyle::DmazeLike:
                for (const auto& it : n.iterators) CHECK((it.name == "k" || !par(it.name.c_str())));
                break;
            case BaselineStyle::InterstellarLike:
                for (const auto& it : n.iterators)
                    CHECK((it.name == "k" || it.name == "c" || !par(it.name.c_str())));
                break;
            case BaselineStyle::RowStationary:
                for (const auto& it : n.iterators)
                    CHECK((it.name == "p" || it.name == "s" || !par(it.name.c_str())));
                break;
            case BaselineStyle::WeightStationary: {
                // k c r s index W; they come last in order2
                bool inner = false;
                for (const auto& it : m.order2) {
                    bool w = it == "k" || it == "c" || it == "r" || it == "s";
                    CHECK((w || !inner));
                    inner = inner || w;
                }
                break;
            }
            case BaselineStyle::OutputStationary: {
                bool inner = false;
                for (const auto& it : m.order2) {
                    bool red = it == "c" || it == "r" || it == "s";
                    CHECK((red || !inner));
                    inner = inner || red;
                }
                for (const auto& it : n.iterators)
                    CHECK((it.name == "p" || it.name == "q" || !par(it.name.c_str())));
                break;
            }
            }
        }
    }
}

TEST_CASE("inapplicable styles", "[explorer]") {
    auto g = make_gemm({8, 8, 8});
    CHECK_THROWS_AS(constrained_baseline(g, pes(8), BaselineStyle::RowStationary), StyleError);
    CHECK_THROWS_AS(constrained_baseline(g, pes(8), BaselineStyle::OutputStationary), StyleError);
    CHECK_NOTHROW(constrained_baseline(g, pes(8), BaselineStyle::DmazeLike));
    ExploreOptions o;
    o.styles = {BaselineStyle::RowStationary};
    auto res = explore(g, pes(8), o);
    REQUIRE(res.baselines.size() == 1);
    CHECK_FALSE(res.baselines[0].applicable);
    CHECK_FALSE(res.baselines[0].reason.empty());
    CHECK_THROWS_AS(decoupled_optimize(make_lstm_multicell(4, 4), pes(8)), SearchError);
}

TEST_CASE("worker count does not change results", "[explorer]") {
    std::vector<LoopNest> nests = {make_conv1d(12, 3), make_gemm({8, 6, 4}), small_conv(),
                                   make_conv2d({1, 4, 4, 4, 4, 3, 3, 1, 1, ConvVariant::Depthwise})};
    for (const auto& n : nests) {
        ExploreOptions o;
        o.styles = {kAllStyles.begin(), kAllStyles.end()};
        auto a = explore(n, pes(12), o);
        o.workers = 3;
        auto b = explore(n, pes(12), o);
        CHECK(to_json(a.decoupled, n).dump() == to_json(b.decoupled, n).dump());
        CHECK(a.decoupled.evaluated == b.decoupled.evaluated);
        for (std::size_t s = 0; s < a.baselines.size(); ++s)
            if (a.baselines[s].applicable)
                CHECK(to_json(a.baselines[s].result, n).dump() == to_json(b.baselines[s].result, n).dump());
    }
}

TEST_CASE("one-point space", "[explorer]") {
    LoopNest n;
    n.name = "copy";
    n.iterators = {{"i", 1, {}}};
    n.refs = {{"O", Access::ReadWrite, {{"d_O", Subscript::iter("i"), 1}}}, {"A", Access::Read, {{"d_A", Subscript::iter("i"), 1}}}};
    auto pts = collect_onchip(n, pes(1), {1}, PruningFlags{});
    REQUIRE(pts.size() == 1);
    auto r = decoupled_optimize(n, pes(1));
    for (auto g : kAllGoals) {
        REQUIRE(r.get(g).found);
        CHECK(r.get(g).mapping.t1 == pts[0].t1);
        CHECK(r.get(g).mapping.t2 == pts[0].t2);
        CHECK(r.get(g).mapping.order2 == pts[0].order2);
    }
}

TEST_CASE("large array spreads gemm over several loops", "[explorer]") {
    auto n = make_gemm({32, 32, 32});
    auto r = decoupled_optimize(n, preset_p2(), {SearchGoal::Runtime});
    REQUIRE(r.get(SearchGoal::Runtime).found);
    CHECK(r.get(SearchGoal::Runtime).mapping.parallel_loops() >= 2);
    CHECK(r.get(SearchGoal::Runtime).mapping.parallelism() > 32);
}

TEST_CASE("roofline", "[explorer]") {
    auto g = make_gemm({64, 64, 64});
    CHECK(roofline_peak(g, preset_p1()).gops == Catch::Approx(67.2).epsilon(1e-12));
    CHECK(roofline_peak(g, preset_p2()).gops == Catch::Approx(409.6).epsilon(1e-12));
    auto rf = roofline_peak(g, preset_p1());
    CHECK(rf.compute_seconds == Catch::Approx(2.0 * 64 * 64 * 64 / 67.2e9));
    CHECK(rf.peak_seconds == std::max(rf.compute_seconds, rf.bandwidth_seconds));
    LoopNest empty;
    empty.name = "empty";
    empty.refs = {{"A", Access::Read, {{"d_A", Subscript::sum({}, 0), 4}}}};
    auto z = roofline_peak(empty, preset_p1());
    CHECK(z.compute_seconds == 0);
    CHECK(z.bound == "bandwidth");
    CHECK(z.bandwidth_seconds > 0);
}

TEST_CASE("best runtime respects the roofline", "[explorer]") {
    std::vector<LoopNest> nests = {make_conv1d(32, 5), make_gemm({16, 8, 8}), small_conv()};
    for (auto hw : {preset_p1(), pes(8)})
        for (const auto& n : nests) {
            auto r = decoupled_optimize(n, hw, {SearchGoal::Runtime});
            REQUIRE(r.get(SearchGoal::Runtime).found);
            CHECK(r.get(SearchGoal::Runtime).report.runtime_seconds >= roofline_peak(n, hw).peak_seconds);
        }
}
