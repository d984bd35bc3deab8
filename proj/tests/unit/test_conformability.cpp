#include "catch_amalgamated.hpp"
#include "mdcmap/conformability.hpp"
#include "mdcmap/io.hpp"
#include "mdcmap/workloads.hpp"

using namespace mdcmap;

TEST_CASE("conv1d dependence graph", "[conformability]") {
    auto g = build_ddg(make_conv1d(8, 3));
    REQUIRE(g.nodes.size() == 3);
    CHECK(g.has_edge("d_O:i0", "d_I:i0+i1"));
    CHECK(g.has_edge("d_W:i1", "d_I:i0+i1"));
    CHECK(g.edges.size() == 2);
    CHECK(g.independent == std::vector<std::string>{"d_O", "d_W"});
}

TEST_CASE("stencil dependence graph", "[conformability]") {
    auto g = build_ddg(make_stencil3(8));
    CHECK(g.has_edge("d_I:i0", "d_I:i0+1"));
    CHECK(g.has_edge("d_I:i0", "d_I:i0+2"));
    CHECK(g.has_edge("d_I:i0", "d_O:i0"));
    CHECK(g.independent == std::vector<std::string>{"d_I"});
}

TEST_CASE("single reference has no edges", "[conformability]") {
    LoopNest n;
    n.iterators = {{"i0", 4, {}}};
    n.refs = {{"O", Access::Write, {{"d_O", Subscript::iter("i0"), 4}}}};
    n.stmt.reduce = ReduceOp::None;
    auto g = build_ddg(n);
    CHECK(g.edges.empty());
    CHECK(g.independent == std::vector<std::string>{"d_O"});
    CHECK(check_conformable(n).verdict);
}

TEST_CASE("operator table verdicts", "[conformability]") {
    auto ops = load_workload(std::string(MDCMAP_DATA_DIR) + "/workloads/operators.json");
    REQUIRE(ops.size() == 16);
    for (const auto& op : ops) {
        INFO(op.name);
        auto r = check_conformable(op.nest);
        CHECK(r.r1.pass);
        CHECK(r.r3.pass);
        CHECK(r.r4.pass);
        if (op.kind == "lstm_multicell") {
            CHECK_FALSE(r.r2.pass);
            CHECK_FALSE(r.verdict);
        } else {
            CHECK(r.r2.pass);
            CHECK(r.verdict);
        }
    }
}

TEST_CASE("each rule can fail on its own", "[conformability]") {
    auto fused = check_conformable(make_fused_conv1d(8, 3));
    CHECK_FALSE(fused.r1.pass);
    CHECK(fused.r2.pass);
    CHECK(fused.r3.pass);

    auto coupled = check_conformable(make_coupled_miv(4, 3));
    CHECK(coupled.r1.pass);
    CHECK(coupled.r2.pass);
    CHECK_FALSE(coupled.r3.pass);
    CHECK_FALSE(coupled.verdict);

    LoopNest scaled = make_conv1d(8, 3);
    scaled.refs[0].dims[0].sub = Subscript::iter("i0", 2);
    scaled.refs[0].dims[0].extent = 15;
    auto r4 = check_conformable(scaled);
    CHECK_FALSE(r4.r4.pass);
    CHECK_FALSE(r4.verdict);

    LoopNest prod = make_conv1d(8, 3);
    prod.stmt.reduce = ReduceOp::Mul;
    CHECK_FALSE(check_conformable(prod).r2.pass);
}

TEST_CASE("independent dims of generated operators", "[conformability]") {
    auto rep = check_conformable(make_conv2d({1, 4, 3, 5, 5, 3, 3}));
    std::vector<std::string> its;
    for (const auto& d : rep.independent_dims) {
        REQUIRE(d.iterators.size() == 1);
        its.push_back(d.iterators[0]);
    }
    std::sort(its.begin(), its.end());
    CHECK(its == std::vector<std::string>{"c", "k", "p", "q", "r", "s"});
    for (const auto& n : {"k", "c", "p", "q", "r", "s"}) CHECK(rep.dim_for(n) != nullptr);
}
