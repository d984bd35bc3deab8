#include "catch_amalgamated.hpp"
#include "mdcmap/conformability.hpp"
#include "mdcmap/io.hpp"
#include "mdcmap/workloads.hpp"
#include "support.hpp"

using namespace mdcmap;

namespace {

const TensorRef& ref_of(const LoopNest& n, const std::string& t) { return n.first_ref(t); }

}  // namespace

TEST_CASE("pointwise conv indexes input by channel and position", "[workloads]") {
    auto n = make_conv2d({1, 64, 64, 56, 56, 1, 1, 1, 1, ConvVariant::Pointwise});
    CHECK(check_conformable(n).verdict);
    const auto& I = ref_of(n, "I");
    REQUIRE(I.dims.size() == 3);
    CHECK(I.dims[0].sub == Subscript::iter("c"));
    CHECK(I.dims[1].extent == 56);
    CHECK(I.dims[2].extent == 56);
    // r and s have a single value, so the input touched by a tile is exactly (c, p, q)
    auto fp = testsupport::brute_footprint(n, {1, 4, 5, 6, 1, 1});
    CHECK(fp["I"] == 4 * 5 * 6);
    CHECK_THROWS_AS(make_conv2d({1, 8, 8, 4, 4, 3, 3, 1, 1, ConvVariant::Pointwise}), WorkloadError);
}

TEST_CASE("depthwise conv has no channel reduction", "[workloads]") {
    auto n = make_conv2d({1, 32, 32, 8, 8, 3, 3, 1, 1, ConvVariant::Depthwise});
    CHECK_FALSE(n.has_iterator("k"));
    CHECK(std::find(n.reduction_dims.begin(), n.reduction_dims.end(), "c") == n.reduction_dims.end());
    // every tensor is indexed by c, so no filter element is shared across channels
    for (const auto& r : n.refs) CHECK(r.uses("c"));
    CHECK(n.total_macs() == 32 * 8 * 8 * 9);
    CHECK_THROWS_AS(make_conv2d({1, 16, 32, 8, 8, 3, 3, 1, 1, ConvVariant::Depthwise}), WorkloadError);
}

TEST_CASE("strided and dilated input extents", "[workloads]") {
    auto s = make_conv2d({1, 2, 2, 7, 7, 3, 3, 2, 1, ConvVariant::Strided});
    CHECK(ref_of(s, "I").dims[1].extent == 2 * 6 + 3);
    auto d = make_conv2d({1, 2, 2, 6, 6, 3, 3, 1, 2, ConvVariant::Dilated});
    CHECK(ref_of(d, "I").dims[1].extent == 5 + 2 * 2 + 1);
    CHECK_THROWS_AS(make_conv2d({1, 2, 2, 6, 6, 3, 3, 1, 1, ConvVariant::Dilated}), WorkloadError);
    CHECK_THROWS_AS(make_conv2d({1, 0, 2, 6, 6, 3, 3}), WorkloadError);
}

TEST_CASE("batch adds an n loop", "[workloads]") {
    auto n = make_conv2d({2, 4, 3, 5, 5, 3, 3});
    REQUIRE(n.iterators.size() == 7);
    CHECK(n.iterators[0].name == "n");
    CHECK(n.total_macs() == 2 * 4 * 3 * 25 * 9);
}

TEST_CASE("gemm rows", "[workloads]") {
    auto g = make_gemm({128, 2048, 4096});
    CHECK(g.extents() == std::vector<i64>{128, 2048, 4096});
    auto ncf = make_gemm({2048, 1, 128});
    CHECK(ncf.total_macs() == 2048 * 128);
    auto one = make_gemm({1, 1, 1});
    CHECK(one.total_macs() == 1);
    for (const auto& f : tensor_footprint(one, {1, 1, 1})) CHECK(f.elements == 1);
    CHECK_THROWS_AS(make_gemm({0, 1, 1}), WorkloadError);
}

TEST_CASE("lstm cell as gemm", "[workloads]") {
    CHECK(lstm_to_gemm(500, 128) == GemmParams{128, 500, 1000});
    CHECK(lstm_to_gemm(1000, 128) == GemmParams{128, 1000, 2000});
    CHECK(lstm_to_gemm(1, 1) == GemmParams{1, 1, 2});
    CHECK(make_lstm_cell(500, 128).extents() == std::vector<i64>{128, 500, 1000});
}

TEST_CASE("mlp layers", "[workloads]") {
    auto fc1 = make_mlp(784, 1000, 128);
    CHECK(fc1.extents() == std::vector<i64>{128, 1000, 784});
    CHECK(make_mlp(1000, 500, 128).total_macs() == 128 * 500 * 1000);
    CHECK(make_mlp(1, 1, 1).total_macs() == 1);
}

TEST_CASE("bundled workload files load and are conformable", "[workloads]") {
    const std::string dir = std::string(MDCMAP_DATA_DIR) + "/workloads/";
    std::map<std::string, std::size_t> sizes{{"alexnet", 5}, {"vgg16", 9},  {"resnet50", 20}, {"mobilenetv2", 30},
                                             {"gemm", 10},   {"mlp", 6},    {"lstm", 3}};
    for (const auto& [file, count] : sizes) {
        auto ops = load_workload(dir + file + ".json");
        CHECK(ops.size() == count);
        for (const auto& op : ops) {
            INFO(file << "/" << op.name);
            CHECK(check_conformable(op.nest).verdict);
        }
    }
    auto gemm = load_workload(dir + "gemm.json");
    CHECK(gemm[0].nest.extents() == std::vector<i64>{128, 2048, 4096});
    auto mlp = load_workload(dir + "mlp.json");
    CHECK(mlp[0].nest.extents() == std::vector<i64>{128, 1000, 784});
    CHECK(mlp[5].nest.extents() == std::vector<i64>{128, 500, 1000});
    auto lstm = load_workload(dir + "lstm.json");
    CHECK(lstm[1].nest.extents() == std::vector<i64>{128, 1000, 2000});
}
