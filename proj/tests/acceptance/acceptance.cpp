// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "../unit/support.hpp"
#include "mdcmap/explorer.hpp"
#include "mdcmap/verify.hpp"
#include "mdcmap/io.hpp"
#include "mdcmap/workloads.hpp"

using namespace mdcmap;
using testsupport::draw;

namespace {

const std::string kData = MDCMAP_DATA_DIR;

// time limits in seconds
constexpr double kLimitConformability = 1;
constexpr double kLimitDb = 60;
constexpr double kLimitSemantics = 300;
constexpr double kLimitOffchip = 60;
constexpr double kLimitDominance = 1800;
constexpr double kLimitSpace = 300;

constexpr int kDbInstances = 500;
constexpr int kSimMappings = 100;
constexpr int kTransformMappings = 100;
constexpr int kSeeds = 10;
constexpr unsigned kWorkers = 4;
constexpr double kMinLog10Reduction = 8.0;

AcceleratorConfig with_pes(i64 n) {
    auto hw = preset_p1();
    hw.num_pes = n;
    hw.l1_bytes = hw.l2_bytes = 1 << 20;
    return hw;
}

struct Outcome {
    bool pass = true;
    std::ostringstream note;
    void require(bool ok, const std::string& what) {
        if (!ok && pass) note << "first failure: " << what << "; ";
        pass = pass && ok;
    }
};

// ---------------------------------------------------------------------------

void conformability_table(Outcome& o) {
    // name -> expected verdict, failing rule (0 = none)
    const std::map<std::string, std::pair<bool, int>> table = {
        {"conv1d", {true, 0}},           {"conv2d_regular", {true, 0}},  {"conv2d_pointwise", {true, 0}},
        {"conv2d_depthwise", {true, 0}}, {"conv2d_strided", {true, 0}},  {"conv2d_dilated", {true, 0}},
        {"mlp", {true, 0}},              {"pool_max", {true, 0}},        {"pool_avg", {true, 0}},
        {"gemm_regular", {true, 0}},     {"gemm_triangular", {true, 0}}, {"lstm_single_cell", {true, 0}},
        {"lstm_multicell", {false, 2}},  {"elementwise_residual", {true, 0}},
        {"elementwise_relu", {true, 0}}, {"stencil", {true, 0}},
    };
    auto ops = load_workload(kData + "/workloads/operators.json");
    o.require(ops.size() == table.size(), "operator count");
    for (const auto& op : ops) {
        auto it = table.find(op.name);
        o.require(it != table.end(), "unexpected row " + op.name);
        if (it == table.end()) continue;
        auto rep = check_conformable(op.nest);
        const bool pass[4] = {rep.r1.pass, rep.r2.pass, rep.r3.pass, rep.r4.pass};
        o.require(rep.verdict == it->second.first, op.name + " verdict");
        for (int r = 1; r <= 4; ++r) o.require(pass[r - 1] == (it->second.second != r), op.name + " R" + std::to_string(r));
    }
    o.note << ops.size() << " rows";
}

void db_fidelity(Outcome& o) {
    LoopNest n;
    n.iterators = {{"x", 16, {}}, {"y", 16, {}}, {"z", 16, {}}};
    n.refs = {{"I", Access::Read, {{"d0", Subscript::sum({{"x", 1}, {"y", 1}}), 31}, {"d1", Subscript::iter("y"), 16}}}};
    const i64 paper = distinct_blocks(n, n.refs[0], {4, 4, 2}, 0, 8, DbMode::Paper);
    o.require(paper == 8, "paper mode gave " + std::to_string(paper));

    std::mt19937_64 rng(2024);
    const i64 bs[] = {1, 2, 4, 8, 64};
    int bad = 0;
    for (int trial = 0; trial < kDbInstances; ++trial) {
        LoopNest m;
        const int ni = static_cast<int>(draw(rng, 1, 3));
        for (int i = 0; i < ni; ++i) m.iterators.push_back({"i" + std::to_string(i), 16, {}});
        TensorRef r{"A", Access::Read, {}};
        const int nd = static_cast<int>(draw(rng, 1, 3));
        for (int k = 0; k < nd; ++k) {
            Subscript s;
            s.constant = draw(rng, 0, 2);
            for (int i = 0; i < ni; ++i)
                if (draw(rng, 0, 2) > 0) s.terms.push_back({"i" + std::to_string(i), draw(rng, 1, 2)});
            r.dims.push_back({"d" + std::to_string(k), s, 100});
        }
        m.refs = {r};
        std::vector<i64> t3;
        for (int i = 0; i < ni; ++i) t3.push_back(draw(rng, 1, 16));
        const i64 b = bs[draw(rng, 0, 4)];
        const auto inner = static_cast<std::size_t>(draw(rng, 0, nd - 1));
        bad += distinct_blocks(m, r, t3, inner, b, DbMode::Exact, false) != exact_distinct_blocks(m, r, t3, inner, b);
    }
    o.require(bad == 0, std::to_string(bad) + " exact-mode mismatches");
    o.note << "paper " << paper << ", " << kDbInstances << " exact instances, " << bad << " mismatches";
}

void roofline_constants(Outcome& o) {
    auto g = make_gemm({64, 64, 64});
    const double a = roofline_peak(g, preset_p1()).gops, b = roofline_peak(g, preset_p2()).gops;
    // exact up to the decimal rendering of the products
    o.require(std::abs(a - 67.2) < 1e-12 && std::abs(b - 409.6) < 1e-12, "peak GOPS");
    o.note << "p1 " << a << " GOPS, p2 " << b << " GOPS";
}

void mdc_semantics(Outcome& o) {
    auto two_pe = parse_mdc("Computation: O[i0] += W[i1] * I[i0+i1]\nDimensions: d_O=2, d_W=6\n"
                         "SpatialMap(1,1) d_O\nTemporalMap(2,2) d_W\n");
    auto conv = make_conv1d(2, 6);
    auto tr = simulate_mdc_reference(two_pe, conv, with_pes(2));
    o.require(tr.steps.size() == 3, "two-PE schedule length");
    for (std::size_t t = 0; t < 2 && t < tr.steps.size(); ++t) {
        o.require(tr.steps[t].work.size() == 2, "two active PEs");
        for (std::size_t pe = 0; pe < tr.steps[t].work.size(); ++pe) {
            const auto& w = tr.steps[t].work[pe];
            o.require(w.pe == static_cast<int>(pe), "PE id");
            o.require(w.lo == std::vector<i64>{static_cast<i64>(pe), 2 * static_cast<i64>(t)}, "window start");
            o.require(w.len == std::vector<i64>{1, 2}, "window length");
        }
    }
    std::mt19937_64 rng(4);
    int checked = 0, mism = 0;
    for (int trial = 0; checked < kSimMappings && trial < 20 * kSimMappings; ++trial) {
        LoopNest nest = trial % 2 ? make_gemm({4, 4, 4}) : make_conv1d(draw(rng, 1, 12), draw(rng, 1, 5));
        auto hw = with_pes(draw(rng, 1, 8));
        hw.multicast = draw(rng, 0, 3) != 0;
        auto m = random_mapping(nest, hw, PruningFlags::none(), rng);
        if (!m) continue;
        auto d = compare_with_oracle(transform_to_mdc(*m, nest), nest, hw);
        if (!d.ok()) {
            ++mism;
            o.require(false, d.mismatches.front());
        }
        ++checked;
    }
    o.require(checked == kSimMappings, "sampled " + std::to_string(checked) + " mappings");
    o.note << "two-PE windows, " << checked << " mappings, " << mism << " mismatches";
}

void transformation(Outcome& o) {
    std::mt19937_64 rng(5);
    auto hw = preset_p1();
    int checked = 0;
    for (int trial = 0; checked < kTransformMappings && trial < 20 * kTransformMappings; ++trial) {
        LoopNest nest;
        switch (trial % 4) {
        case 0: nest = make_conv2d({1, draw(rng, 1, 8), draw(rng, 1, 6), draw(rng, 2, 8), draw(rng, 2, 8), 3, 3}); break;
        case 1: nest = make_gemm({draw(rng, 1, 32), draw(rng, 1, 32), draw(rng, 1, 32)}); break;
        case 2: nest = make_conv1d(draw(rng, 1, 30), draw(rng, 1, 6)); break;
        default: nest = make_conv2d({1, 6, 6, 8, 8, 3, 3, 1, 1, ConvVariant::Depthwise});
        }
        auto rep = check_conformable(nest);
        auto m = random_mapping(nest, hw, PruningFlags::none(), rng);
        if (!m) continue;
        auto mdc = transform_to_mdc(*m, nest, rep);
        o.require(validate_mdc(mdc, nest, rep, hw.num_pes).empty(), "valid program");
        const auto text = render_mdc(mdc);
        o.require(render_mdc(parse_mdc(text)) == text, "render/parse round trip");
        auto vol = directive_volumes(mdc, nest, rep);
        auto fp = testsupport::brute_footprint(nest, m->t1);
        const auto tensors = nest.tensors();
        o.require(vol.size() == tensors.size(), "volume count");
        for (std::size_t t = 0; t < tensors.size() && t < vol.size(); ++t)
            o.require(vol[t] == fp[tensors[t]], "volume of " + tensors[t]);
        ++checked;
    }
    o.require(checked == kTransformMappings, "sampled " + std::to_string(checked) + " mappings");
    o.note << checked << " mappings";
}

void offchip_optimality(Outcome& o) {
    auto hw = preset_p1();
    hw.dram_block_bytes = 4;
    struct Case {
        LoopNest nest;
        i64 l2;
    };
    std::vector<Case> cases = {{make_gemm({8, 8, 8}), 256}, {make_gemm({8, 8, 8}), 96},  {make_conv1d(12, 4), 40},
                               {make_conv1d(16, 3), 64},    {make_conv1d(30, 5), 100}, {make_conv1d(64, 8), 1 << 20}};
    for (auto& c : cases) {
        hw.l2_bytes = c.l2;
        auto plan = optimize_offchip(c.nest, hw);
        auto brute = testsupport::brute_offchip(c.nest, hw);
        o.require(plan.t3 == brute.t3 && plan.layout == brute.layout && plan.blocks == brute.blocks,
                  c.nest.name + " with L2 " + std::to_string(c.l2));
    }
    o.note << cases.size() << " instances";
}

void dominance(Outcome& o) {
    const char* files[] = {"alexnet", "vgg16", "resnet50", "mobilenetv2", "gemm", "mlp", "lstm"};
    auto hw = preset_p1();
    int ops = 0, pairs = 0, vacuous = 0;
    for (const char* f : files) {
        for (const auto& op : load_workload(kData + "/workloads/" + f + ".json")) {
            ExploreOptions opt;
            opt.goals = {SearchGoal::Runtime, SearchGoal::Energy};
            opt.styles = {kAllStyles.begin(), kAllStyles.end()};
            auto res = explore(op.nest, hw, opt);
            const auto& rt = res.decoupled.get(SearchGoal::Runtime);
            const auto& en = res.decoupled.get(SearchGoal::Energy);
            o.require(rt.found && en.found, op.name + " has no decoupled mapping");
            for (const auto& b : res.baselines) {
                if (!b.applicable) continue;
                const auto& brt = b.result.get(SearchGoal::Runtime);
                const auto& ben = b.result.get(SearchGoal::Energy);
                if (!brt.found) {
                    ++vacuous;
                    continue;
                }
                ++pairs;
                o.require(rt.report.latency_cycles <= brt.report.latency_cycles,
                          std::string(f) + "/" + op.name + " runtime vs " + to_string(b.style));
                o.require(en.report.energy <= ben.report.energy,
                          std::string(f) + "/" + op.name + " energy vs " + to_string(b.style));
            }
            ++ops;
        }
    }
    o.note << ops << " operators, " << pairs << " baseline comparisons, " << vacuous << " with empty baseline space";
}

void space_reduction(Outcome& o) {
    const char* files[] = {"alexnet", "vgg16", "resnet50", "mobilenetv2"};
    auto hw = preset_p1();
    double sum = 0;
    int layers = 0;
    for (const char* f : files)
        for (const auto& op : load_workload(kData + "/workloads/" + f + ".json")) {
            if (op.kind != "conv2d") continue;
            auto s = space_size(op.nest, hw);
            const long double explored =
                static_cast<long double>(s.offchip_count) + static_cast<long double>(s.onchip_count);
            sum += static_cast<double>(std::log10(static_cast<long double>(s.original_count)) - std::log10(explored));
            ++layers;
        }
    const double gm = layers ? sum / layers : 0;
    o.require(layers > 0, "no layers");
    o.require(gm >= kMinLog10Reduction, "geometric-mean reduction 10^" + std::to_string(gm));
    char buf[64];
    std::snprintf(buf, sizeof buf, "10^%.2f", gm);
    o.note << layers << " layers, geometric-mean reduction " << buf;
}

void determinism(Outcome& o) {
    for (int seed = 1; seed <= kSeeds; ++seed) {
        std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
        LoopNest nest;
        switch (seed % 3) {
        case 0: nest = make_gemm({draw(rng, 4, 48), draw(rng, 4, 48), draw(rng, 4, 48)}); break;
        case 1:
            nest = make_conv2d({1, draw(rng, 2, 16), draw(rng, 2, 16), draw(rng, 4, 14), draw(rng, 4, 14), 3, 3});
            break;
        default: nest = make_conv1d(draw(rng, 8, 64), draw(rng, 2, 7));
        }
        auto hw = preset_p1();
        hw.num_pes = draw(rng, 4, 168);
        ExploreOptions opt;
        opt.styles = {kAllStyles.begin(), kAllStyles.end()};
        auto dump = [&](const ExploreResult& r) {
            json j = json::array({to_json(r.decoupled, nest)});
            for (const auto& b : r.baselines)
                if (b.applicable) j.push_back(to_json(b.result, nest));
            return j.dump();
        };
        auto one = dump(explore(nest, hw, opt));
        opt.workers = kWorkers;
        auto many = dump(explore(nest, hw, opt));
        o.require(one == many, "seed " + std::to_string(seed));
    }
    o.note << kSeeds << " seeds, 1 vs " << kWorkers << " workers";
}

void depthwise(Outcome& o) {
    auto n = make_conv2d({1, 4, 4, 7, 7, 3, 3, 1, 1, ConvVariant::Depthwise});
    auto hw = preset_p1();
    auto plan = optimize_offchip(n, hw);
    const std::vector<i64> full{7, 7, 3, 3};
    o.require(std::vector<i64>(plan.t3.begin() + 1, plan.t3.end()) == full, "plan keeps P Q R S whole");
    const i64 b = block_elements(n, hw);
    auto best = [&](const std::vector<i64>& t3) {
        double v = 1e300;
        testsupport::for_box({3, 3, 3}, [&](const std::vector<i64>& l) {
            v = std::min(v, data_movement_cost(n, t3, Layout(l.begin(), l.end()), b));
        });
        return v;
    };
    int splits = 0;
    const double mine = data_movement_cost(n, plan.t3, plan.layout, b);
    for (i64 p : divisors(7))
        for (i64 q : divisors(7))
            for (i64 r : divisors(3))
                for (i64 s : divisors(3)) {
                    if (std::vector<i64>{p, q, r, s} == full) continue;
                    ++splits;
                    o.require(mine <= best({plan.t3[0], p, q, r, s}), "split " + std::to_string(p) + "x" +
                                                                       std::to_string(q) + "x" + std::to_string(r) +
                                                                       "x" + std::to_string(s));
                }
    o.note << "plan dmc " << mine << " vs " << splits << " splits";
}

struct Criterion {
    int id;
    const char* name;
    void (*run)(Outcome&);
    double limit;   // seconds, 0 = none
};

}  // namespace

int main() {
    const Criterion all[] = {
        {1, "conformability table", conformability_table, kLimitConformability},
        {2, "distinct-block formula", db_fidelity, kLimitDb},
        {3, "roofline constants", roofline_constants, 0},
        {4, "directive semantics", mdc_semantics, kLimitSemantics},
        {5, "transformation", transformation, 0},
        {6, "off-chip optimality", offchip_optimality, kLimitOffchip},
        {7, "superset dominance", dominance, kLimitDominance},
        {8, "search-space reduction", space_reduction, kLimitSpace},
        {9, "determinism", determinism, 0},
        {10, "depthwise tiles", depthwise, 0},
    };
    int failed = 0;
    for (const auto& c : all) {
        Outcome o;
        auto t0 = std::chrono::steady_clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.limit > 0) o.require(secs < c.limit, "time limit");
        failed += !o.pass;
        char t[32];
        std::snprintf(t, sizeof t, "%.2fs", secs);
        std::cout << "criterion " << c.id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << c.name << "  [" << t
                  << "]  " << o.note.str() << std::endl;
    }
    std::cout << (failed ? "FAILED " : "all passed ") << "(" << failed << " of 10 failing)" << std::endl;
    return failed ? 1 : 0;
}
