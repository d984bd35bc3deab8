// SPDX-License-Identifier: Apache-2.0
#include "mdcmap/cli.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "mdcmap/explorer.hpp"
#include "mdcmap/io.hpp"
#include "mdcmap/verify.hpp"

namespace mdcmap {
namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string accel = "p1";
    std::string workload;
    std::vector<std::string> ops;
    std::vector<std::string> goals;
    std::vector<std::string> styles;
    std::string format = "table";
    std::string mapping_file, mdc_file;
    std::string db_mode = "exact";
    bool no_factor = false, no_util = false, no_absent_factor = false, timing = false, compare = false;
    double util = 0;
    int max_parallel = 0;
    unsigned workers = 1;
    std::uint64_t seed = 1;
    int samples = 20;
};

struct Context {
    AcceleratorConfig hw;
    PruningFlags flags;
    OutputFormat fmt = OutputFormat::Table;
    std::vector<Operator> ops;
    std::vector<SearchGoal> goals;
};

Context load_context(const RunConfig& rc, bool need_workload) {
    Context c;
    c.hw = load_accelerator(rc.accel);
    if (rc.util != 0) c.hw.utilization_bound = rc.util;
    if (rc.max_parallel != 0) c.hw.max_parallel_loops = rc.max_parallel;
    c.hw.validate();
    c.flags.factor_tiles = !rc.no_factor;
    c.flags.utilization = !rc.no_util;
    c.flags.absent_loop_factor = !rc.no_absent_factor;
    if (rc.db_mode == "exact")
        c.flags.db_mode = DbMode::Exact;
    else if (rc.db_mode == "paper")
        c.flags.db_mode = DbMode::Paper;
    else
        throw UsageError("unknown --db-mode '" + rc.db_mode + "' (exact, paper)");
    c.fmt = parse_format(rc.format);
    for (const auto& g : rc.goals) c.goals.push_back(parse_goal(g));
    if (c.goals.empty()) c.goals.assign(kAllGoals.begin(), kAllGoals.end());
    if (rc.workload.empty()) {
        if (need_workload) throw UsageError("--workload is required");
        return c;
    }
    auto all = load_workload(rc.workload);
    if (rc.ops.empty()) {
        c.ops = std::move(all);
    } else {
        for (const auto& name : rc.ops) {
            auto it = std::find_if(all.begin(), all.end(), [&](const Operator& o) { return o.name == name; });
            if (it == all.end()) throw UsageError("no operator named '" + name + "' in " + rc.workload);
            c.ops.push_back(*it);
        }
    }
    if (c.ops.empty() && need_workload) throw UsageError("workload " + rc.workload + " has no operators");
    return c;
}

const Operator& single_op(const Context& c) {
    if (c.ops.size() != 1) throw UsageError("select one operator with --op");
    return c.ops.front();
}

void emit_json(std::ostream& out, const json& j) { out << j.dump(2) << "\n"; }

// ---------------------------------------------------------------------------

int cmd_check(const RunConfig& rc, std::ostream& out) {
    auto c = load_context(rc, true);
    json arr = json::array();
    std::ostringstream tab, csv;
    csv << "operator,verdict,R1,R2,R3,R4\n";
    for (const auto& op : c.ops) {
        auto rep = check_conformable(op.nest);
        arr.push_back({{"operator", op.name}, {"report", to_json(rep)}});
        tab << op.name << ": " << (rep.verdict ? "conformable" : "non-conformable") << "\n";
        const RuleResult* rules[] = {&rep.r1, &rep.r2, &rep.r3, &rep.r4};
        for (int i = 0; i < 4; ++i)
            tab << "  R" << i + 1 << " " << (rules[i]->pass ? "pass" : "FAIL")
                << (rules[i]->reason.empty() ? "" : "  " + rules[i]->reason) << "\n";
        csv << csv_escape(op.name) << "," << (rep.verdict ? "conformable" : "non-conformable");
        for (auto* r : rules) csv << "," << (r->pass ? "pass" : "fail");
        csv << "\n";
    }
    if (c.fmt == OutputFormat::Json)
        emit_json(out, {{"operators", arr}});
    else
        out << (c.fmt == OutputFormat::Csv ? csv.str() : tab.str());
    return kExitOk;
}

int cmd_transform(const RunConfig& rc, std::ostream& out) {
    auto c = load_context(rc, true);
    const auto& op = single_op(c);
    if (rc.mapping_file.empty()) throw UsageError("--mapping is required");
    auto m = mapping_from_json(read_json_file(rc.mapping_file), op.nest, rc.mapping_file);
    auto mdc = transform_to_mdc(m, op.nest);
    if (c.fmt == OutputFormat::Json)
        emit_json(out, {{"operator", op.name}, {"mdc", render_mdc(mdc)}});
    else
        out << render_mdc(mdc);
    return kExitOk;
}

int cmd_cost(const RunConfig& rc, std::ostream& out, std::ostream& err) {
    auto c = load_context(rc, true);
    const auto& op = single_op(c);
    if (rc.mapping_file.empty() == rc.mdc_file.empty()) throw UsageError("give exactly one of --mapping or --mdc");
    MdcMapping mdc;
    AnalysisOptions ao;
    ao.flags = c.flags;
    auto rep = check_conformable(op.nest);
    ao.report = &rep;
    json head{{"operator", op.name}};
    if (!rc.mapping_file.empty()) {
        auto m = mapping_from_json(read_json_file(rc.mapping_file), op.nest, rc.mapping_file);
        auto v = validate_mapping(m, op.nest, c.hw, c.flags);
        if (!v.empty()) {
            for (const auto& x : v) err << "invalid mapping: " << x.message << "\n";
            return kExitUsage;
        }
        mdc = transform_to_mdc(m, op.nest, rep);
        ao.t3 = m.t3;
        ao.layout = m.layout;
        head["mapping"] = to_json(m, op.nest);
    } else {
        mdc = parse_mdc(read_text_file(rc.mdc_file));
        auto problems = validate_mdc(mdc, op.nest, rep, c.hw.num_pes);
        if (!problems.empty()) {
            for (const auto& p : problems) err << "invalid program: " << p << "\n";
            return kExitUsage;
        }
    }
    auto r = analyze_mapping(mdc, op.nest, c.hw, c.hw.energy, ao);
    head["mdc"] = render_mdc(mdc);
    head["report"] = to_json(r);
    if (c.fmt == OutputFormat::Json) {
        emit_json(out, head);
    } else if (c.fmt == OutputFormat::Csv) {
        out << "operator,latency_cycles,runtime_seconds,energy,edp,pe_utilization,macs\n"
            << csv_escape(op.name) << "," << r.latency_cycles << "," << num_str(r.runtime_seconds) << ","
            << num_str(r.energy) << "," << num_str(r.edp) << "," << num_str(r.pe_utilization) << "," << r.macs
            << "\n";
    } else {
        out << render_mdc(mdc) << "latency_cycles  " << r.latency_cycles << "\nruntime_seconds " << r.runtime_seconds
            << "\nenergy          " << r.energy << "\nedp             " << r.edp << "\npe_utilization  "
            << r.pe_utilization << "\n";
    }
    return kExitOk;
}

void require_conformable(const Operator& op) {
    auto rep = check_conformable(op.nest);
    if (!rep.verdict) throw InfeasibleError("operator '" + op.name + "' is not conformable");
}

int cmd_optimize(const RunConfig& rc, std::ostream& out) {
    auto c = load_context(rc, true);
    json arr = json::array();
    std::vector<ResultRow> rows;
    for (const auto& op : c.ops) {
        require_conformable(op);
        auto s = decoupled_optimize(op.nest, c.hw, c.goals, c.flags, rc.workers);
        arr.push_back({{"operator", op.name}, {"kind", op.kind}, {"result", to_json(s, op.nest, rc.timing)}});
        for (auto g : c.goals) rows.push_back(make_row(op.name, s, g, op.nest));
    }
    if (c.fmt == OutputFormat::Json)
        emit_json(out, {{"accelerator", c.hw.name}, {"operators", arr}});
    else
        out << (c.fmt == OutputFormat::Csv ? rows_csv(rows) : rows_table(rows));
    return kExitOk;
}

int cmd_baseline(const RunConfig& rc, std::ostream& out) {
    auto c = load_context(rc, true);
    std::vector<BaselineStyle> styles;
    for (const auto& s : rc.styles) styles.push_back(parse_style(s));
    if (styles.empty()) styles.assign(kAllStyles.begin(), kAllStyles.end());
    json arr = json::array();
    std::vector<ResultRow> rows;
    for (const auto& op : c.ops) {
        require_conformable(op);
        ExploreOptions o;
        o.flags = c.flags;
        o.goals = c.goals;
        o.workers = rc.workers;
        o.styles = styles;
        o.decoupled = rc.compare;
        auto res = explore(op.nest, c.hw, o);
        json st = json::array();
        if (rc.compare) {
            st.push_back({{"style", "decoupled"}, {"applicable", true},
                          {"result", to_json(res.decoupled, op.nest, rc.timing)}});
            for (auto g : c.goals) rows.push_back(make_row(op.name, res.decoupled, g, op.nest));
        }
        for (const auto& b : res.baselines) {
            json e{{"style", to_string(b.style)}, {"applicable", b.applicable}};
            if (b.applicable) {
                e["result"] = to_json(b.result, op.nest, rc.timing);
                for (auto g : c.goals) rows.push_back(make_row(op.name, b.result, g, op.nest));
            } else {
                e["reason"] = b.reason;
                for (auto g : c.goals) {
                    ResultRow r{op.name, to_string(b.style), to_string(g)};
                    r.reason = b.reason;
                    rows.push_back(r);
                }
            }
            st.push_back(e);
        }
        arr.push_back({{"operator", op.name}, {"kind", op.kind}, {"styles", st}});
    }
    if (c.fmt == OutputFormat::Json)
        emit_json(out, {{"accelerator", c.hw.name}, {"operators", arr}});
    else
        out << (c.fmt == OutputFormat::Csv ? rows_csv(rows) : rows_table(rows));
    return kExitOk;
}

int cmd_roofline(const RunConfig& rc, std::ostream& out) {
    auto c = load_context(rc, false);
    const double gops = c.hw.gops();
    if (c.ops.empty()) {
        if (c.fmt == OutputFormat::Json)
            emit_json(out, {{"accelerator", c.hw.name}, {"peak_gops", gops}});
        else if (c.fmt == OutputFormat::Csv)
            out << "accelerator,peak_gops\n" << csv_escape(c.hw.name) << "," << num_str(gops) << "\n";
        else
            out << c.hw.name << " peak " << num_str(gops) << " GOPS\n";
        return kExitOk;
    }
    json arr = json::array();
    std::ostringstream tab, csv;
    csv << "operator,peak_gops,compute_seconds,bandwidth_seconds,peak_seconds,bound"
        << (rc.compare ? ",searched_seconds,fraction_of_peak" : "") << "\n";
    tab << c.hw.name << " peak " << num_str(gops) << " GOPS\n";
    for (const auto& op : c.ops) {
        auto r = roofline_peak(op.nest, c.hw);
        json e{{"operator", op.name},           {"peak_gops", r.gops},
               {"compute_seconds", r.compute_seconds}, {"bandwidth_seconds", r.bandwidth_seconds},
               {"peak_seconds", r.peak_seconds}, {"bound", r.bound}};
        csv << csv_escape(op.name) << "," << num_str(r.gops) << "," << num_str(r.compute_seconds) << ","
            << num_str(r.bandwidth_seconds) << "," << num_str(r.peak_seconds) << "," << r.bound;
        tab << "  " << op.name << ": " << num_str(r.peak_seconds) << " s (" << r.bound << " bound)";
        if (rc.compare) {
            require_conformable(op);
            auto s = decoupled_optimize(op.nest, c.hw, {SearchGoal::Runtime}, c.flags, rc.workers);
            const auto& b = s.get(SearchGoal::Runtime);
            if (b.found) {
                double frac = r.peak_seconds / b.report.runtime_seconds;
                e["searched_seconds"] = b.report.runtime_seconds;
                e["fraction_of_peak"] = frac;
                csv << "," << num_str(b.report.runtime_seconds) << "," << num_str(frac);
                tab << ", searched " << num_str(b.report.runtime_seconds) << " s, " << std::fixed
                    << std::setprecision(3) << frac << std::defaultfloat << " of peak";
            } else {
                e["searched_seconds"] = nullptr;
                csv << ",,";
                tab << ", no valid mapping";
            }
        }
        csv << "\n";
        tab << "\n";
        arr.push_back(e);
    }
    if (c.fmt == OutputFormat::Json)
        emit_json(out, {{"accelerator", c.hw.name}, {"peak_gops", gops}, {"operators", arr}});
    else
        out << (c.fmt == OutputFormat::Csv ? csv.str() : tab.str());
    return kExitOk;
}

int cmd_verify(const RunConfig& rc, std::ostream& out) {
    auto c = load_context(rc, true);
    const auto& op = single_op(c);
    std::vector<MdcMapping> progs;
    if (!rc.mapping_file.empty()) {
        auto m = mapping_from_json(read_json_file(rc.mapping_file), op.nest, rc.mapping_file);
        progs.push_back(transform_to_mdc(m, op.nest));
    } else if (!rc.mdc_file.empty()) {
        progs.push_back(parse_mdc(read_text_file(rc.mdc_file)));
    } else {
        std::mt19937_64 rng(rc.seed);
        for (int i = 0; i < rc.samples; ++i)
            if (auto m = random_mapping(op.nest, c.hw, c.flags, rng)) progs.push_back(transform_to_mdc(*m, op.nest));
        if (progs.empty()) throw InfeasibleError("no valid mapping sampled for '" + op.name + "'");
    }
    int bad = 0;
    json arr = json::array();
    std::ostringstream tab;
    for (std::size_t i = 0; i < progs.size(); ++i) {
        auto d = compare_with_oracle(progs[i], op.nest, c.hw);
        if (!d.ok()) ++bad;
        arr.push_back({{"mdc", render_mdc(progs[i])}, {"match", d.ok()}, {"mismatches", d.mismatches}});
        tab << "sample " << i << ": " << (d.ok() ? "match" : "MISMATCH") << "\n";
        for (const auto& m : d.mismatches) tab << "  " << m << "\n";
    }
    if (c.fmt == OutputFormat::Json)
        emit_json(out, {{"operator", op.name}, {"checked", progs.size()}, {"mismatched", bad}, {"samples", arr}});
    else if (c.fmt == OutputFormat::Csv)
        out << "operator,checked,mismatched\n" << csv_escape(op.name) << "," << progs.size() << "," << bad << "\n";
    else
        out << tab.str() << progs.size() - static_cast<std::size_t>(bad) << "/" << progs.size() << " agree\n";
    return bad ? kExitFailure : kExitOk;
}

int cmd_space(const RunConfig& rc, std::ostream& out) {
    auto c = load_context(rc, true);
    json arr = json::array();
    std::ostringstream tab, csv;
    csv << "operator,original,offchip,onchip\n";
    for (const auto& op : c.ops) {
        require_conformable(op);
        const json s = to_json(space_size(op.nest, c.hw, c.flags));
        arr.push_back({{"operator", op.name}, {"space", s}});
        csv << csv_escape(op.name);
        tab << op.name << "\n";
        for (const auto& [k, v] : s.items()) {
            csv << "," << v.get<std::string>();
            tab << "  " << std::left << std::setw(10) << k << v.get<std::string>() << "\n";
        }
        csv << "\n";
    }
    if (c.fmt == OutputFormat::Json)
        emit_json(out, {{"operators", arr}});
    else
        out << (c.fmt == OutputFormat::Csv ? csv.str() : tab.str());
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Loop-nest mapping explorer for spatial accelerators", "mdcmap"};
    app.require_subcommand(1);
    RunConfig rc;

    auto common = [&](CLI::App* s, bool search) {
        s->add_option("--accel", rc.accel, "preset name (p1, p2) or accelerator JSON file");
        s->add_option("--workload,-w", rc.workload, "workload JSON file");
        s->add_option("--op", rc.ops, "operator name(s) to select");
        s->add_option("--format,-f", rc.format, "table, csv or json");
        s->add_flag("--no-factor-tiles", rc.no_factor, "allow tiles that do not divide their parent");
        s->add_flag("--no-utilization", rc.no_util, "drop the PE utilization bound");
        s->add_option("--utilization", rc.util, "utilization bound p in (0,1]");
        s->add_option("--max-parallel", rc.max_parallel, "maximum number of parallel loops");
        s->add_option("--db-mode", rc.db_mode, "distinct-block count: exact or paper");
        s->add_flag("--no-absent-loop-factor", rc.no_absent_factor,
                    "do not multiply block counts by tiles of loops a reference ignores");
        if (search) {
            s->add_option("--goal,-g", rc.goals, "runtime, energy, edp (default all)");
            s->add_option("--workers,-j", rc.workers, "worker threads")->check(CLI::PositiveNumber);
            s->add_flag("--timing", rc.timing, "include search time in JSON output");
        }
    };

    auto* check = app.add_subcommand("check", "conformability report");
    common(check, false);
    auto* transform = app.add_subcommand("transform", "print the MDC program of a mapping");
    common(transform, false);
    transform->add_option("--mapping,-m", rc.mapping_file, "mapping JSON file")->required();
    auto* cost = app.add_subcommand("cost", "cost one mapping");
    common(cost, false);
    cost->add_option("--mapping,-m", rc.mapping_file, "mapping JSON file");
    cost->add_option("--mdc", rc.mdc_file, "MDC program text file");
    auto* optimize = app.add_subcommand("optimize", "decoupled search");
    common(optimize, true);
    auto* baseline = app.add_subcommand("baseline", "dataflow-constrained searches");
    common(baseline, true);
    baseline->add_option("--style,-s", rc.styles, "row_stationary, weight_stationary, output_stationary, "
                                                  "interstellar_like, dmaze_like (default all)");
    baseline->add_flag("--with-decoupled", rc.compare, "also report the decoupled search");
    auto* roofline = app.add_subcommand("roofline", "peak throughput bounds");
    common(roofline, true);
    roofline->add_flag("--compare", rc.compare, "compare against the searched runtime");
    auto* verify = app.add_subcommand("verify", "check the cost model against the reference simulator");
    common(verify, false);
    verify->add_option("--mapping,-m", rc.mapping_file, "mapping JSON file");
    verify->add_option("--mdc", rc.mdc_file, "MDC program text file");
    verify->add_option("--seed", rc.seed, "seed for sampled mappings");
    verify->add_option("--samples", rc.samples, "number of sampled mappings")->check(CLI::PositiveNumber);
    auto* space = app.add_subcommand("space-size", "mapping space statistics");
    common(space, false);

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*check) return cmd_check(rc, out);
        if (*transform) return cmd_transform(rc, out);
        if (*cost) return cmd_cost(rc, out, err);
        if (*optimize) return cmd_optimize(rc, out);
        if (*baseline) return cmd_baseline(rc, out);
        if (*roofline) return cmd_roofline(rc, out);
        if (*verify) return cmd_verify(rc, out);
        if (*space) return cmd_space(rc, out);
    } catch (const InfeasibleError& e) {
        err << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const UsageError& e) {
        err << "usage: " << e.what() << "\n";
        return kExitUsage;
    } catch (const InputError& e) {
        err << "input: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config: " << e.what() << "\n";
        return kExitUsage;
    } catch (const WorkloadError& e) {
        err << "workload: " << e.what() << "\n";
        return kExitUsage;
    } catch (const MdcParseError& e) {
        err << "mdc: " << e.what() << "\n";
        return kExitUsage;
    } catch (const TransformError& e) {
        err << "transform: " << e.what() << "\n";
        return kExitUsage;
    } catch (const StyleError& e) {
        err << "style: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ScaleError& e) {
        err << "verify: " << e.what() << "\n";
        return kExitUsage;
    } catch (const json::exception& e) {
        err << "json: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace mdcmap
