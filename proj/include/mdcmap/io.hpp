// SPDX-License-Identifier: Apache-2.0
//
// JSON accelerator, workload and mapping files; report emission as JSON,
// CSV or an aligned table.
#pragma once

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdcmap/conformability.hpp"
#include "mdcmap/explorer.hpp"
#include "mdcmap/hardware.hpp"
#include "mdcmap/mapping.hpp"
#include "mdcmap/mdc.hpp"
#include "mdcmap/onchip_cost.hpp"
#include "mdcmap/workloads.hpp"

namespace mdcmap {

using json = nlohmann::ordered_json;

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace detail {

template <class T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw InputError(where + ": missing '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError(where + ": bad value for '" + key + "'");
    }
}

template <class T>
T field_or(const json& j, const char* key, T dflt, const std::string& where) {
    return j.contains(key) ? field<T>(j, key, where) : dflt;
}

inline void only_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw InputError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (auto k : keys) ok = ok || it.key() == k;
        if (!ok) throw InputError(where + ": unknown key '" + it.key() + "'");
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// accelerator files

inline AcceleratorConfig accelerator_from_json(const json& j, const std::string& where = "accelerator") {
    using detail::field;
    using detail::field_or;
    detail::only_keys(j,
                      {"name", "num_pes", "clock_mhz", "noc_bandwidth_gbps", "l1_bytes", "l2_bytes",
                       "dram_block_bytes", "multicast", "max_parallel_loops", "utilization_bound", "energy_profile"},
                      where);
    AcceleratorConfig c;
    c.name = field_or<std::string>(j, "name", "custom", where);
    c.num_pes = field<i64>(j, "num_pes", where);
    c.clock_mhz = field<double>(j, "clock_mhz", where);
    c.noc_bandwidth_gbps = field<double>(j, "noc_bandwidth_gbps", where);
    c.l1_bytes = field<i64>(j, "l1_bytes", where);
    c.l2_bytes = field<i64>(j, "l2_bytes", where);
    c.dram_block_bytes = field<i64>(j, "dram_block_bytes", where);
    c.multicast = field_or<bool>(j, "multicast", true, where);
    c.max_parallel_loops = field_or<int>(j, "max_parallel_loops", 3, where);
    c.utilization_bound = field_or<double>(j, "utilization_bound", 0.1, where);
    if (j.contains("energy_profile")) {
        const auto& e = j.at("energy_profile");
        const std::string w = where + ".energy_profile";
        detail::only_keys(e,
                          {"mac", "l1_read", "l1_write", "l2_read", "l2_write", "dram_read", "dram_write",
                           "noc_per_byte_per_hop", "hops"},
                          w);
        auto& p = c.energy;
        p.mac = field_or<double>(e, "mac", p.mac, w);
        p.l1_read = field_or<double>(e, "l1_read", p.l1_read, w);
        p.l1_write = field_or<double>(e, "l1_write", p.l1_write, w);
        p.l2_read = field_or<double>(e, "l2_read", p.l2_read, w);
        p.l2_write = field_or<double>(e, "l2_write", p.l2_write, w);
        p.dram_read = field_or<double>(e, "dram_read", p.dram_read, w);
        p.dram_write = field_or<double>(e, "dram_write", p.dram_write, w);
        p.noc_per_byte_per_hop = field_or<double>(e, "noc_per_byte_per_hop", p.noc_per_byte_per_hop, w);
        p.hops = field_or<double>(e, "hops", p.hops, w);
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw InputError(where + ": " + e.what());
    }
    return c;
}

inline json to_json(const AcceleratorConfig& c) {
    const auto& e = c.energy;
    return json{{"name", c.name},
                {"num_pes", c.num_pes},
                {"clock_mhz", c.clock_mhz},
                {"noc_bandwidth_gbps", c.noc_bandwidth_gbps},
                {"l1_bytes", c.l1_bytes},
                {"l2_bytes", c.l2_bytes},
                {"dram_block_bytes", c.dram_block_bytes},
                {"multicast", c.multicast},
                {"max_parallel_loops", c.max_parallel_loops},
                {"utilization_bound", c.utilization_bound},
                {"energy_profile",
                 {{"mac", e.mac},
                  {"l1_read", e.l1_read},
                  {"l1_write", e.l1_write},
                  {"l2_read", e.l2_read},
                  {"l2_write", e.l2_write},
                  {"dram_read", e.dram_read},
                  {"dram_write", e.dram_write},
                  {"noc_per_byte_per_hop", e.noc_per_byte_per_hop},
                  {"hops", e.hops}}}};
}

// A preset name ("p1", "p2") or a JSON file.
inline AcceleratorConfig load_accelerator(const std::string& spec) {
    if (spec == "p1" || spec == "p2") return preset(spec);
    return accelerator_from_json(read_json_file(spec), spec);
}

// ---------------------------------------------------------------------------
// workload files

struct Operator {
    std::string name;
    std::string kind;
    LoopNest nest;
    json params;
};

inline LoopNest nest_from_json(const json& j, const std::string& where) {
    using detail::field;
    using detail::field_or;
    const auto kind = field<std::string>(j, "kind", where);
    auto num = [&](const char* k) { return field<i64>(j, k, where); };
    auto num_or = [&](const char* k, i64 d) { return field_or<i64>(j, k, d, where); };
    try {
        if (kind == "conv2d") {
            detail::only_keys(j, {"name", "kind", "N", "K", "C", "P", "Q", "R", "S", "stride", "dilation", "variant"},
                              where);
            Conv2dParams p;
            p.N = num_or("N", 1);
            p.C = num("C");
            p.K = num_or("K", p.C);
            p.P = num("P");
            p.Q = num_or("Q", p.P);
            p.R = num_or("R", 1);
            p.S = num_or("S", p.R);
            p.stride = num_or("stride", 1);
            p.dilation = num_or("dilation", 1);
            p.variant = parse_conv_variant(field_or<std::string>(j, "variant", "regular", where));
            return make_conv2d(p);
        }
        if (kind == "gemm") {
            detail::only_keys(j, {"name", "kind", "M", "N", "K"}, where);
            GemmParams p;
            p.M = num("M");
            p.N = num("N");
            p.K = num("K");
            return make_gemm(p);
        }
        if (kind == "mlp") {
            detail::only_keys(j, {"name", "kind", "in_channels", "out_channels", "batch"}, where);
            return make_mlp(num("in_channels"), num("out_channels"), num_or("batch", 1));
        }
        if (kind == "lstm") {
            detail::only_keys(j, {"name", "kind", "embedding", "batch"}, where);
            return make_lstm_cell(num("embedding"), num("batch"));
        }
        if (kind == "lstm_multicell") {
            detail::only_keys(j, {"name", "kind", "steps", "hidden"}, where);
            return make_lstm_multicell(num("steps"), num("hidden"));
        }
        if (kind == "conv1d") {
            detail::only_keys(j, {"name", "kind", "out", "filter"}, where);
            return make_conv1d(num("out"), num("filter"));
        }
        if (kind == "fused_conv1d") {
            detail::only_keys(j, {"name", "kind", "out", "filter"}, where);
            return make_fused_conv1d(num("out"), num("filter"));
        }
        if (kind == "stencil3") {
            detail::only_keys(j, {"name", "kind", "out"}, where);
            return make_stencil3(num("out"));
        }
        if (kind == "pool2d") {
            detail::only_keys(j, {"name", "kind", "C", "P", "Q", "R", "S", "op"}, where);
            const auto op = field_or<std::string>(j, "op", "max", where);
            if (op != "max" && op != "avg") throw InputError(where + ": op must be max or avg");
            const i64 P = num("P"), R = num("R");
            return make_pool2d(num("C"), P, num_or("Q", P), R, num_or("S", R), op == "max");
        }
        if (kind == "elementwise") {
            detail::only_keys(j, {"name", "kind", "C", "P", "Q", "residual"}, where);
            const i64 P = num("P");
            return make_elementwise(num("C"), P, num_or("Q", P), field_or<bool>(j, "residual", false, where));
        }
        if (kind == "triangular_gemm") {
            detail::only_keys(j, {"name", "kind", "M", "N"}, where);
            return make_triangular_gemm(num("M"), num("N"));
        }
        if (kind == "coupled_miv") {
            detail::only_keys(j, {"name", "kind", "a", "b"}, where);
            return make_coupled_miv(num("a"), num("b"));
        }
    } catch (const InputError&) {
        throw;
    } catch (const std::exception& e) {
        throw InputError(where + ": " + e.what());
    }
    throw InputError(where + ": unknown kind '" + kind + "'");
}

inline std::vector<Operator> workload_from_json(const json& j, const std::string& where = "workload") {
    std::vector<Operator> out;
    auto one = [&](const json& op, const std::string& w) {
        Operator o;
        o.kind = detail::field<std::string>(op, "kind", w);
        o.nest = nest_from_json(op, w);
        o.name = detail::field_or<std::string>(op, "name", o.nest.name, w);
        o.params = op;
        out.push_back(std::move(o));
    };
    if (j.is_object() && j.contains("operators")) {
        const auto& ops = j.at("operators");
        if (!ops.is_array()) throw InputError(where + ": 'operators' must be a list");
        for (std::size_t i = 0; i < ops.size(); ++i) one(ops[i], where + ".operators[" + std::to_string(i) + "]");
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) one(j[i], where + "[" + std::to_string(i) + "]");
    } else {
        one(j, where);
    }
    if (out.empty()) throw InputError(where + ": no operators");
    return out;
}

inline std::vector<Operator> load_workload(const std::string& path) {
    return workload_from_json(read_json_file(path), path);
}

// ---------------------------------------------------------------------------
// mapping files

inline json to_json(const Mapping& m, const LoopNest& nest) {
    json it = json::array();
    for (const auto& l : nest.iterators) it.push_back(l.name);
    return json{{"iterators", it}, {"t1", m.t1},         {"t2", m.t2},         {"t3", m.t3},
                {"order2", m.order2}, {"order3", m.order3}, {"layout", m.layout}};
}

inline Mapping mapping_from_json(const json& j, const LoopNest& nest, const std::string& where = "mapping") {
    using detail::field;
    detail::only_keys(j, {"iterators", "t1", "t2", "t3", "order2", "order3", "layout"}, where);
    if (j.contains("iterators")) {
        auto its = field<std::vector<std::string>>(j, "iterators", where);
        std::vector<std::string> want;
        for (const auto& l : nest.iterators) want.push_back(l.name);
        if (its != want) throw InputError(where + ": iterators do not match the workload's loop nest");
    }
    Mapping m;
    m.t1 = field<std::vector<i64>>(j, "t1", where);
    m.t2 = field<std::vector<i64>>(j, "t2", where);
    m.t3 = field<std::vector<i64>>(j, "t3", where);
    m.order2 = field<std::vector<std::string>>(j, "order2", where);
    m.order3 = field<std::vector<std::string>>(j, "order3", where);
    m.layout = j.contains("layout") ? field<Layout>(j, "layout", where) : row_major_layout(nest);
    auto bad = validate_structure(m, nest);
    if (!bad.empty()) throw InputError(where + ": " + bad.front().message);
    return m;
}

// ---------------------------------------------------------------------------
// reports

inline json to_json(const CostReport& r) {
    json t = json::array();
    for (const auto& c : r.tensors)
        t.push_back({{"tensor", c.tensor},
                     {"fills", c.fills},
                     {"l2_reads", c.l2_reads},
                     {"forwarded", c.forwarded},
                     {"writebacks", c.writebacks},
                     {"dram_read_bytes", c.dram_read_bytes},
                     {"dram_write_bytes", c.dram_write_bytes}});
    const auto& a = r.access;
    return json{{"latency_cycles", r.latency_cycles},
                {"runtime_seconds", r.runtime_seconds},
                {"energy", r.energy},
                {"edp", r.edp},
                {"pe_utilization", r.pe_utilization},
                {"steps", r.steps},
                {"active_pe_steps", r.active_pe_steps},
                {"macs", r.macs},
                {"access_bytes",
                 {{"l1_read", a.l1_read},
                  {"l1_write", a.l1_write},
                  {"l2_read", a.l2_read},
                  {"l2_write", a.l2_write},
                  {"noc", a.noc},
                  {"dram_read", a.dram_read},
                  {"dram_write", a.dram_write}}},
                {"tensors", t},
                {"l1_required_bytes", r.l1_required_bytes},
                {"l2_required_bytes", r.l2_required_bytes}};
}

inline json to_json(const SpaceStats& s) {
    return json{{"original", to_string(s.original_count)},
                {"offchip", to_string(s.offchip_count)},
                {"onchip", to_string(s.onchip_count)}};
}

inline json to_json(const ConformabilityReport& r) {
    auto rule = [](const RuleResult& x) { return json{{"pass", x.pass}, {"reason", x.reason}}; };
    json dims = json::array();
    for (const auto& d : r.independent_dims) dims.push_back({{"dim", d.dim_var}, {"iterators", d.iterators}});
    return json{{"conformable", r.verdict},
                {"R1", rule(r.r1)},
                {"R2", rule(r.r2)},
                {"R3", rule(r.r3)},
                {"R4", rule(r.r4)},
                {"independent_dims", dims}};
}

// Deterministic unless `timing` is set.
inline json to_json(const SearchResult& s, const LoopNest& nest, bool timing = false) {
    json goals = json::object();
    for (auto g : s.goals) {
        const auto& b = s.get(g);
        if (!b.found) {
            goals[to_string(g)] = nullptr;
            continue;
        }
        goals[to_string(g)] = {{"mapping", to_json(b.mapping, nest)}, {"mdc", render_mdc(b.mdc)},
                               {"report", to_json(b.report)}};
    }
    json j{{"search", s.label},
           {"offchip",
            {{"t3", s.plan.t3}, {"order3", s.plan.order3}, {"layout", s.plan.layout}, {"dmc", s.plan.dmc}}},
           {"space", to_json(s.space)},
           {"goals", goals}};
    if (timing) j["timing"] = {{"search_seconds", s.search_seconds}, {"evaluated", s.evaluated}};
    return j;
}

enum class OutputFormat { Table, Csv, Json };

inline OutputFormat parse_format(const std::string& s) {
    if (s == "table") return OutputFormat::Table;
    if (s == "csv") return OutputFormat::Csv;
    if (s == "json") return OutputFormat::Json;
    throw InputError("unknown format '" + s + "' (table, csv, json)");
}

// One row per (operator, search, goal).
struct ResultRow {
    std::string op, search, goal;
    bool found = false;
    std::string reason;
    CostReport report;
    std::string order2, t2;
};

inline ResultRow make_row(const std::string& op, const SearchResult& s, SearchGoal g, const LoopNest& nest) {
    ResultRow r{op, s.label, to_string(g)};
    const auto& b = s.get(g);
    r.found = b.found;
    if (!b.found) {
        r.reason = "no valid mapping";
        return r;
    }
    r.report = b.report;
    for (std::size_t i = 0; i < b.mapping.order2.size(); ++i) r.order2 += (i ? " " : "") + b.mapping.order2[i];
    for (std::size_t i = 0; i < nest.iterators.size(); ++i)
        if (b.mapping.t2[i] > 1)
            r.t2 += (r.t2.empty() ? "" : " ") + nest.iterators[i].name + "=" + std::to_string(b.mapping.t2[i]);
    if (r.t2.empty()) r.t2 = "-";
    return r;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string o = "\"";
    for (char c : s) {
        if (c == '"') o += '"';
        o += c;
    }
    return o + "\"";
}

inline std::string num_str(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

inline std::string rows_csv(const std::vector<ResultRow>& rows) {
    std::string out = "operator,search,goal,found,latency_cycles,runtime_seconds,energy,edp,pe_utilization,parallel,order2\n";
    for (const auto& r : rows) {
        out += csv_escape(r.op) + "," + r.search + "," + r.goal + "," + (r.found ? "1" : "0") + ",";
        if (r.found)
            out += std::to_string(r.report.latency_cycles) + "," + num_str(r.report.runtime_seconds) + "," +
                   num_str(r.report.energy) + "," + num_str(r.report.edp) + "," + num_str(r.report.pe_utilization) +
                   "," + csv_escape(r.t2) + "," + csv_escape(r.order2);
        else
            out += ",,,,,,";
        out += "\n";
    }
    return out;
}

inline std::string rows_table(const std::vector<ResultRow>& rows) {
    std::vector<std::vector<std::string>> cells{
        {"operator", "search", "goal", "latency", "energy", "util", "parallel", "order2"}};
    for (const auto& r : rows) {
        if (!r.found) {
            cells.push_back({r.op, r.search, r.goal, "-", "-", "-", "-", r.reason});
            continue;
        }
        std::ostringstream e, u;
        e << std::setprecision(6) << r.report.energy;
        u << std::fixed << std::setprecision(3) << r.report.pe_utilization;
        cells.push_back({r.op, r.search, r.goal, std::to_string(r.report.latency_cycles), e.str(), u.str(), r.t2,
                         r.order2});
    }
    std::vector<std::size_t> w(cells[0].size(), 0);
    for (const auto& row : cells)
        for (std::size_t i = 0; i < row.size(); ++i) w[i] = std::max(w[i], row[i].size());
    std::string out;
    for (const auto& row : cells) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            out += row[i];
            if (i + 1 < row.size()) out += std::string(w[i] - row[i].size() + 2, ' ');
        }
        out += "\n";
    }
    return out;
}

}  // namespace mdcmap
