// SPDX-License-Identifier: Apache-2.0
//
// Accelerator description, energy table and search flags.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "mdcmap/loopnest.hpp"

namespace mdcmap {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Per-event costs in arbitrary but consistent units. Memory and NoC
// entries are per byte.
struct EnergyProfile {
    double mac = 1.0;
    double l1_read = 1.0;
    double l1_write = 1.0;
    double l2_read = 6.0;
    double l2_write = 6.0;
    double dram_read = 200.0;
    double dram_write = 200.0;
    double noc_per_byte_per_hop = 2.0;
    double hops = 1.0;   // constant hop factor

    void validate() const {
        for (double v : {mac, l1_read, l1_write, l2_read, l2_write, dram_read, dram_write,
                         noc_per_byte_per_hop, hops})
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("energy entries must be finite and >= 0");
    }
};

struct AcceleratorConfig {
    std::string name = "custom";
    i64 num_pes = 1;
    double clock_mhz = 200.0;
    double noc_bandwidth_gbps = 1.0;      // GB/s (1e9 bytes per second)
    i64 l1_bytes = 512;
    i64 l2_bytes = 110592;
    i64 dram_block_bytes = 64;
    bool multicast = true;
    int max_parallel_loops = 3;
    double utilization_bound = 0.1;       // p
    EnergyProfile energy;

    double clock_hz() const { return clock_mhz * 1e6; }
    double noc_bytes_per_sec() const { return noc_bandwidth_gbps * 1e9; }
    double noc_bytes_per_cycle() const { return noc_bytes_per_sec() / clock_hz(); }
    double gops() const { return static_cast<double>(num_pes) * 2.0 * clock_mhz / 1000.0; }

    void validate() const {
        if (num_pes < 1) throw ConfigError("num_pes must be >= 1");
        if (!(clock_mhz > 0)) throw ConfigError("clock_mhz must be > 0");
        if (!(noc_bandwidth_gbps > 0)) throw ConfigError("noc_bandwidth_gbps must be > 0");
        if (l1_bytes < 1 || l2_bytes < 1) throw ConfigError("buffer sizes must be >= 1");
        if (dram_block_bytes < 1) throw ConfigError("dram_block_bytes must be >= 1");
        if (max_parallel_loops < 1) throw ConfigError("max_parallel_loops must be >= 1");
        if (!(utilization_bound > 0 && utilization_bound <= 1))
            throw ConfigError("utilization bound must lie in (0, 1]");
        energy.validate();
    }
};

// Eyeriss-like edge platform.
inline AcceleratorConfig preset_p1() {
    AcceleratorConfig c;
    c.name = "p1";
    c.num_pes = 168;
    c.clock_mhz = 200;
    c.noc_bandwidth_gbps = 2.4;
    c.l1_bytes = 512;
    c.l2_bytes = 110592;
    c.dram_block_bytes = 64;
    return c;
}

inline AcceleratorConfig preset_p2() {
    AcceleratorConfig c = preset_p1();
    c.name = "p2";
    c.num_pes = 1024;
    c.noc_bandwidth_gbps = 25.6;
    return c;
}

inline AcceleratorConfig preset(const std::string& name) {
    if (name == "p1") return preset_p1();
    if (name == "p2") return preset_p2();
    throw ConfigError("unknown preset '" + name + "'");
}

enum class DbMode { Exact, Paper };

struct PruningFlags {
    bool factor_tiles = true;         // tiles divide their parent level
    bool utilization = true;          // enforce prod(t2) / num_pes >= p
    DbMode db_mode = DbMode::Exact;
    bool absent_loop_factor = true;   // multiply DB by tiles of loops a ref ignores

    static PruningFlags none() {
        PruningFlags f;
        f.factor_tiles = false;
        f.utilization = false;
        return f;
    }
};

}  // namespace mdcmap
