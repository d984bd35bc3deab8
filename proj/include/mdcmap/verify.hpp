// SPDX-License-Identifier: Apache-2.0
// Side-by-side check of the analytical on-chip model against the reference simulator.
#pragma once

#include <string>
#include <vector>

#include "mdcmap/onchip_cost.hpp"
#include "mdcmap/oracle.hpp"

namespace mdcmap {

struct OracleDiff {
    std::vector<std::string> mismatches;   // empty when both agree
    CostReport model;
    SimTrace trace;
    bool ok() const { return mismatches.empty(); }
};

inline OracleDiff compare_with_oracle(const MdcMapping& mdc, const LoopNest& nest, const AcceleratorConfig& hw) {
    OracleDiff d;
    d.trace = simulate_mdc_reference(mdc, nest, hw);
    d.model = analyze_mapping(mdc, nest, hw);
    auto cmp = [&](const std::string& what, i64 model, i64 sim) {
        if (model != sim)
            d.mismatches.push_back(what + ": model " + std::to_string(model) + ", simulator " + std::to_string(sim));
    };
    const auto& s = d.trace;
    cmp("steps", d.model.steps, static_cast<i64>(s.steps.size()));
    cmp("active_pe_steps", d.model.active_pe_steps, s.active_pe_steps());
    cmp("latency_cycles", d.model.latency_cycles, s.latency_cycles);
    cmp("macs", d.model.macs, s.macs);
    for (std::size_t t = 0; t < s.tensors.size(); ++t) {
        const auto& c = d.model.tensors.at(t);
        cmp(c.tensor + ".fills", c.fills, s.total(&SimStep::fills, t));
        cmp(c.tensor + ".l2_reads", c.l2_reads, s.total(&SimStep::l2_reads, t));
        cmp(c.tensor + ".forwarded", c.forwarded, s.total(&SimStep::forwarded, t));
        cmp(c.tensor + ".writebacks", c.writebacks, s.total_writebacks(t));
    }
    return d;
}

}  // namespace mdcmap
