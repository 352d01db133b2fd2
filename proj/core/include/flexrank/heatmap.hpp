// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "flexrank/trace.hpp"

namespace flexrank {

/// Rank of every adapter over time, reconstructed from a trace.
///
/// Rows follow the header's adapter order. The first column ("init") holds
/// r_init; every later column is an allocation step with at least one event
/// and holds the ranks after that step.
struct HeatmapTable {
    std::vector<std::string> adapter_ids;
    std::vector<std::string> column_labels;
    std::vector<std::vector<std::size_t>> cells;  ///< [adapter][column]
};

/// Replays the events; throws ReplayError naming the trace line of any
/// event that does not match the replayed state.
HeatmapTable build_heatmap(const Trace& trace);

/// Header row "adapter,<labels...>", then one row per adapter.
void write_heatmap_csv(std::ostream& out, const HeatmapTable& table);
std::string heatmap_to_csv(const HeatmapTable& table);

struct VerifyReport {
    std::vector<std::string> problems;
    std::vector<std::size_t> final_ranks;

    bool ok() const { return problems.empty(); }
};

/// Re-checks every trace invariant: ranks stay in [1, r_max], each event
/// moves one rank and matches the replayed state, steps never decrease,
/// each step holds at most one event per adapter, the mode's rank-sum rule
/// holds per step, and the summary's final ranks match the replay.
VerifyReport verify_trace(const Trace& trace);

} // namespace flexrank
