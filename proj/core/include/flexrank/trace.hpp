// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "flexrank/adapter.hpp"
#include "flexrank/allocator.hpp"
#include "flexrank/trainer.hpp"

namespace flexrank {

inline constexpr int kTraceFormatVersion = 1;

/// First record of a trace. Adapters are listed in declared depth order.
struct TraceHeader {
    int format_version = kTraceFormatVersion;
    std::string config_hash;
    std::uint64_t seed = 0;
    AllocatorMode mode = AllocatorMode::bidirectional;
    std::vector<AdapterInfo> adapters;
};

struct TraceSummary {
    std::int64_t steps_completed = 0;
    std::size_t allocation_steps = 0;
    double final_train_loss = 0.0;
    double final_eval_loss = 0.0;
    std::vector<std::size_t> final_ranks;
};

/// Line-delimited JSON: one header record, one record per allocation event,
/// then an optional divergence record and a summary record.
struct Trace {
    TraceHeader header;
    std::vector<AllocationEvent> events;
    std::optional<Divergence> divergence;
    std::optional<TraceSummary> summary;
    /// 1-based source line of each event; filled by read_trace.
    std::vector<std::size_t> event_lines;
};

Trace make_trace(const TrainResult& result, const std::string& config_hash, std::uint64_t seed, AllocatorMode mode);

void write_trace(std::ostream& out, const Trace& trace);
std::string trace_to_string(const Trace& trace);

/// Throws ReplayError naming the offending line for malformed input, and for
/// a trace that ends before its summary record.
Trace read_trace(std::istream& in);

} // namespace flexrank
