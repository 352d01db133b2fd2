// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "flexrank/allocator.hpp"
#include "flexrank/trainer.hpp"

namespace flexrank {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,      ///< I/O, parse, or invariant failure
    kExitConfigError = 2,  ///< config or parameter validation failed
    kExitDiverged = 3,     ///< training stopped on a non-finite or exploding loss
};

/// Environment variable that overrides the configured output directory.
inline constexpr const char* kOutputDirEnv = "FLEXRANK_OUTPUT_DIR";

struct TrainOptions {
    std::vector<std::string> overrides;  ///< "path=value"
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    /// Consult kOutputDirEnv when output_dir is unset.
    bool use_environment = true;
};

/// Runs one experiment and writes the trace, metrics CSV, checkpoint and
/// effective config into the output directory (each via temp file + rename).
int cmd_train(const std::string& config_path, const TrainOptions& options, std::ostream& out, std::ostream& err);

/// Prints every spectrum metric for a single-row CSV of singular values.
int cmd_importance(const std::string& spectrum_path, double epsilon, std::ostream& out, std::ostream& err);

/// Prints t,budget,allocation_step for every allocation step plus the window boundaries.
int cmd_schedule(const BudgetSchedule& schedule, std::ostream& out, std::ostream& err);

/// Writes the rank heatmap CSV to `output_path`, or to `out` when empty.
int cmd_export_heatmap(const std::string& trace_path, const std::string& output_path, std::ostream& out,
                       std::ostream& err);

/// Re-checks trace invariants; with a checkpoint, also compares final ranks.
int cmd_replay_verify(const std::string& trace_path, const std::string& checkpoint_path, std::ostream& out,
                      std::ostream& err);

/// Rows printed by cmd_schedule.
std::vector<std::int64_t> schedule_rows(const BudgetSchedule& schedule);

/// Metrics CSV: step,loss,total_rank,param_count,rank_<id>...
std::string metrics_csv(const std::vector<std::string>& adapter_ids, const std::vector<MetricsRow>& rows);

} // namespace flexrank
