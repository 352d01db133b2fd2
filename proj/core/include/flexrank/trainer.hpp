// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flexrank/adapter.hpp"
#include "flexrank/allocator.hpp"
#include "flexrank/importance.hpp"
#include "flexrank/model.hpp"
#include "flexrank/optimizer.hpp"
#include "flexrank/task.hpp"

namespace flexrank {

/// Everything needed to reproduce one training run.
struct TrainConfig {
    std::uint64_t seed = 0;
    ModelTopology topology;
    AdapterOptions adapter;
    SyntheticTask task;
    AdamWOptions optimizer;
    /// Weight of the orthogonality penalty.
    double gamma = 0.1;
    BudgetSchedule schedule;
    MetricKind metric;
    AllocatorMode mode = AllocatorMode::bidirectional;
    InitStrategy init;
    std::size_t batch_size = 32;
    std::int64_t log_every = 10;
    /// Re-evaluates a probe batch around every zero-impact expansion and
    /// throws InvariantError if the loss moves.
    bool verify_zero_impact = false;

    void validate() const;
};

struct MetricsRow {
    std::int64_t step = 0;
    double loss = 0.0;
    std::size_t total_rank = 0;
    std::size_t param_count = 0;
    std::vector<std::size_t> ranks;  ///< adapter order

    friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

struct AdapterInfo {
    std::string id;
    std::size_t r_init = 0;
    std::size_t r_max = 0;
    std::size_t d_out = 0;
    std::size_t d_in = 0;

    friend bool operator==(const AdapterInfo&, const AdapterInfo&) = default;
};

struct Divergence {
    std::int64_t step = 0;
    double loss = 0.0;
    std::string reason;
};

struct TrainResult {
    ToyModel model;
    std::vector<AdapterInfo> adapters;  ///< declared depth order
    std::vector<AllocationEvent> events;
    std::vector<MetricsRow> metrics;
    std::optional<Divergence> divergence;
    std::int64_t steps_completed = 0;
    std::size_t allocation_steps = 0;
    double final_train_loss = 0.0;
    double final_eval_loss = 0.0;
};

/// Divergence: the batch loss is non-finite or exceeds this multiple of the first batch loss.
inline constexpr double kDivergenceFactor = 1e6;

/// Builds the task and model from the config, then trains for
/// schedule.total_steps steps. Each step samples a batch, runs forward and
/// backward (with the orthogonality penalty), updates sensitivity state when
/// that metric is selected, applies one AdamW step, and on allocation steps
/// scores every adapter and applies the selected prunes and expansions.
TrainResult run_training(const TrainConfig& config);

/// The model a run starts from (same seed streams as run_training).
ToyModel initial_model(const TrainConfig& config);

} // namespace flexrank
