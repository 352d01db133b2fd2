// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "flexrank/matrix.hpp"
#include "flexrank/model.hpp"
#include "flexrank/rng.hpp"

namespace flexrank {

enum class TaskKind { low_rank_teacher, two_blob };

std::string_view to_string(TaskKind kind);
TaskKind task_kind_from_string(std::string_view name);

/// Synthetic supervised task.
///
/// low_rank_teacher: the teacher is the frozen network with an exact-rank
/// delta added to each adapted layer (teacher_ranks, in adapter order); the
/// targets are teacher outputs plus Gaussian noise.
/// two_blob: two Gaussian clusters separated along a random unit direction,
/// labelled with one-hot columns; the output layer must have two units.
struct SyntheticTask {
    TaskKind kind = TaskKind::low_rank_teacher;
    std::vector<std::size_t> teacher_ranks;
    double noise_std = 0.0;
    std::size_t train_samples = 256;
    std::size_t eval_samples = 256;
    /// Scale of each rank-one term of a teacher delta.
    double delta_scale = 1.0;
    /// Distance between the two blob means.
    double blob_separation = 4.0;

    friend bool operator==(const SyntheticTask&, const SyntheticTask&) = default;
};

struct Dataset {
    Matrix inputs;   ///< input_dim x samples
    Matrix targets;  ///< output_dim x samples

    std::size_t size() const { return inputs.cols(); }
    /// Columns at the given indices, in order.
    Dataset gather(std::span<const std::size_t> indices) const;
};

struct TaskData {
    Dataset train;
    Dataset eval;
    /// Frozen weight of every linear layer; shared by teacher and student.
    std::vector<Matrix> base_weights;
    std::vector<std::vector<double>> base_biases;
    /// Teacher delta per linear layer; zero matrices for non-adapted layers.
    std::vector<Matrix> teacher_deltas;
};

/// Throws ParameterError for ranks exceeding layer dims or a rank count that
/// does not match the number of adapted layers.
void validate_task(const SyntheticTask& spec, const ModelTopology& topology);

TaskData make_task(const SyntheticTask& spec, const ModelTopology& topology, SeededRng& rng);

/// Frozen network plus the teacher deltas; used to produce targets.
ToyModel teacher_model(const TaskData& data, const ModelTopology& topology);

} // namespace flexrank
