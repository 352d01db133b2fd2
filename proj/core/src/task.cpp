// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexrank/task.hpp"

#include <cmath>

#include "flexrank/errors.hpp"

namespace flexrank {

std::string_view to_string(TaskKind kind)
{
    return kind == TaskKind::low_rank_teacher ? "low_rank_teacher" : "two_blob";
}

TaskKind task_kind_from_string(std::string_view name)
{
    if (name == "low_rank_teacher") {
        return TaskKind::low_rank_teacher;
    }
    if (name == "two_blob") {
        return TaskKind::two_blob;
    }
    throw ParameterError("unknown task kind '" + std::string(name) + "'");
}

Dataset Dataset::gather(std::span<const std::size_t> indices) const
{
    Dataset out{Matrix(inputs.rows(), indices.size()), Matrix(targets.rows(), indices.size())};
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const std::size_t src = indices[j];
        for (std::size_t i = 0; i < inputs.rows(); ++i) {
            out.inputs(i, j) = inputs(i, src);
        }
        for (std::size_t i = 0; i < targets.rows(); ++i) {
            out.targets(i, j) = targets(i, src);
        }
    }
    return out;
}

void validate_task(const SyntheticTask& spec, const ModelTopology& topology)
{
    topology.validate();
    if (spec.train_samples == 0 || spec.eval_samples == 0) {
        throw ParameterError("task: sample counts must be positive");
    }
    if (!(spec.noise_std >= 0.0) || !std::isfinite(spec.noise_std)) {
        throw ParameterError("task: noise_std must be non-negative");
    }
    if (spec.kind == TaskKind::two_blob) {
        if (topology.output_dim() != 2) {
            throw ParameterError("task: two_blob needs a model with 2 outputs");
        }
        return;
    }
    if (!(spec.delta_scale > 0.0) || !std::isfinite(spec.delta_scale)) {
        throw ParameterError("task: delta_scale must be positive");
    }
    const auto shapes = topology.linear_shapes();
    const auto ids = topology.adapter_ids();
    std::size_t adapted = 0;
    for (std::size_t k = 0; k < shapes.size(); ++k) {
        if (ids[k].empty()) {
            continue;
        }
        if (adapted >= spec.teacher_ranks.size()) {
            throw ParameterError("task: teacher_ranks has fewer entries than adapted layers");
        }
        const std::size_t rank = spec.teacher_ranks[adapted];
        const std::size_t limit = std::min(shapes[k].first, shapes[k].second);
        if (rank > limit) {
            throw ParameterError("task: teacher rank " + std::to_string(rank) + " exceeds layer '" + ids[k] +
                                 "' dims " + std::to_string(shapes[k].first) + "x" + std::to_string(shapes[k].second));
        }
        ++adapted;
    }
    if (adapted != spec.teacher_ranks.size()) {
        throw ParameterError("task: teacher_ranks has " + std::to_string(spec.teacher_ranks.size()) +
                             " entries for " + std::to_string(adapted) + " adapted layers");
    }
}

ToyModel teacher_model(const TaskData& data, const ModelTopology& topology)
{
    ModelTopology frozen = topology;
    for (auto& layer : frozen.layers) {
        layer.adapter = false;
    }
    std::vector<Matrix> weights;
    weights.reserve(data.base_weights.size());
    for (std::size_t k = 0; k < data.base_weights.size(); ++k) {
        weights.push_back(add(data.base_weights[k], data.teacher_deltas[k]));
    }
    SeededRng unused(0);
    return build_model(frozen, weights, data.base_biases, AdapterOptions{}, unused);
}

namespace {

Dataset regression_split(const ToyModel& teacher, std::size_t samples, double noise_std, SeededRng& rng)
{
    Dataset d;
    d.inputs = gaussian_matrix(teacher.input_dim(), samples, 1.0, rng);
    d.targets = model_predict(teacher, d.inputs);
    if (noise_std > 0.0) {
        d.targets = add(d.targets, gaussian_matrix(d.targets.rows(), samples, noise_std, rng));
    }
    return d;
}

Dataset blob_split(std::span<const double> direction, double separation, std::size_t samples, SeededRng& rng)
{
    const std::size_t dim = direction.size();
    Dataset d{Matrix(dim, samples), Matrix(2, samples)};
    for (std::size_t j = 0; j < samples; ++j) {
        const std::size_t label = rng.uniform_index(2);
        const double sign = label == 1 ? 1.0 : -1.0;
        for (std::size_t i = 0; i < dim; ++i) {
            d.inputs(i, j) = sign * 0.5 * separation * direction[i] + rng.normal();
        }
        d.targets(label, j) = 1.0;
    }
    return d;
}

} // namespace

TaskData make_task(const SyntheticTask& spec, const ModelTopology& topology, SeededRng& rng)
{
    validate_task(spec, topology);
    const auto shapes = topology.linear_shapes();
    const auto ids = topology.adapter_ids();

    TaskData data;
    for (std::size_t k = 0; k < shapes.size(); ++k) {
        const auto [d_out, d_in] = shapes[k];
        data.base_weights.push_back(gaussian_matrix(d_out, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)), rng));
        data.base_biases.emplace_back(d_out, 0.0);
    }

    std::size_t adapted = 0;
    for (std::size_t k = 0; k < shapes.size(); ++k) {
        const auto [d_out, d_in] = shapes[k];
        Matrix delta(d_out, d_in);
        if (spec.kind == TaskKind::low_rank_teacher && !ids[k].empty()) {
            // Sum of `rank` Gaussian outer products: rank exactly `rank` with probability one.
            const std::size_t rank = spec.teacher_ranks[adapted++];
            for (std::size_t j = 0; j < rank; ++j) {
                const auto u = gaussian_vector(d_out, 1.0 / std::sqrt(static_cast<double>(d_out)), rng);
                const auto v = gaussian_vector(d_in, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
                for (std::size_t a = 0; a < d_out; ++a) {
                    for (std::size_t b = 0; b < d_in; ++b) {
                        delta(a, b) += spec.delta_scale * u[a] * v[b];
                    }
                }
            }
        }
        data.teacher_deltas.push_back(std::move(delta));
    }

    if (spec.kind == TaskKind::low_rank_teacher) {
        const ToyModel teacher = teacher_model(data, topology);
        data.train = regression_split(teacher, spec.train_samples, spec.noise_std, rng);
        data.eval = regression_split(teacher, spec.eval_samples, spec.noise_std, rng);
    } else {
        auto direction = gaussian_vector(topology.input_dim, 1.0, rng);
        const double n = norm2(direction);
        for (double& v : direction) {
            v /= n;
        }
        data.train = blob_split(direction, spec.blob_separation, spec.train_samples, rng);
        data.eval = blob_split(direction, spec.blob_separation, spec.eval_samples, rng);
    }
    return data;
}

} // namespace flexrank
