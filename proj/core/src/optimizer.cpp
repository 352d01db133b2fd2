// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexrank/optimizer.hpp"

#include <cmath>

#include "flexrank/errors.hpp"

namespace flexrank {

void AdamWOptions::validate() const
{
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw ParameterError("optimizer.lr must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ParameterError("optimizer betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) {
        throw ParameterError("optimizer.eps must be positive");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw ParameterError("optimizer.weight_decay must be non-negative");
    }
}

void adamw_update(std::span<double> params, std::span<const double> grads, Moments& moments,
                  const AdamWOptions& options, std::int64_t step)
{
    if (params.size() != grads.size()) {
        throw ShapeError("adamw_update: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(grads.size()) + " gradients");
    }
    if (moments.first.size() != params.size() || moments.second.size() != params.size()) {
        throw ShapeError("adamw_update: optimizer state does not match parameter block");
    }
    if (step < 1) {
        throw ParameterError("adamw_update: step counts from 1");
    }
    const double correction1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
    const double correction2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double& m = moments.first[i];
        double& v = moments.second[i];
        m = options.beta1 * m + (1.0 - options.beta1) * grads[i];
        v = options.beta2 * v + (1.0 - options.beta2) * grads[i] * grads[i];
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        params[i] -= options.lr * (m_hat / (std::sqrt(v_hat) + options.eps) + options.weight_decay * params[i]);
    }
}

namespace {

// Runs adamw_update on a matrix-shaped block whose moments are matrices.
void update_matrix(Matrix& params, const Matrix& grads, Matrix& first, Matrix& second, const AdamWOptions& options,
                   std::int64_t step)
{
    if (grads.rows() != params.rows() || grads.cols() != params.cols() || first.rows() != params.rows() ||
        first.cols() != params.cols()) {
        throw ShapeError("AdamW: factor gradient or state shape mismatch");
    }
    Moments moments{{first.data().begin(), first.data().end()}, {second.data().begin(), second.data().end()}};
    adamw_update(params.data(), grads.data(), moments, options, step);
    std::copy(moments.first.begin(), moments.first.end(), first.data().begin());
    std::copy(moments.second.begin(), moments.second.end(), second.data().begin());
}

} // namespace

AdamW::AdamW(const AdamWOptions& options, const ToyModel& model) : options_(options)
{
    options_.validate();
    layers_.resize(model.layer_count());
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        const LinearLayer* lin = model.linear(i);
        if (lin == nullptr) {
            continue;
        }
        LayerMoments& s = layers_[i];
        if (const SvdAdapter* a = lin->adapter()) {
            s.p_first = s.p_second = Matrix(a->d_out(), a->rank());
            s.q_first = s.q_second = Matrix(a->rank(), a->d_in());
            s.lambda_first.assign(a->rank(), 0.0);
            s.lambda_second.assign(a->rank(), 0.0);
        }
        if (lin->bias) {
            s.bias.first.assign(lin->bias->size(), 0.0);
            s.bias.second.assign(lin->bias->size(), 0.0);
        }
    }
}

void AdamW::step(ToyModel& model, const Gradients& grads)
{
    if (grads.layers.size() != layers_.size() || model.layer_count() != layers_.size()) {
        throw ShapeError("AdamW::step: gradient layout does not match the model");
    }
    ++steps_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        LinearLayer* lin = model.linear(i);
        if (lin == nullptr) {
            continue;
        }
        LayerMoments& s = layers_[i];
        const LayerGradients& g = grads.layers[i];
        if (SvdAdapter* a = lin->adapter()) {
            update_matrix(a->p_mut(), g.p, s.p_first, s.p_second, options_, steps_);
            Moments lm{std::move(s.lambda_first), std::move(s.lambda_second)};
            adamw_update(a->lambda_mut(), g.lambda, lm, options_, steps_);
            s.lambda_first = std::move(lm.first);
            s.lambda_second = std::move(lm.second);
            update_matrix(a->q_mut(), g.q, s.q_first, s.q_second, options_, steps_);
        }
        if (lin->bias) {
            adamw_update(model.bias_mut(i), g.bias, s.bias, options_, steps_);
        }
    }
}

void AdamW::on_allocation(const ToyModel& model, const AllocationEvent& event)
{
    const std::size_t index = model.adapter_layer(event.adapter_id);
    LayerMoments& s = layers_.at(index);
    const std::size_t k = event.direction;
    if (event.action == AllocationAction::prune) {
        s.p_first.erase_column(k);
        s.p_second.erase_column(k);
        s.q_first.erase_row(k);
        s.q_second.erase_row(k);
        s.lambda_first.erase(s.lambda_first.begin() + static_cast<std::ptrdiff_t>(k));
        s.lambda_second.erase(s.lambda_second.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
        if (k != s.lambda_first.size()) {
            throw InvariantError("AdamW: expansion must append the last direction");
        }
        const std::vector<double> zero_col(s.p_first.rows(), 0.0);
        const std::vector<double> zero_row(s.q_first.cols(), 0.0);
        s.p_first.append_column(zero_col);
        s.p_second.append_column(zero_col);
        s.q_first.append_row(zero_row);
        s.q_second.append_row(zero_row);
        s.lambda_first.push_back(0.0);
        s.lambda_second.push_back(0.0);
    }
}

} // namespace flexrank
