// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

// Random small models and a finite-difference gradient sweep.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "flexrank/model.hpp"
#include "support/oracles.hpp"

namespace flexrank::testing {

// Denominator floor for gradient relative errors; below it the comparison is
// effectively absolute.
inline constexpr double kGradientFloor = 1e-6;

struct RandomModelCase {
    ToyModel model;
    Matrix x;
    Matrix targets;
};

// Up to three linear layers (dims <= 12) with random activations, biases,
// adapters, and loss. Adapter factors are dense so every gradient is exercised.
inline RandomModelCase random_model(Gen& g)
{
    const std::size_t linear_count = g.index(1, 3);
    const std::size_t input_dim = g.index(1, 12);
    std::vector<Layer> layers;
    std::size_t d_in = input_dim;
    std::size_t adapted = 0;
    for (std::size_t k = 0; k < linear_count; ++k) {
        const std::size_t d_out = g.index(1, 12);
        LinearLayer lin;
        Matrix w = g.matrix(d_out, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)));
        const bool adapt = g.coin(0.75) || (k + 1 == linear_count && adapted == 0);
        if (adapt) {
            const std::size_t r_max = g.index(1, 6);
            const std::size_t r = g.index(1, r_max);
            lin.weight = SvdAdapter("layer" + std::to_string(k), std::move(w), g.matrix(d_out, r, 0.5), g.vector(r),
                                    g.matrix(r, d_in, 0.5), g.index(1, r_max), r_max, g.uniform(0.5, 4.0));
            ++adapted;
        } else {
            lin.weight = std::move(w);
        }
        if (g.coin(0.6)) {
            lin.bias = g.vector(d_out, 0.3);
        }
        layers.emplace_back(std::move(lin));
        if (k + 1 < linear_count) {
            layers.emplace_back(ActivationLayer{g.coin() ? ActivationKind::tanh : ActivationKind::relu});
        }
        d_in = d_out;
    }
    const LossKind loss = g.coin() ? LossKind::mse : LossKind::softmax_cross_entropy;
    ToyModel model(input_dim, std::move(layers), loss);
    const std::size_t batch = g.index(1, 5);
    Matrix x = g.matrix(input_dim, batch);
    Matrix targets(d_in, batch);
    if (loss == LossKind::mse) {
        targets = g.matrix(d_in, batch);
    } else {
        for (std::size_t j = 0; j < batch; ++j) {
            targets(g.index(0, d_in - 1), j) = 1.0;
        }
    }
    return {std::move(model), std::move(x), std::move(targets)};
}

struct GradientCheck {
    double worst_relative = 0.0;
    std::size_t parameters = 0;
};

// Compares model_backward against central differences of objective() for
// every trainable scalar.
inline GradientCheck check_gradients(ToyModel& model, const Matrix& x, const Matrix& targets, double gamma,
                                     double h = 1e-4)
{
    const ForwardResult fwd = model_forward(model, x);
    const Gradients grads =
        model_backward(model, fwd.cache, loss_gradient(model.loss(), fwd.output, targets), gamma);
    auto f = [&] { return objective(model, x, targets, gamma); };
    GradientCheck out;
    auto compare = [&](double analytic, double* slot) {
        const double fd = central_difference(f, slot, h);
        out.worst_relative = std::max(out.worst_relative, relative_error(analytic, fd, kGradientFloor));
        ++out.parameters;
    };
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        LinearLayer* lin = model.linear(i);
        if (lin == nullptr) {
            continue;
        }
        const LayerGradients& lg = grads.layers[i];
        if (SvdAdapter* a = lin->adapter()) {
            // Writes go through the raw storage; the version counter is not
            // involved because no cached forward is reused.
            Matrix& p = a->p_mut();
            for (std::size_t k = 0; k < p.size(); ++k) {
                compare(lg.p.data()[k], &p.data()[k]);
            }
            auto lambda = a->lambda_mut();
            for (std::size_t k = 0; k < lambda.size(); ++k) {
                compare(lg.lambda[k], &lambda[k]);
            }
            Matrix& q = a->q_mut();
            for (std::size_t k = 0; k < q.size(); ++k) {
                compare(lg.q.data()[k], &q.data()[k]);
            }
        }
        if (lin->bias) {
            std::vector<double>& b = model.bias_mut(i);
            for (std::size_t k = 0; k < b.size(); ++k) {
                compare(lg.bias[k], &b[k]);
            }
        }
    }
    return out;
}

} // namespace flexrank::testing
