// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flexrank/adapter.hpp"
#include "flexrank/matrix.hpp"
#include "flexrank/model.hpp"

namespace flexrank {

struct AdamWOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    void validate() const;
};

/// First and second moments for one flat parameter block.
struct Moments {
    std::vector<double> first;
    std::vector<double> second;
};

/// One bias-corrected adaptive-moment update with decoupled weight decay.
/// `step` counts from 1.
void adamw_update(std::span<double> params, std::span<const double> grads, Moments& moments,
                  const AdamWOptions& options, std::int64_t step);

/// Optimizer moments for one linear layer. P and Q moments keep their
/// matrix shape so a removed direction can be sliced out.
struct LayerMoments {
    Matrix p_first, p_second;
    std::vector<double> lambda_first, lambda_second;
    Matrix q_first, q_second;
    Moments bias;
};

class AdamW {
public:
    AdamW(const AdamWOptions& options, const ToyModel& model);

    void step(ToyModel& model, const Gradients& grads);

    /// Drops the moments of a pruned direction, or appends zero moments for an
    /// expanded one. Moments of every other direction are kept.
    void on_allocation(const ToyModel& model, const AllocationEvent& event);

    std::int64_t steps_taken() const { return steps_; }
    const LayerMoments& layer(std::size_t index) const { return layers_.at(index); }
    const AdamWOptions& options() const { return options_; }

private:
    AdamWOptions options_;
    std::vector<LayerMoments> layers_;
    std::int64_t steps_ = 0;
};

} // namespace flexrank
