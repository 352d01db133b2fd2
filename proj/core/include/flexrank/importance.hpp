// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flexrank/adapter.hpp"

namespace flexrank {

enum class MetricVariant {
    spectral_entropy,
    nuclear,
    frobenius,
    sensitivity,
    elem_energy_entropy,
    mat_energy_entropy,
};

std::string_view to_string(MetricVariant variant);
MetricVariant metric_variant_from_string(std::string_view name);

struct MetricKind {
    MetricVariant variant = MetricVariant::spectral_entropy;
    double epsilon = 1e-12;
    double beta1 = 0.85;
    double beta2 = 0.85;

    void validate() const;
};

/// Energy shares s_i = lambda_i^2 / sum_j lambda_j^2.
/// Returns nullopt when every lambda_i is zero; callers substitute the uniform distribution.
std::optional<std::vector<double>> energy_distribution(std::span<const double> lambda);

/// True when the entropy-family score for `lambda` falls back to a convention
/// (rank one, or an all-zero spectrum).
bool is_degenerate_spectrum(std::span<const double> lambda);

/// -(1 / log r) sum_i s_i log(s_i + eps). Zero shares contribute nothing.
/// Rank one scores 0; an all-zero spectrum is treated as uniform.
double spectral_entropy(std::span<const double> lambda, double epsilon = 1e-12);

/// Mean |lambda_i|.
double nuclear_importance(std::span<const double> lambda);

/// sqrt(sum lambda_i^2) / r.
double frobenius_importance(std::span<const double> lambda);

/// -(1 / (r log r)) sum_i lambda_i s_i log(s_i + eps)
double elem_energy_entropy(std::span<const double> lambda, double epsilon = 1e-12);

/// -(1 / (r log r)) (sum_i lambda_i) (sum_i s_i log(s_i + eps))
double mat_energy_entropy(std::span<const double> lambda, double epsilon = 1e-12);

/// Matrix-level smoothed sensitivity for one adapter.
struct SensitivityState {
    double smoothed = 0.0;     ///< I-bar
    double uncertainty = 0.0;  ///< U-bar
    std::int64_t updates = 0;

    double score() const { return smoothed * uncertainty; }
};

/// Raw sensitivity: mean over all elements of |w * g|.
double raw_sensitivity(std::span<const double> params, std::span<const double> grads);

SensitivityState sensitivity_update(const SensitivityState& state, std::span<const double> params,
                                    std::span<const double> grads, double beta1, double beta2);

/// Flattened P, lambda, Q of an adapter, in that order.
std::vector<double> flatten_trainables(const SvdAdapter& adapter);

struct ImportanceReport {
    std::int64_t step = 0;
    MetricKind metric;
    std::map<std::string, double> scores;
    /// Adapters whose score came from a degenerate-spectrum convention.
    std::set<std::string> flagged;
};

/// Score for one adapter under a stateless metric. Throws for sensitivity.
double score_spectrum(std::span<const double> lambda, const MetricKind& metric);

ImportanceReport score_all(std::span<const SvdAdapter* const> adapters, const MetricKind& metric,
                           const std::map<std::string, SensitivityState>& sensitivity, std::int64_t step = 0);

} // namespace flexrank
