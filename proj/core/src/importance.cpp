// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexrank/importance.hpp"

#include <cmath>

#include "flexrank/errors.hpp"

namespace flexrank {

namespace {

constexpr MetricVariant kAllVariants[] = {
    MetricVariant::spectral_entropy,    MetricVariant::nuclear,
    MetricVariant::frobenius,           MetricVariant::sensitivity,
    MetricVariant::elem_energy_entropy, MetricVariant::mat_energy_entropy,
};

std::vector<double> shares_or_uniform(std::span<const double> lambda)
{
    if (auto s = energy_distribution(lambda)) {
        return *s;
    }
    return std::vector<double>(lambda.size(), 1.0 / static_cast<double>(lambda.size()));
}

// sum_i weight_i * s_i * log(s_i + eps), skipping zero shares.
template <typename Weight>
double weighted_entropy_sum(const std::vector<double>& s, double epsilon, Weight weight)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] > 0.0) {
            acc += weight(i) * s[i] * std::log(s[i] + epsilon);
        }
    }
    return acc;
}

void check_epsilon(double epsilon)
{
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw ParameterError("epsilon must be positive");
    }
}

} // namespace

std::string_view to_string(MetricVariant variant)
{
    switch (variant) {
    case MetricVariant::spectral_entropy: return "spectral_entropy";
    case MetricVariant::nuclear: return "nuclear";
    case MetricVariant::frobenius: return "frobenius";
    case MetricVariant::sensitivity: return "sensitivity";
    case MetricVariant::elem_energy_entropy: return "elem_energy_entropy";
    case MetricVariant::mat_energy_entropy: return "mat_energy_entropy";
    }
    return "unknown";
}

MetricVariant metric_variant_from_string(std::string_view name)
{
    for (auto v : kAllVariants) {
        if (to_string(v) == name) {
            return v;
        }
    }
    throw ParameterError("unknown metric '" + std::string(name) + "'");
}

void MetricKind::validate() const
{
    check_epsilon(epsilon);
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw ParameterError("sensitivity betas must lie in (0, 1)");
    }
}

std::optional<std::vector<double>> energy_distribution(std::span<const double> lambda)
{
    if (lambda.empty()) {
        throw ParameterError("energy_distribution: empty spectrum");
    }
    double total = 0.0;
    for (double v : lambda) {
        total += v * v;
    }
    if (total == 0.0) {
        return std::nullopt;
    }
    std::vector<double> s(lambda.size());
    for (std::size_t i = 0; i < lambda.size(); ++i) {
        s[i] = lambda[i] * lambda[i] / total;
    }
    return s;
}

bool is_degenerate_spectrum(std::span<const double> lambda)
{
    if (lambda.size() <= 1) {
        return true;
    }
    for (double v : lambda) {
        if (v != 0.0) {
            return false;
        }
    }
    return true;
}

double spectral_entropy(std::span<const double> lambda, double epsilon)
{
    check_epsilon(epsilon);
    if (lambda.empty()) {
        throw ParameterError("spectral_entropy: empty spectrum");
    }
    const std::size_t r = lambda.size();
    if (r == 1) {
        return 0.0;
    }
    const auto s = shares_or_uniform(lambda);
    const double sum = weighted_entropy_sum(s, epsilon, [](std::size_t) { return 1.0; });
    return -sum / std::log(static_cast<double>(r));
}

double nuclear_importance(std::span<const double> lambda)
{
    if (lambda.empty()) {
        throw ParameterError("nuclear_importance: empty spectrum");
    }
    double acc = 0.0;
    for (double v : lambda) {
        acc += std::abs(v);
    }
    return acc / static_cast<double>(lambda.size());
}

double frobenius_importance(std::span<const double> lambda)
{
    if (lambda.empty()) {
        throw ParameterError("frobenius_importance: empty spectrum");
    }
    double acc = 0.0;
    for (double v : lambda) {
        acc += v * v;
    }
    return std::sqrt(acc) / static_cast<double>(lambda.size());
}

double elem_energy_entropy(std::span<const double> lambda, double epsilon)
{
    check_epsilon(epsilon);
    if (lambda.empty()) {
        throw ParameterError("elem_energy_entropy: empty spectrum");
    }
    const std::size_t r = lambda.size();
    if (r == 1) {
        return 0.0;
    }
    const auto s = shares_or_uniform(lambda);
    const double sum = weighted_entropy_sum(s, epsilon, [&](std::size_t i) { return lambda[i]; });
    const double rd = static_cast<double>(r);
    return -sum / (rd * std::log(rd));
}

double mat_energy_entropy(std::span<const double> lambda, double epsilon)
{
    check_epsilon(epsilon);
    if (lambda.empty()) {
        throw ParameterError("mat_energy_entropy: empty spectrum");
    }
    const std::size_t r = lambda.size();
    if (r == 1) {
        return 0.0;
    }
    const auto s = shares_or_uniform(lambda);
    double total = 0.0;
    for (double v : lambda) {
        total += v;
    }
    const double sum = weighted_entropy_sum(s, epsilon, [](std::size_t) { return 1.0; });
    const double rd = static_cast<double>(r);
    return -total * sum / (rd * std::log(rd));
}

double raw_sensitivity(std::span<const double> params, std::span<const double> grads)
{
    if (params.size() != grads.size()) {
        throw ShapeError("sensitivity: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(grads.size()) + " gradients");
    }
    if (params.empty()) {
        return 0.0;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        acc += std::abs(params[i] * grads[i]);
    }
    return acc / static_cast<double>(params.size());
}

SensitivityState sensitivity_update(const SensitivityState& state, std::span<const double> params,
                                    std::span<const double> grads, double beta1, double beta2)
{
    const double raw = raw_sensitivity(params, grads);
    SensitivityState next;
    next.smoothed = beta1 * state.smoothed + (1.0 - beta1) * raw;
    next.uncertainty = beta2 * state.uncertainty + (1.0 - beta2) * std::abs(raw - next.smoothed);
    next.updates = state.updates + 1;
    return next;
}

std::vector<double> flatten_trainables(const SvdAdapter& adapter)
{
    std::vector<double> out;
    out.reserve(adapter.parameter_count());
    const auto p = adapter.p().data();
    const auto q = adapter.q().data();
    out.insert(out.end(), p.begin(), p.end());
    out.insert(out.end(), adapter.lambda().begin(), adapter.lambda().end());
    out.insert(out.end(), q.begin(), q.end());
    return out;
}

double score_spectrum(std::span<const double> lambda, const MetricKind& metric)
{
    switch (metric.variant) {
    case MetricVariant::spectral_entropy: return spectral_entropy(lambda, metric.epsilon);
    case MetricVariant::nuclear: return nuclear_importance(lambda);
    case MetricVariant::frobenius: return frobenius_importance(lambda);
    case MetricVariant::elem_energy_entropy: return elem_energy_entropy(lambda, metric.epsilon);
    case MetricVariant::mat_energy_entropy: return mat_energy_entropy(lambda, metric.epsilon);
    case MetricVariant::sensitivity: break;
    }
    throw ParameterError("sensitivity scores need gradient state, not a spectrum");
}

ImportanceReport score_all(std::span<const SvdAdapter* const> adapters, const MetricKind& metric,
                           const std::map<std::string, SensitivityState>& sensitivity, std::int64_t step)
{
    if (adapters.empty()) {
        throw ConfigError("score_all: no adapters registered");
    }
    metric.validate();
    ImportanceReport report;
    report.step = step;
    report.metric = metric;
    const bool entropy_family = metric.variant == MetricVariant::spectral_entropy ||
                                metric.variant == MetricVariant::elem_energy_entropy ||
                                metric.variant == MetricVariant::mat_energy_entropy;
    for (const SvdAdapter* adapter : adapters) {
        const std::string& id = adapter->id();
        if (report.scores.contains(id)) {
            throw ConfigError("score_all: duplicate adapter id '" + id + "'");
        }
        double score = 0.0;
        if (metric.variant == MetricVariant::sensitivity) {
            auto it = sensitivity.find(id);
            score = it == sensitivity.end() ? 0.0 : it->second.score();
        } else {
            score = score_spectrum(adapter->lambda(), metric);
            if (entropy_family && is_degenerate_spectrum(adapter->lambda())) {
                report.flagged.insert(id);
            }
        }
        if (!std::isfinite(score)) {
            throw InvariantError("score_all: non-finite score for '" + id + "'");
        }
        report.scores.emplace(id, score);
    }
    return report;
}

} // namespace flexrank
