// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexrank/adapter.hpp"

#include <cmath>

#include "flexrank/errors.hpp"

namespace flexrank {

void InitStrategy::validate() const
{
    if (kind == InitKind::small_init && !(small_value > 0.0 && std::isfinite(small_value))) {
        throw ParameterError("small_init requires a positive small_value");
    }
}

std::string_view to_string(InitKind kind)
{
    switch (kind) {
    case InitKind::zero_impact: return "zero_impact";
    case InitKind::small_init: return "small_init";
    case InitKind::zero_init: return "zero_init";
    case InitKind::orthogonal_init: return "orthogonal_init";
    }
    return "unknown";
}

InitKind init_kind_from_string(std::string_view name)
{
    for (auto kind : {InitKind::zero_impact, InitKind::small_init, InitKind::zero_init,
                      InitKind::orthogonal_init}) {
        if (to_string(kind) == name) {
            return kind;
        }
    }
    throw ParameterError("unknown init strategy '" + std::string(name) + "'");
}

std::string_view to_string(AllocationAction action)
{
    return action == AllocationAction::prune ? "prune" : "expand";
}

AllocationAction allocation_action_from_string(std::string_view name)
{
    if (name == "prune") {
        return AllocationAction::prune;
    }
    if (name == "expand") {
        return AllocationAction::expand;
    }
    throw ParseError("unknown allocation action '" + std::string(name) + "'");
}

SvdAdapter::SvdAdapter(std::string id, Matrix base_w, const AdapterOptions& options, SeededRng& rng)
    : id_(std::move(id)),
      base_w_(std::move(base_w)),
      lambda_(options.r_init, 0.0),
      r_init_(options.r_init),
      r_max_(options.r_max),
      alpha_(options.alpha),
      vector_std_(options.vector_std)
{
    p_ = gaussian_matrix(base_w_.rows(), r_init_, vector_std_, rng);
    q_ = gaussian_matrix(r_init_, base_w_.cols(), vector_std_, rng);
    check_structure();
}

SvdAdapter::SvdAdapter(std::string id, Matrix base_w, Matrix p, std::vector<double> lambda, Matrix q,
                       std::size_t r_init, std::size_t r_max, double alpha, double vector_std)
    : id_(std::move(id)),
      base_w_(std::move(base_w)),
      p_(std::move(p)),
      lambda_(std::move(lambda)),
      q_(std::move(q)),
      r_init_(r_init),
      r_max_(r_max),
      alpha_(alpha),
      vector_std_(vector_std)
{
    check_structure();
}

void SvdAdapter::check_structure() const
{
    if (id_.empty()) {
        throw ParameterError("adapter id must not be empty");
    }
    if (base_w_.rows() == 0 || base_w_.cols() == 0) {
        throw ShapeError("adapter '" + id_ + "': empty base weight");
    }
    if (r_init_ < 1 || r_max_ < r_init_) {
        throw ParameterError("adapter '" + id_ + "': need 1 <= r_init <= r_max");
    }
    if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) {
        throw ParameterError("adapter '" + id_ + "': alpha must be positive");
    }
    if (!(vector_std_ > 0.0)) {
        throw ParameterError("adapter '" + id_ + "': vector_std must be positive");
    }
    const std::size_t r = lambda_.size();
    if (p_.rows() != d_out() || p_.cols() != r || q_.rows() != r || q_.cols() != d_in()) {
        throw ShapeError("adapter '" + id_ + "': factor shapes do not match rank " + std::to_string(r));
    }
    if (r < 1 || r > r_max_) {
        throw ParameterError("adapter '" + id_ + "': rank " + std::to_string(r) + " outside [1, r_max]");
    }
}

void SvdAdapter::set_factors(Matrix p, std::vector<double> lambda, Matrix q)
{
    p_ = std::move(p);
    lambda_ = std::move(lambda);
    q_ = std::move(q);
    ++version_;
    check_structure();
}

Matrix SvdAdapter::delta() const
{
    Matrix scaled_q = q_;
    for (std::size_t i = 0; i < rank(); ++i) {
        for (double& v : scaled_q.row(i)) {
            v *= lambda_[i];
        }
    }
    return scaled(matmul(p_, scaled_q), scale());
}

Matrix forward(const SvdAdapter& adapter, const Matrix& x) { return forward(adapter, x, nullptr); }

Matrix forward(const SvdAdapter& adapter, const Matrix& x, AdapterActivations* activations)
{
    if (x.rows() != adapter.d_in()) {
        throw ShapeError("adapter '" + adapter.id() + "': input has " + std::to_string(x.rows()) +
                         " rows, expected " + std::to_string(adapter.d_in()));
    }
    Matrix out = matmul(adapter.base_w(), x);
    Matrix qx = matmul(adapter.q(), x);
    Matrix lqx = qx;
    const auto& lambda = adapter.lambda();
    for (std::size_t i = 0; i < lambda.size(); ++i) {
        for (double& v : lqx.row(i)) {
            v *= lambda[i];
        }
    }
    const Matrix update = matmul(adapter.p(), lqx);
    const double s = adapter.scale();
    auto dst = out.data();
    auto src = update.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += s * src[i];
    }
    if (activations != nullptr) {
        activations->qx = std::move(qx);
        activations->scaled = std::move(lqx);
    }
    return out;
}

namespace {

// Sum of squared entries of (gram - I).
double identity_gap(const Matrix& gram)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < gram.rows(); ++i) {
        for (std::size_t j = 0; j < gram.cols(); ++j) {
            const double d = gram(i, j) - (i == j ? 1.0 : 0.0);
            acc += d * d;
        }
    }
    return acc;
}

Matrix minus_identity(Matrix gram)
{
    for (std::size_t i = 0; i < gram.rows(); ++i) {
        gram(i, i) -= 1.0;
    }
    return gram;
}

} // namespace

double ortho_regularizer(const SvdAdapter& adapter)
{
    const Matrix& p = adapter.p();
    const Matrix& q = adapter.q();
    return identity_gap(matmul(p.transposed(), p)) + identity_gap(matmul(q, q.transposed()));
}

RegularizerGrad ortho_regularizer_grad(const SvdAdapter& adapter)
{
    const Matrix& p = adapter.p();
    const Matrix& q = adapter.q();
    const Matrix gap_p = minus_identity(matmul(p.transposed(), p));
    const Matrix gap_q = minus_identity(matmul(q, q.transposed()));
    return {scaled(matmul(p, gap_p), 4.0), scaled(matmul(gap_q, q), 4.0)};
}

std::size_t smallest_direction(std::span<const double> lambda)
{
    if (lambda.empty()) {
        throw ParameterError("smallest_direction: empty spectrum");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < lambda.size(); ++i) {
        if (std::abs(lambda[i]) < std::abs(lambda[best])) {
            best = i;
        }
    }
    return best;
}

AllocationEvent prune_rank(SvdAdapter& adapter)
{
    const std::size_t r = adapter.rank();
    if (r <= 1) {
        throw MinRankError("adapter '" + adapter.id() + "': cannot prune below rank 1");
    }
    const std::size_t index = smallest_direction(adapter.lambda());
    const double removed = std::abs(adapter.lambda()[index]);

    Matrix p = adapter.p();
    Matrix q = adapter.q();
    std::vector<double> lambda = adapter.lambda();
    p.erase_column(index);
    q.erase_row(index);
    lambda.erase(lambda.begin() + static_cast<std::ptrdiff_t>(index));
    adapter.set_factors(std::move(p), std::move(lambda), std::move(q));

    AllocationEvent event;
    event.adapter_id = adapter.id();
    event.action = AllocationAction::prune;
    event.rank_before = r;
    event.rank_after = r - 1;
    event.detail = format_double(removed);
    event.direction = index;
    return event;
}

AllocationEvent expand_rank(SvdAdapter& adapter, const InitStrategy& strategy, SeededRng& rng)
{
    strategy.validate();
    const std::size_t r = adapter.rank();
    if (r >= adapter.r_max()) {
        throw MaxRankError("adapter '" + adapter.id() + "': already at r_max " + std::to_string(adapter.r_max()));
    }

    std::vector<double> p_col;
    std::vector<double> q_row;
    double value = 0.0;
    switch (strategy.kind) {
    case InitKind::zero_impact:
        p_col = gaussian_vector(adapter.d_out(), adapter.vector_std(), rng);
        q_row = gaussian_vector(adapter.d_in(), adapter.vector_std(), rng);
        break;
    case InitKind::zero_init:
        p_col.assign(adapter.d_out(), 0.0);
        q_row.assign(adapter.d_in(), 0.0);
        break;
    case InitKind::small_init:
    case InitKind::orthogonal_init: {
        const auto p_seed = gaussian_vector(adapter.d_out(), 1.0, rng);
        const auto q_seed = gaussian_vector(adapter.d_in(), 1.0, rng);
        p_col = gram_schmidt_extend(adapter.p(), p_seed, rng);
        q_row = gram_schmidt_extend(adapter.q().transposed(), q_seed, rng);
        if (strategy.kind == InitKind::small_init) {
            value = strategy.small_value;
        }
        break;
    }
    }

    Matrix p = adapter.p();
    Matrix q = adapter.q();
    std::vector<double> lambda = adapter.lambda();
    p.append_column(p_col);
    q.append_row(q_row);
    lambda.push_back(value);
    adapter.set_factors(std::move(p), std::move(lambda), std::move(q));

    AllocationEvent event;
    event.adapter_id = adapter.id();
    event.action = AllocationAction::expand;
    event.rank_before = r;
    event.rank_after = r + 1;
    event.detail = std::string(to_string(strategy.kind));
    event.direction = r;
    return event;
}

} // namespace flexrank
