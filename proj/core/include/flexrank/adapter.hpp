// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flexrank/matrix.hpp"
#include "flexrank/rng.hpp"

namespace flexrank {

enum class InitKind { zero_impact, small_init, zero_init, orthogonal_init };

/// How a newly added singular direction is initialized.
struct InitStrategy {
    InitKind kind = InitKind::zero_impact;
    double small_value = 1e-4;

    void validate() const;
};

std::string_view to_string(InitKind kind);
InitKind init_kind_from_string(std::string_view name);

enum class AllocationAction { prune, expand };

std::string_view to_string(AllocationAction action);
AllocationAction allocation_action_from_string(std::string_view name);

/// One rank change applied to one adapter.
struct AllocationEvent {
    std::int64_t step = 0;
    std::string adapter_id;
    AllocationAction action = AllocationAction::prune;
    std::size_t rank_before = 0;
    std::size_t rank_after = 0;
    double score = 0.0;
    /// Removed |lambda| for a prune, init strategy name for an expansion.
    std::string detail;
    /// Index of the removed or appended direction.
    std::size_t direction = 0;

    friend bool operator==(const AllocationEvent&, const AllocationEvent&) = default;
};

struct AdapterOptions {
    std::size_t r_init = 8;
    std::size_t r_max = 16;
    double alpha = 16.0;
    /// Standard deviation of Gaussian singular vectors (construction and zero-impact growth).
    double vector_std = 0.02;
};

struct RegularizerGrad {
    Matrix grad_p;
    Matrix grad_q;
};

/// Low-rank update in SVD form, delta_W = P diag(lambda) Q, on a frozen base weight.
///
/// The effective weight is base_w + (alpha / r_init) * P diag(lambda) Q. The
/// scale is fixed at construction so rank changes never rescale the
/// directions that survive them. Lambda entries are unconstrained reals;
/// ranking and pruning look only at their magnitudes.
class SvdAdapter {
public:
    /// Starts with lambda = 0 and Gaussian P and Q, so the update is zero.
    SvdAdapter(std::string id, Matrix base_w, const AdapterOptions& options, SeededRng& rng);

    /// Explicit factors, used by checkpoint loading and tests.
    SvdAdapter(std::string id, Matrix base_w, Matrix p, std::vector<double> lambda, Matrix q,
               std::size_t r_init, std::size_t r_max, double alpha, double vector_std = 0.02);

    const std::string& id() const { return id_; }
    std::size_t d_out() const { return base_w_.rows(); }
    std::size_t d_in() const { return base_w_.cols(); }
    std::size_t rank() const { return lambda_.size(); }
    std::size_t r_init() const { return r_init_; }
    std::size_t r_max() const { return r_max_; }
    double alpha() const { return alpha_; }
    double scale() const { return alpha_ / static_cast<double>(r_init_); }
    double vector_std() const { return vector_std_; }

    const Matrix& base_w() const { return base_w_; }
    const Matrix& p() const { return p_; }
    const std::vector<double>& lambda() const { return lambda_; }
    const Matrix& q() const { return q_; }

    /// Mutable access to trainables; each call counts as a mutation.
    Matrix& p_mut() { ++version_; return p_; }
    std::span<double> lambda_mut() { ++version_; return lambda_; }
    Matrix& q_mut() { ++version_; return q_; }

    /// Replaces all factors at once; the new rank must lie in [1, r_max].
    void set_factors(Matrix p, std::vector<double> lambda, Matrix q);

    /// Incremented on every mutation; used to detect stale snapshots.
    std::uint64_t version() const { return version_; }

    /// Trainable parameter count r * (d_out + d_in + 1).
    std::size_t parameter_count() const { return rank() * (d_out() + d_in() + 1); }

    /// The update P diag(lambda) Q scaled by alpha / r_init, materialized.
    Matrix delta() const;

private:
    void check_structure() const;

    std::string id_;
    Matrix base_w_;
    Matrix p_;
    std::vector<double> lambda_;
    Matrix q_;
    std::size_t r_init_;
    std::size_t r_max_;
    double alpha_;
    double vector_std_;
    std::uint64_t version_ = 0;
};

/// Intermediate values of the adapter path for one batch.
struct AdapterActivations {
    Matrix qx;      ///< Q x            (r x batch)
    Matrix scaled;  ///< diag(lambda) Q x
};

/// base_w x + (alpha / r_init) P (diag(lambda) (Q x)). x is d_in x batch.
Matrix forward(const SvdAdapter& adapter, const Matrix& x);
Matrix forward(const SvdAdapter& adapter, const Matrix& x, AdapterActivations* activations);

/// ||P^T P - I||_F^2 + ||Q Q^T - I||_F^2
double ortho_regularizer(const SvdAdapter& adapter);

/// grad_p = 4 P (P^T P - I), grad_q = 4 (Q Q^T - I) Q
RegularizerGrad ortho_regularizer_grad(const SvdAdapter& adapter);

/// Index of the smallest |lambda_i|, lowest index on ties.
std::size_t smallest_direction(std::span<const double> lambda);

/// Removes the direction with the smallest |lambda_i|. Event step and score are left at 0.
AllocationEvent prune_rank(SvdAdapter& adapter);

/// Appends one direction initialized per `strategy`.
AllocationEvent expand_rank(SvdAdapter& adapter, const InitStrategy& strategy, SeededRng& rng);

} // namespace flexrank
