// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flexrank/adapter.hpp"
#include "flexrank/importance.hpp"
#include "flexrank/rng.hpp"

namespace flexrank {

/// Cubic decay of the per-step rank budget:
///
///   b(t) = round(b0 * (1 - (t - t_warmup) / (T - t_final))^3)
///
/// inside the active window [t_warmup, T - t_final), zero outside it, clamped
/// to [0, b0]. Rounding is half away from zero.
struct BudgetSchedule {
    std::int64_t b0 = 4;
    std::int64_t t_warmup = 0;
    std::int64_t t_final = 0;
    std::int64_t total_steps = 1;
    std::int64_t delta_t = 1;

    /// Throws ParameterError unless b0 >= 1, delta_t >= 1, and t_warmup + t_final < T.
    void validate() const;
};

std::int64_t budget(const BudgetSchedule& schedule, std::int64_t t);

bool is_allocation_step(const BudgetSchedule& schedule, std::int64_t t);

enum class AllocatorMode { bidirectional, prune_only, expand_only };

std::string_view to_string(AllocatorMode mode);
AllocatorMode allocator_mode_from_string(std::string_view name);

/// A selected adapter together with the state it was selected against.
struct Candidate {
    std::string adapter_id;
    double score = 0.0;
    std::size_t rank = 0;
    std::uint64_t version = 0;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct Selection {
    std::vector<Candidate> prune;   ///< sorted by adapter id
    std::vector<Candidate> expand;  ///< sorted by adapter id

    bool empty() const { return prune.empty() && expand.empty(); }
};

/// Picks up to b lowest-scoring adapters with rank > 1 for pruning and up to b
/// highest-scoring adapters below r_max for expansion. An adapter eligible for
/// both goes to the expand side. Bidirectional mode truncates both lists to
/// the shorter length so the total rank is conserved. Score ties break by id.
Selection select_candidates(const ImportanceReport& report, std::span<const SvdAdapter* const> adapters,
                            std::int64_t b, AllocatorMode mode);

/// Prunes every adapter in `selection.prune`. Throws StalenessError if an
/// adapter changed since selection.
std::vector<AllocationEvent> apply_prunes(std::span<SvdAdapter* const> adapters, const Selection& selection,
                                          std::int64_t step);

/// Expands every adapter in `selection.expand`.
std::vector<AllocationEvent> apply_expansions(std::span<SvdAdapter* const> adapters, const Selection& selection,
                                              const InitStrategy& strategy, SeededRng& rng, std::int64_t step);

/// Prunes first, then expands; events come back in that order, each sorted by id.
std::vector<AllocationEvent> apply_allocation(std::span<SvdAdapter* const> adapters, const Selection& selection,
                                              const InitStrategy& strategy, SeededRng& rng, std::int64_t step);

} // namespace flexrank
