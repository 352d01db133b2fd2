// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexrank/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "flexrank/errors.hpp"

namespace flexrank {

void BudgetSchedule::validate() const
{
    if (b0 < 1) {
        throw ParameterError("schedule: b0 must be at least 1");
    }
    if (delta_t < 1) {
        throw ParameterError("schedule: delta_t must be at least 1");
    }
    if (t_warmup < 0 || t_final < 0 || total_steps < 1) {
        throw ParameterError("schedule: step counts must be non-negative and total_steps positive");
    }
    if (t_warmup + t_final >= total_steps) {
        throw ParameterError("schedule: t_warmup + t_final must be less than total_steps");
    }
}

std::int64_t budget(const BudgetSchedule& schedule, std::int64_t t)
{
    const std::int64_t window_end = schedule.total_steps - schedule.t_final;
    if (t < schedule.t_warmup || t >= window_end) {
        return 0;
    }
    const double fraction =
        static_cast<double>(t - schedule.t_warmup) / static_cast<double>(window_end);
    const double remaining = std::max(0.0, 1.0 - fraction);
    const double raw = static_cast<double>(schedule.b0) * remaining * remaining * remaining;
    // std::round rounds halfway cases away from zero.
    const auto rounded = static_cast<std::int64_t>(std::round(raw));
    return std::clamp<std::int64_t>(rounded, 0, schedule.b0);
}

bool is_allocation_step(const BudgetSchedule& schedule, std::int64_t t)
{
    return t >= schedule.t_warmup && t < schedule.total_steps - schedule.t_final &&
           (t - schedule.t_warmup) % schedule.delta_t == 0;
}

std::string_view to_string(AllocatorMode mode)
{
    switch (mode) {
    case AllocatorMode::bidirectional: return "bidirectional";
    case AllocatorMode::prune_only: return "prune_only";
    case AllocatorMode::expand_only: return "expand_only";
    }
    return "unknown";
}

AllocatorMode allocator_mode_from_string(std::string_view name)
{
    for (auto mode : {AllocatorMode::bidirectional, AllocatorMode::prune_only, AllocatorMode::expand_only}) {
        if (to_string(mode) == name) {
            return mode;
        }
    }
    throw ParameterError("unknown allocator mode '" + std::string(name) + "'");
}

Selection select_candidates(const ImportanceReport& report, std::span<const SvdAdapter* const> adapters,
                            std::int64_t b, AllocatorMode mode)
{
    if (b < 0) {
        throw ParameterError("select_candidates: negative budget");
    }
    std::vector<Candidate> all;
    std::vector<std::size_t> r_max;
    all.reserve(adapters.size());
    for (const SvdAdapter* adapter : adapters) {
        auto it = report.scores.find(adapter->id());
        if (it == report.scores.end()) {
            throw ConfigError("select_candidates: no score for adapter '" + adapter->id() + "'");
        }
        all.push_back({adapter->id(), it->second, adapter->rank(), adapter->version()});
        r_max.push_back(adapter->r_max());
    }

    std::vector<std::size_t> order(all.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    // Ascending score, then id.
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
        if (all[a].score != all[c].score) {
            return all[a].score < all[c].score;
        }
        return all[a].adapter_id < all[c].adapter_id;
    });

    const auto limit = static_cast<std::size_t>(b);
    Selection selection;
    std::set<std::string> expanding;
    if (mode != AllocatorMode::prune_only) {
        // Descending score, ties still by ascending id.
        std::vector<std::size_t> desc = order;
        std::stable_sort(desc.begin(), desc.end(),
                         [&](std::size_t a, std::size_t c) { return all[a].score > all[c].score; });
        for (std::size_t i : desc) {
            if (selection.expand.size() >= limit) {
                break;
            }
            if (all[i].rank < r_max[i]) {
                selection.expand.push_back(all[i]);
                expanding.insert(all[i].adapter_id);
            }
        }
    }
    if (mode != AllocatorMode::expand_only) {
        for (std::size_t i : order) {
            if (selection.prune.size() >= limit) {
                break;
            }
            if (all[i].rank > 1 && !expanding.contains(all[i].adapter_id)) {
                selection.prune.push_back(all[i]);
            }
        }
    }
    if (mode == AllocatorMode::bidirectional) {
        const std::size_t k = std::min(selection.prune.size(), selection.expand.size());
        selection.prune.resize(k);
        selection.expand.resize(k);
    }

    auto by_id = [](const Candidate& a, const Candidate& c) { return a.adapter_id < c.adapter_id; };
    std::sort(selection.prune.begin(), selection.prune.end(), by_id);
    std::sort(selection.expand.begin(), selection.expand.end(), by_id);
    return selection;
}

namespace {

SvdAdapter& locate(std::span<SvdAdapter* const> adapters, const Candidate& candidate)
{
    for (SvdAdapter* adapter : adapters) {
        if (adapter->id() == candidate.adapter_id) {
            if (adapter->version() != candidate.version || adapter->rank() != candidate.rank) {
                throw StalenessError("adapter '" + candidate.adapter_id + "' changed after selection");
            }
            return *adapter;
        }
    }
    throw StalenessError("adapter '" + candidate.adapter_id + "' is no longer registered");
}

} // namespace

std::vector<AllocationEvent> apply_prunes(std::span<SvdAdapter* const> adapters, const Selection& selection,
                                          std::int64_t step)
{
    // Validate the whole list before mutating anything.
    for (const auto& c : selection.prune) {
        locate(adapters, c);
    }
    std::vector<AllocationEvent> events;
    for (const auto& c : selection.prune) {
        AllocationEvent event = prune_rank(locate(adapters, c));
        event.step = step;
        event.score = c.score;
        events.push_back(std::move(event));
    }
    return events;
}

std::vector<AllocationEvent> apply_expansions(std::span<SvdAdapter* const> adapters, const Selection& selection,
                                              const InitStrategy& strategy, SeededRng& rng, std::int64_t step)
{
    for (const auto& c : selection.expand) {
        locate(adapters, c);
    }
    std::vector<AllocationEvent> events;
    for (const auto& c : selection.expand) {
        AllocationEvent event = expand_rank(locate(adapters, c), strategy, rng);
        event.step = step;
        event.score = c.score;
        events.push_back(std::move(event));
    }
    return events;
}

std::vector<AllocationEvent> apply_allocation(std::span<SvdAdapter* const> adapters, const Selection& selection,
                                              const InitStrategy& strategy, SeededRng& rng, std::int64_t step)
{
    for (const auto& c : selection.expand) {
        locate(adapters, c);
    }
    auto events = apply_prunes(adapters, selection, step);
    auto grown = apply_expansions(adapters, selection, strategy, rng, step);
    events.insert(events.end(), std::make_move_iterator(grown.begin()), std::make_move_iterator(grown.end()));
    return events;
}

} // namespace flexrank
