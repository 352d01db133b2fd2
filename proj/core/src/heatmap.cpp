// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexrank/heatmap.hpp"

#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "flexrank/errors.hpp"

namespace flexrank {

namespace {

std::size_t line_of(const Trace& trace, std::size_t event_index)
{
    // Header is line 1, so an unread trace still gets plausible numbers.
    return event_index < trace.event_lines.size() ? trace.event_lines[event_index] : event_index + 2;
}

std::map<std::string, std::size_t> index_adapters(const Trace& trace)
{
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < trace.header.adapters.size(); ++i) {
        if (!index.emplace(trace.header.adapters[i].id, i).second) {
            throw ReplayError("trace header: duplicate adapter id '" + trace.header.adapters[i].id + "'");
        }
    }
    return index;
}

} // namespace

HeatmapTable build_heatmap(const Trace& trace)
{
    const auto index = index_adapters(trace);
    HeatmapTable table;
    std::vector<std::size_t> ranks;
    for (const auto& a : trace.header.adapters) {
        table.adapter_ids.push_back(a.id);
        ranks.push_back(a.r_init);
    }
    table.cells.resize(ranks.size());
    auto push_column = [&](std::string label) {
        table.column_labels.push_back(std::move(label));
        for (std::size_t i = 0; i < ranks.size(); ++i) {
            table.cells[i].push_back(ranks[i]);
        }
    };
    push_column("init");

    for (std::size_t k = 0; k < trace.events.size(); ++k) {
        const AllocationEvent& e = trace.events[k];
        const std::size_t line = line_of(trace, k);
        auto it = index.find(e.adapter_id);
        if (it == index.end()) {
            throw ReplayError("trace line " + std::to_string(line) + ": unknown adapter '" + e.adapter_id + "'");
        }
        std::size_t& rank = ranks[it->second];
        if (e.rank_before != rank) {
            throw ReplayError("trace line " + std::to_string(line) + ": event says rank " +
                              std::to_string(e.rank_before) + ", replay has " + std::to_string(rank));
        }
        const std::size_t expected = e.action == AllocationAction::prune ? rank - 1 : rank + 1;
        if (e.rank_after != expected) {
            throw ReplayError("trace line " + std::to_string(line) + ": " + std::string(to_string(e.action)) +
                              " must change the rank by one");
        }
        rank = e.rank_after;
        const bool last_of_step = k + 1 == trace.events.size() || trace.events[k + 1].step != e.step;
        if (last_of_step) {
            push_column(std::to_string(e.step));
        }
    }
    return table;
}

void write_heatmap_csv(std::ostream& out, const HeatmapTable& table)
{
    out << "adapter";
    for (const auto& label : table.column_labels) {
        out << ',' << label;
    }
    out << '\n';
    for (std::size_t i = 0; i < table.adapter_ids.size(); ++i) {
        out << table.adapter_ids[i];
        for (std::size_t cell : table.cells[i]) {
            out << ',' << cell;
        }
        out << '\n';
    }
}

std::string heatmap_to_csv(const HeatmapTable& table)
{
    std::ostringstream out;
    write_heatmap_csv(out, table);
    return out.str();
}

VerifyReport verify_trace(const Trace& trace)
{
    VerifyReport report;
    std::map<std::string, std::size_t> index;
    try {
        index = index_adapters(trace);
    } catch (const ReplayError& e) {
        report.problems.emplace_back(e.what());
        return report;
    }
    std::vector<std::size_t> ranks;
    for (const auto& a : trace.header.adapters) {
        if (a.r_init < 1 || a.r_init > a.r_max) {
            report.problems.push_back("adapter '" + a.id + "': r_init outside [1, r_max]");
        }
        ranks.push_back(a.r_init);
    }
    auto rank_sum = [&] {
        std::size_t s = 0;
        for (auto r : ranks) {
            s += r;
        }
        return s;
    };

    std::size_t k = 0;
    while (k < trace.events.size()) {
        const std::int64_t step = trace.events[k].step;
        const std::size_t sum_before = rank_sum();
        std::set<std::string> touched;
        for (; k < trace.events.size() && trace.events[k].step == step; ++k) {
            const AllocationEvent& e = trace.events[k];
            const std::string where = "line " + std::to_string(line_of(trace, k)) + ": ";
            auto it = index.find(e.adapter_id);
            if (it == index.end()) {
                report.problems.push_back(where + "unknown adapter '" + e.adapter_id + "'");
                continue;
            }
            if (!touched.insert(e.adapter_id).second) {
                report.problems.push_back(where + "adapter '" + e.adapter_id + "' changed twice in step " +
                                          std::to_string(step));
            }
            const AdapterInfo& info = trace.header.adapters[it->second];
            std::size_t& rank = ranks[it->second];
            if (e.rank_before != rank) {
                report.problems.push_back(where + "rank_before " + std::to_string(e.rank_before) +
                                          " but replay has " + std::to_string(rank));
            }
            const bool prune = e.action == AllocationAction::prune;
            if (e.rank_after + (prune ? 1 : 0) != e.rank_before + (prune ? 0 : 1)) {
                report.problems.push_back(where + "event does not change the rank by exactly one");
            }
            if (e.rank_after < 1 || e.rank_after > info.r_max) {
                report.problems.push_back(where + "rank " + std::to_string(e.rank_after) + " outside [1, " +
                                          std::to_string(info.r_max) + "]");
            }
            if (prune && trace.header.mode == AllocatorMode::expand_only) {
                report.problems.push_back(where + "prune event in expand_only mode");
            }
            if (!prune && trace.header.mode == AllocatorMode::prune_only) {
                report.problems.push_back(where + "expand event in prune_only mode");
            }
            rank = e.rank_after;
        }
        if (k < trace.events.size() && trace.events[k].step < step) {
            report.problems.push_back("line " + std::to_string(line_of(trace, k)) + ": step goes backwards");
        }
        const std::size_t sum_after = rank_sum();
        if (trace.header.mode == AllocatorMode::bidirectional && sum_after != sum_before) {
            report.problems.push_back("step " + std::to_string(step) + ": total rank changed from " +
                                      std::to_string(sum_before) + " to " + std::to_string(sum_after));
        }
    }
    if (trace.summary && !trace.summary->final_ranks.empty() && trace.summary->final_ranks != ranks) {
        report.problems.emplace_back("summary final_ranks differ from the replayed ranks");
    }
    report.final_ranks = std::move(ranks);
    return report;
}

} // namespace flexrank
