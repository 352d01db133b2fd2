// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: train, importance, schedule, export-heatmap,
// replay-verify.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flexrank/commands.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Adaptive-rank SVD adapter experiments"};
    app.require_subcommand(1);

    // train
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    std::string out_dir;
    auto* train = app.add_subcommand("train", "Run one experiment from a JSON config");
    train->add_option("config", config_path, "Experiment config (JSON)")->required();
    train->add_option("--set", overrides, "Dotted override, e.g. schedule.b0=2 (repeatable)");
    auto* seed_opt = train->add_option("--seed", seed, "Override the config seed");
    auto* out_opt = train->add_option("--out", out_dir, "Output directory (overrides $FLEXRANK_OUTPUT_DIR)");

    // importance
    std::string spectrum_path;
    double epsilon = 1e-12;
    auto* importance = app.add_subcommand("importance", "Score a single-row CSV of singular values");
    importance->add_option("spectrum", spectrum_path, "Spectrum CSV")->required();
    importance->add_option("--epsilon", epsilon, "Log guard")->capture_default_str();

    // schedule
    flexrank::BudgetSchedule schedule;
    auto* sched = app.add_subcommand("schedule", "Print the rank budget at each allocation step");
    sched->add_option("--b0", schedule.b0, "Initial budget")->capture_default_str();
    sched->add_option("--t-warmup", schedule.t_warmup, "Warmup steps")->required();
    sched->add_option("--t-final", schedule.t_final, "Final fixed-rank steps")->required();
    sched->add_option("--total-steps", schedule.total_steps, "Total steps T")->required();
    sched->add_option("--delta-t", schedule.delta_t, "Allocation interval")->required();

    // export-heatmap
    std::string trace_path;
    std::string heatmap_out;
    auto* heatmap = app.add_subcommand("export-heatmap", "Replay a trace into a rank heatmap CSV");
    heatmap->add_option("trace", trace_path, "Trace (JSONL)")->required();
    heatmap->add_option("-o,--output", heatmap_out, "Write CSV here instead of stdout");

    // replay-verify
    std::string verify_trace_path;
    std::string checkpoint_path;
    auto* verify = app.add_subcommand("replay-verify", "Re-check every trace invariant");
    verify->add_option("trace", verify_trace_path, "Trace (JSONL)")->required();
    verify->add_option("--checkpoint", checkpoint_path, "Also compare final ranks with this checkpoint");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : flexrank::kExitConfigError;
    }

    if (*train) {
        flexrank::TrainOptions options;
        options.overrides = overrides;
        if (*seed_opt) {
            options.seed = seed;
        }
        if (*out_opt) {
            options.output_dir = out_dir;
        }
        return flexrank::cmd_train(config_path, options, std::cout, std::cerr);
    }
    if (*importance) {
        return flexrank::cmd_importance(spectrum_path, epsilon, std::cout, std::cerr);
    }
    if (*sched) {
        return flexrank::cmd_schedule(schedule, std::cout, std::cerr);
    }
    if (*heatmap) {
        return flexrank::cmd_export_heatmap(trace_path, heatmap_out, std::cout, std::cerr);
    }
    return flexrank::cmd_replay_verify(verify_trace_path, checkpoint_path, std::cout, std::cerr);
}
