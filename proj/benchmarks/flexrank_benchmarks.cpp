// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "flexrank/adapter.hpp"
#include "flexrank/importance.hpp"
#include "flexrank/trainer.hpp"

namespace {

using namespace flexrank;

void BM_AdapterForward(benchmark::State& state)
{
    const auto d = static_cast<std::size_t>(state.range(0));
    SeededRng rng(1);
    SvdAdapter adapter("a", gaussian_matrix(d, d, 0.1, rng), AdapterOptions{8, 16, 16.0, 0.02}, rng);
    for (double& v : adapter.lambda_mut()) {
        v = rng.normal();
    }
    const Matrix x = gaussian_matrix(d, 32, 1.0, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(adapter, x));
    }
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_AdapterForward)->Arg(16)->Arg(64)->Arg(256);

void BM_SpectralEntropy(benchmark::State& state)
{
    SeededRng rng(2);
    const auto lambda = gaussian_vector(static_cast<std::size_t>(state.range(0)), 1.0, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(spectral_entropy(lambda));
    }
}
BENCHMARK(BM_SpectralEntropy)->Arg(8)->Arg(64)->Arg(512);

void BM_PruneExpand(benchmark::State& state)
{
    SeededRng rng(3);
    SvdAdapter adapter("a", gaussian_matrix(64, 64, 0.1, rng), AdapterOptions{8, 16, 16.0, 0.02}, rng);
    for (auto _ : state) {
        prune_rank(adapter);
        expand_rank(adapter, InitStrategy{}, rng);
    }
}
BENCHMARK(BM_PruneExpand);

void BM_TrainingRun(benchmark::State& state)
{
    TrainConfig c;
    c.seed = 1;
    c.topology.input_dim = 24;
    c.topology.layers = {LayerSpec{LayerSpec::Type::linear, 24, true, false, "high"},
                         LayerSpec{LayerSpec::Type::tanh, 0, false, false, ""},
                         LayerSpec{LayerSpec::Type::linear, 16, true, false, "low"}};
    c.adapter = AdapterOptions{7, 14, 14.0, 0.02};
    c.task.teacher_ranks = {12, 2};
    c.task.noise_std = 0.1;
    c.task.train_samples = 128;
    c.optimizer.lr = 0.01;
    c.schedule = BudgetSchedule{2, 50, 50, state.range(0), 25};
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_training(c).final_eval_loss);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainingRun)->Arg(500)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
