// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails (including a blown runtime budget).
//
// usage: flexrank_acceptance <work-dir> <teacher-config.json>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "flexrank/adapter.hpp"
#include "flexrank/allocator.hpp"
#include "flexrank/commands.hpp"
#include "flexrank/errors.hpp"
#include "flexrank/importance.hpp"
#include "support/models.hpp"
#include "support/oracles.hpp"
#include "support/replayer.hpp"

using namespace flexrank;
using flexrank::testing::Gen;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why)
    {
        if (pass) {
            detail = why;
        }
        pass = false;
    }
};

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

using V = std::vector<double>;

// 1. Entropy normalization.
Outcome entropy_normalization()
{
    Outcome o;
    Gen g(101);
    double worst = 0.0;
    for (std::size_t r : {2u, 4u, 8u, 16u, 64u}) {
        const double uniform = spectral_entropy(V(r, 1.0), 1e-12);
        if (std::abs(uniform - 1.0) > 1e-9) {
            o.fail("uniform r=" + std::to_string(r) + " scored " + fmt(uniform));
        }
        V spike(r, 0.0);
        spike[0] = 1.0;
        const double s = spectral_entropy(spike, 1e-12);
        if (s > 1e-6) {
            o.fail("spike r=" + std::to_string(r) + " scored " + fmt(s));
        }
        for (int i = 0; i < 1000; ++i) {
            const double h = spectral_entropy(g.spectrum(r), 1e-12);
            worst = std::max(worst, h);
            if (h > 1.0 + 1e-9) {
                o.fail("random spectrum scored " + fmt(h));
            }
        }
    }
    if (o.pass) {
        o.detail = "max random score " + fmt(worst);
    }
    return o;
}

// 2. Oracle equivalence.
Outcome oracle_equivalence()
{
    Outcome o;
    Gen g(102);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const V lambda = g.spectrum(g.index(1, 64));
        const auto w = testing::wide_metrics(lambda, 1e-12);
        const double diffs[] = {std::abs(spectral_entropy(lambda, 1e-12) - w.spectral_entropy),
                                std::abs(nuclear_importance(lambda) - w.nuclear),
                                std::abs(frobenius_importance(lambda) - w.frobenius),
                                std::abs(elem_energy_entropy(lambda, 1e-12) - w.elem_energy_entropy),
                                std::abs(mat_energy_entropy(lambda, 1e-12) - w.mat_energy_entropy)};
        for (double d : diffs) {
            worst = std::max(worst, d);
        }
    }
    if (worst > 1e-10) {
        o.fail("max abs diff " + fmt(worst));
    } else {
        o.detail = "max abs diff " + fmt(worst);
    }
    return o;
}

// 3. Share ordering follows lambda^2 ordering.
Outcome monotonicity()
{
    Outcome o;
    Gen g(103);
    int done = 0;
    while (done < 1000) {
        const V lambda = g.vector(g.index(2, 32));
        V sq(lambda.size());
        std::transform(lambda.begin(), lambda.end(), sq.begin(), [](double v) { return v * v; });
        V sorted = sq;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            continue;  // ties excluded
        }
        ++done;
        const V s = *energy_distribution(lambda);
        const auto min_s = std::min_element(s.begin(), s.end()) - s.begin();
        const auto min_l = std::min_element(sq.begin(), sq.end()) - sq.begin();
        if (min_s != min_l) {
            o.fail("argmin mismatch");
        }
        std::vector<std::size_t> by_s(s.size()), by_l(s.size());
        std::iota(by_s.begin(), by_s.end(), 0);
        std::iota(by_l.begin(), by_l.end(), 0);
        std::sort(by_s.begin(), by_s.end(), [&](auto a, auto b) { return s[a] < s[b]; });
        std::sort(by_l.begin(), by_l.end(), [&](auto a, auto b) { return sq[a] < sq[b]; });
        if (by_s != by_l) {
            o.fail("ordering mismatch");
        }
    }
    o.detail = o.pass ? "1000 tie-free spectra" : o.detail;
    return o;
}

// 4. Zero-impact expansion leaves outputs bitwise unchanged.
Outcome zero_impact()
{
    Outcome o;
    Gen g(104);
    SeededRng rng(104);
    std::size_t expanded = 0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t d_out = g.index(1, 16), d_in = g.index(1, 16);
        const std::size_t r_max = g.index(2, std::min<std::size_t>(8, std::max(d_out, d_in) + 1));
        const std::size_t r = g.index(1, r_max - 1);
        SvdAdapter a("a", g.matrix(d_out, d_in), g.matrix(d_out, r), g.vector(r), g.matrix(r, d_in), r, r_max,
                     g.uniform(0.5, 8.0));
        std::vector<Matrix> inputs, before;
        for (int k = 0; k < 100; ++k) {
            inputs.push_back(g.matrix(d_in, g.index(1, 4)));
            before.push_back(forward(a, inputs.back()));
        }
        try {
            expand_rank(a, InitStrategy{InitKind::zero_impact}, rng);
        } catch (const RankFullError&) {
            continue;  // no orthogonal direction left in a tiny layer
        }
        ++expanded;
        for (int k = 0; k < 100; ++k) {
            if (!(forward(a, inputs[k]) == before[k])) {
                o.fail("adapter " + std::to_string(i) + " input " + std::to_string(k) + " changed");
            }
        }
    }
    if (expanded < 90) {
        o.fail("only " + std::to_string(expanded) + " adapters could expand");
    }
    if (o.pass) {
        o.detail = std::to_string(expanded) + " adapters x 100 inputs bitwise equal";
    }
    return o;
}

// 5. Gradients against central differences.
Outcome gradients()
{
    Outcome o;
    Gen g(105);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        auto c = testing::random_model(g);
        worst = std::max(worst, testing::check_gradients(c.model, c.x, c.targets, 0.1).worst_relative);
    }
    if (worst > 1e-5) {
        o.fail("worst relative error " + fmt(worst));
    } else {
        o.detail = "worst relative error " + fmt(worst);
    }
    return o;
}

// 6. Budget schedule conformance.
Outcome schedule()
{
    Outcome o;
    const BudgetSchedule schedules[] = {
        {4, 1000, 1000, 10000, 200},  // the published setting
        {4, 0, 0, 200, 10},
        {12, 50, 30, 430, 7},
    };
    for (const auto& s : schedules) {
        const std::int64_t end = s.total_steps - s.t_final;
        if (budget(s, s.t_warmup) != s.b0) {
            o.fail("b(t_warmup) != b0");
        }
        std::int64_t prev = s.b0;
        for (std::int64_t t = -10; t < s.total_steps + 10; ++t) {
            const std::int64_t b = budget(s, t);
            if (t < s.t_warmup || t >= end) {
                if (b != 0) {
                    o.fail("nonzero outside window at t=" + std::to_string(t));
                }
                continue;
            }
            if (b > prev || b < 0 || b > s.b0) {
                o.fail("not non-increasing at t=" + std::to_string(t));
            }
            prev = b;
        }
    }
    // Exact half: fraction 1/2 gives b0 / 8 before rounding.
    if (budget(schedules[0], 5500) != 1) {  // 4/8 = 0.5 -> 1
        o.fail("round(0.5) != 1");
    }
    if (budget(schedules[1], 100) != 1) {
        o.fail("round(0.5) != 1 on second schedule");
    }
    if (budget(BudgetSchedule{12, 0, 0, 200, 1}, 100) != 2) {  // 12/8 = 1.5 -> 2
        o.fail("round(1.5) != 2");
    }
    if (o.pass) {
        o.detail = "3 schedules exhaustive, half cases round away from zero";
    }
    return o;
}

// 7. Fuzzed allocation keeps the rank budget.
Outcome conservation()
{
    Outcome o;
    Gen g(107);
    SeededRng rng(107);
    const AllocatorMode modes[] = {AllocatorMode::bidirectional, AllocatorMode::prune_only, AllocatorMode::expand_only};
    for (AllocatorMode mode : modes) {
        int steps = 0;
        while (steps < 10000) {
            const std::size_t n = g.index(2, 6);
            std::vector<SvdAdapter> adapters;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t r_max = g.index(1, 8);
                const std::size_t r = g.index(1, r_max);
                adapters.emplace_back("a" + std::to_string(i), Matrix(10, 10), g.matrix(10, r), g.vector(r),
                                      g.matrix(r, 10), g.index(1, r_max), r_max, 1.0);
            }
            for (int round = 0; round < 100 && steps < 10000; ++round, ++steps) {
                std::vector<const SvdAdapter*> view;
                std::vector<SvdAdapter*> mut;
                std::size_t before = 0;
                for (auto& a : adapters) {
                    view.push_back(&a);
                    mut.push_back(&a);
                    before += a.rank();
                    for (double& v : a.lambda_mut()) {
                        v += g.normal() * 0.1;
                    }
                }
                const auto report = score_all(view, MetricKind{}, {}, steps);
                const auto sel = select_candidates(report, view, static_cast<std::int64_t>(g.index(0, 4)), mode);
                apply_allocation(mut, sel, InitStrategy{}, rng, steps);
                std::size_t after = 0;
                for (const auto& a : adapters) {
                    after += a.rank();
                    if (a.rank() < 1 || a.rank() > a.r_max()) {
                        o.fail("rank out of bounds");
                    }
                }
                if ((mode == AllocatorMode::bidirectional && after != before) ||
                    (mode == AllocatorMode::prune_only && after > before) ||
                    (mode == AllocatorMode::expand_only && after < before)) {
                    o.fail(std::string(to_string(mode)) + " rank sum rule broken");
                }
            }
        }
    }
    if (o.pass) {
        o.detail = "10000 steps per mode";
    }
    return o;
}

struct RunOutput {
    int code = 0;
    std::string stdout_text;
    fs::path dir;
};

RunOutput train(const std::string& config, const fs::path& dir, std::vector<std::string> overrides)
{
    fs::remove_all(dir);
    TrainOptions opts;
    opts.overrides = std::move(overrides);
    opts.output_dir = dir.string();
    opts.use_environment = false;
    std::ostringstream out, err;
    RunOutput r;
    r.code = cmd_train(config, opts, out, err);
    r.stdout_text = out.str() + err.str();
    r.dir = dir;
    return r;
}

double printed_value(const std::string& text, const std::string& key)
{
    const auto pos = text.find(key + "=");
    if (pos == std::string::npos) {
        throw Error("missing " + key + " in command output");
    }
    return std::stod(text.substr(pos + key.size() + 1));
}

// 8. Byte-identical reruns.
Outcome determinism(const std::string& config, const fs::path& work)
{
    Outcome o;
    const auto a = train(config, work / "determinism_a", {"seed=7"});
    const auto b = train(config, work / "determinism_b", {"seed=7"});
    if (a.code != 0 || b.code != 0) {
        o.fail("train failed: " + a.stdout_text + b.stdout_text);
        return o;
    }
    // The effective config records each run's own output directory, so it is not compared.
    for (const char* f : {"trace.jsonl", "metrics.csv", "checkpoint.txt"}) {
        if (testing::slurp((a.dir / f).string()) != testing::slurp((b.dir / f).string())) {
            o.fail(std::string(f) + " differs");
        }
    }
    if (o.pass) {
        o.detail = "trace, metrics, checkpoint identical";
    }
    return o;
}

// 9. Rank moves toward the high-rank teacher layer; bidirectional wins on loss.
Outcome behavior(const std::string& config, const fs::path& work)
{
    Outcome o;
    std::map<std::string, std::vector<double>> losses;
    int high_wins = 0;
    std::string ranks;
    for (const char* mode : {"bidirectional", "prune_only", "expand_only"}) {
        for (int seed = 1; seed <= 5; ++seed) {
            const auto r = train(config, work / ("behavior_" + std::string(mode) + "_" + std::to_string(seed)),
                                 {std::string("mode=\"") + mode + "\"", "seed=" + std::to_string(seed)});
            if (r.code != 0) {
                o.fail(std::string(mode) + " seed " + std::to_string(seed) + " exited " + std::to_string(r.code));
                continue;
            }
            losses[mode].push_back(printed_value(r.stdout_text, "final_eval_loss"));
            if (std::string(mode) == "bidirectional") {
                const auto ck = testing::checkpoint_ranks(testing::slurp((r.dir / "checkpoint.txt").string()));
                high_wins += ck.at("high") > ck.at("low") ? 1 : 0;
                ranks += std::to_string(ck.at("high")) + "/" + std::to_string(ck.at("low")) + " ";
            }
        }
    }
    if (!o.pass) {
        return o;
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    const double bi = median(losses["bidirectional"]);
    const double po = median(losses["prune_only"]);
    const double eo = median(losses["expand_only"]);
    o.detail = "high>low in " + std::to_string(high_wins) + "/5 (" + ranks + "), median loss bi " + fmt(bi) +
               " prune " + fmt(po) + " expand " + fmt(eo);
    if (high_wins < 4 || bi > po || bi > eo) {
        o.pass = false;
    }
    return o;
}

// 10. Heatmap export equals an independent replay of every run in the work dir.
Outcome heatmap_integrity(const fs::path& work)
{
    Outcome o;
    std::size_t traces = 0;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(work)) {
        if (fs::exists(entry.path() / "trace.jsonl")) {
            dirs.push_back(entry.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        ++traces;
        const std::string name = dir.filename().string();
        std::ostringstream out, err;
        if (cmd_export_heatmap((dir / "trace.jsonl").string(), "", out, err) != 0) {
            o.fail(name + ": export failed: " + err.str());
            continue;
        }
        const auto rows = testing::csv_cells(out.str());
        const auto replay = testing::replay_trace_text(testing::slurp((dir / "trace.jsonl").string()));
        std::vector<std::vector<std::string>> expected;
        std::vector<std::string> head{"adapter", "init"};
        for (const auto& [step, ranks] : replay.after_step) {
            head.push_back(std::to_string(step));
        }
        expected.push_back(head);
        for (std::size_t k = 0; k < replay.ids.size(); ++k) {
            std::vector<std::string> row{replay.ids[k], std::to_string(replay.init[k])};
            for (const auto& [step, ranks] : replay.after_step) {
                row.push_back(std::to_string(ranks[k]));
            }
            expected.push_back(row);
        }
        if (rows != expected) {
            o.fail(name + ": heatmap differs from replay");
            continue;
        }
        const auto ck = testing::checkpoint_ranks(testing::slurp((dir / "checkpoint.txt").string()));
        for (std::size_t k = 0; k < replay.ids.size(); ++k) {
            if (std::to_string(ck.at(replay.ids[k])) != rows[k + 1].back()) {
                o.fail(name + ": final column differs from checkpoint");
            }
        }
    }
    if (traces == 0) {
        o.fail("no traces found");
    }
    if (o.pass) {
        o.detail = std::to_string(traces) + " traces";
    }
    return o;
}

} // namespace

int main(int argc, char** argv)
{
    if (argc != 3) {
        std::fprintf(stderr, "usage: %s <work-dir> <teacher-config.json>\n", argv[0]);
        return 2;
    }
    const fs::path work = argv[1];
    const std::string config = argv[2];
    fs::remove_all(work);
    fs::create_directories(work);

    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "entropy normalization", 1.0, entropy_normalization},
        {2, "oracle equivalence", 1.0, oracle_equivalence},
        {3, "monotonicity", 1.0, monotonicity},
        {4, "zero-impact exactness", 5.0, zero_impact},
        {5, "gradient correctness", 30.0, gradients},
        {6, "schedule conformance", 1.0, schedule},
        {7, "budget conservation", 10.0, conservation},
        {8, "determinism", 60.0, [&] { return determinism(config, work); }},
        {9, "behavioral allocation", 120.0, [&] { return behavior(config, work); }},
        {10, "trace/heatmap integrity", 5.0, [&] { return heatmap_integrity(work); }},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.fail(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (secs > c.budget_s) {
            o.fail("runtime " + fmt(secs) + " s over budget; " + o.detail);
        }
        failures += o.pass ? 0 : 1;
        std::printf("%s criterion %d %s (%.3f s, budget %.0f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                    c.budget_s, o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
