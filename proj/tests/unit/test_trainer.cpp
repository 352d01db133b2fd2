// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include <Eigen/SVD>

#include <algorithm>
#include <bit>
#include <cmath>

#include "doctest.h"
#include "flexrank/errors.hpp"
#include "flexrank/optimizer.hpp"
#include "flexrank/task.hpp"
#include "flexrank/trainer.hpp"
#include "support/models.hpp"

using namespace flexrank;
using flexrank::testing::Gen;

namespace {

TrainConfig small_config(std::uint64_t seed)
{
    TrainConfig c;
    c.seed = seed;
    c.topology.input_dim = 6;
    c.topology.layers = {LayerSpec{LayerSpec::Type::linear, 8, true, true, "first"},
                         LayerSpec{LayerSpec::Type::tanh, 0, false, false, ""},
                         LayerSpec{LayerSpec::Type::linear, 4, true, false, "second"}};
    c.adapter = AdapterOptions{3, 6, 3.0, 0.02};
    c.task.teacher_ranks = {3, 1};
    c.task.noise_std = 0.01;
    c.task.train_samples = 64;
    c.task.eval_samples = 32;
    c.optimizer.lr = 0.01;
    c.schedule = BudgetSchedule{1, 20, 20, 200, 20};
    c.batch_size = 16;
    c.log_every = 25;
    return c;
}

Matrix column(const Matrix& m, std::size_t j)
{
    Matrix out(m.rows(), 1);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out(i, 0) = m(i, j);
    }
    return out;
}

} // namespace

TEST_SUITE("trainer")
{
    TEST_CASE("zero adapters reproduce the frozen network")
    {
        Gen g(1);
        SeededRng rng(1);
        ModelTopology topo{5, {LayerSpec{LayerSpec::Type::linear, 4, true, true, "a"},
                               LayerSpec{LayerSpec::Type::relu, 0, false, false, ""},
                               LayerSpec{LayerSpec::Type::linear, 3, true, false, "b"}},
                           LossKind::mse};
        const std::vector<Matrix> weights{g.matrix(4, 5), g.matrix(3, 4)};
        const std::vector<std::vector<double>> biases{g.vector(4), g.vector(3)};
        const ToyModel model = build_model(topo, weights, biases, AdapterOptions{2, 4, 2.0, 0.02}, rng);
        const Matrix x = g.matrix(5, 6);
        Matrix h = matmul(weights[0], x);
        for (std::size_t i = 0; i < h.rows(); ++i) {
            for (std::size_t j = 0; j < h.cols(); ++j) {
                h(i, j) = std::max(0.0, h(i, j) + biases[0][i]);
            }
        }
        const Matrix expected = matmul(weights[1], h);
        CHECK(model_predict(model, x) == expected);
    }

    TEST_CASE("single linear layer MSE closed form")
    {
        Gen g(2);
        const Matrix w = g.matrix(3, 4);
        const std::vector<double> bias = g.vector(3);
        LinearLayer lin;
        lin.weight = SvdAdapter("a", w, g.matrix(3, 2), g.vector(2), g.matrix(2, 4), 2, 3, 1.5);
        lin.bias = bias;
        const SvdAdapter adapter = *lin.adapter();
        ToyModel model(4, {Layer(lin)}, LossKind::mse);
        const Matrix x = g.matrix(4, 5);
        const Matrix t = g.matrix(3, 5);
        // Explicit effective weight, then the mean of squared residuals.
        Matrix eff = w;
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 4; ++j) {
                for (std::size_t k = 0; k < 2; ++k) {
                    eff(i, j) += adapter.scale() * adapter.p()(i, k) * adapter.lambda()[k] * adapter.q()(k, j);
                }
            }
        }
        const Matrix y = testing::naive_matmul(eff, x);
        long double acc = 0.0L;
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 5; ++j) {
                const long double d = y(i, j) + bias[i] - t(i, j);
                acc += d * d;
            }
        }
        const double expected = static_cast<double>(acc / 15.0L);
        CHECK(std::abs(loss_value(LossKind::mse, model_predict(model, x), t) - expected) <= 1e-12);
    }

    TEST_CASE("examples are independent within a batch")
    {
        Gen g(3);
        for (int trial = 0; trial < 20; ++trial) {
            auto c = testing::random_model(g);
            const Matrix x = g.matrix(c.model.input_dim(), 8);
            const Matrix all = model_predict(c.model, x);
            for (std::size_t j = 0; j < 8; ++j) {
                CHECK(model_predict(c.model, column(x, j)) == column(all, j));
            }
        }
    }

    TEST_CASE("cross-entropy value by hand")
    {
        const Matrix logits{{0.0}, {std::log(3.0)}};
        const Matrix target{{0.0}, {1.0}};
        CHECK(std::abs(loss_value(LossKind::softmax_cross_entropy, logits, target) - std::log(4.0 / 3.0)) <= 1e-15);
        const Matrix grad = loss_gradient(LossKind::softmax_cross_entropy, logits, target);
        CHECK(std::abs(grad(0, 0) - 0.25) <= 1e-15);
        CHECK(std::abs(grad(1, 0) + 0.25) <= 1e-15);
    }

    TEST_CASE("property: gradients match central differences")
    {
        Gen g(4);
        for (int trial = 0; trial < 50; ++trial) {
            auto c = testing::random_model(g);
            for (double gamma : {0.0, 0.1}) {
                const auto check = testing::check_gradients(c.model, c.x, c.targets, gamma);
                CHECK(check.parameters > 0);
                CHECK(check.worst_relative <= 1e-5);
            }
        }
    }

    TEST_CASE("regularizer enters the gradient linearly")
    {
        Gen g(5);
        for (int trial = 0; trial < 20; ++trial) {
            auto c = testing::random_model(g);
            const auto fwd = model_forward(c.model, c.x);
            const Matrix dy = loss_gradient(c.model.loss(), fwd.output, c.targets);
            const auto g0 = model_backward(c.model, fwd.cache, dy, 0.0);
            const auto g1 = model_backward(c.model, fwd.cache, dy, 0.3);
            for (std::size_t i = 0; i < c.model.layer_count(); ++i) {
                const LinearLayer* lin = c.model.linear(i);
                if (lin == nullptr || lin->adapter() == nullptr) {
                    continue;
                }
                const auto reg = ortho_regularizer_grad(*lin->adapter());
                const Matrix expect_p = add(g0.layers[i].p, scaled(reg.grad_p, 0.3));
                const Matrix expect_q = add(g0.layers[i].q, scaled(reg.grad_q, 0.3));
                CHECK(testing::max_abs_diff(g1.layers[i].p, expect_p) <= 1e-12 * std::max(1.0, testing::max_abs(expect_p)));
                CHECK(testing::max_abs_diff(g1.layers[i].q, expect_q) <= 1e-12 * std::max(1.0, testing::max_abs(expect_q)));
                CHECK(g1.layers[i].lambda == g0.layers[i].lambda);
            }
        }
    }

    TEST_CASE("zero loss gradient with orthonormal factors gives zero gradients")
    {
        LinearLayer lin;
        lin.weight = SvdAdapter("a", Matrix(3, 3, 0.5), Matrix::identity(3), {1.0, 2.0, 3.0}, Matrix::identity(3), 3, 3, 1.0);
        lin.bias = std::vector<double>(3, 0.0);
        ToyModel model(3, {Layer(lin)}, LossKind::mse);
        const auto fwd = model_forward(model, Matrix(3, 2, 1.0));
        const auto grads = model_backward(model, fwd.cache, Matrix(3, 2), 0.1);
        CHECK(testing::max_abs(grads.layers[0].p) == 0.0);
        CHECK(testing::max_abs(grads.layers[0].q) == 0.0);
        CHECK(grads.layers[0].lambda == std::vector<double>(3, 0.0));
        CHECK(grads.layers[0].bias == std::vector<double>(3, 0.0));
    }

    TEST_CASE("stale caches are rejected")
    {
        Gen g(6);
        auto c = testing::random_model(g);
        const auto fwd = model_forward(c.model, c.x);
        c.model.adapters().front()->lambda_mut()[0] += 1.0;
        CHECK_THROWS_AS(model_backward(c.model, fwd.cache, loss_gradient(c.model.loss(), fwd.output, c.targets), 0.0),
                        StalenessError);
    }

    TEST_CASE("adamw single step closed form")
    {
        std::vector<double> w{1.0};
        Moments m{{0.0}, {0.0}};
        AdamWOptions opts;
        opts.lr = 0.1;
        adamw_update(w, std::vector<double>{1.0}, m, opts, 1);
        // m = 0.1, v = 0.001; bias-corrected both are 1, so the step is lr / (1 + eps).
        CHECK(w[0] == 1.0 - 0.1 * (1.0 / (1.0 + 1e-8)));
        CHECK(std::abs(m.first[0] - 0.1) <= 1e-16);
        CHECK(std::abs(m.second[0] - 0.001) <= 1e-18);

        std::vector<double> z{2.0, -3.0};
        Moments mz{{0.0, 0.0}, {0.0, 0.0}};
        for (int step = 1; step <= 5; ++step) {
            adamw_update(z, std::vector<double>{0.0, 0.0}, mz, opts, step);
        }
        CHECK(z == std::vector<double>{2.0, -3.0});

        opts.weight_decay = 0.5;
        std::vector<double> d{2.0};
        Moments md{{0.0}, {0.0}};
        adamw_update(d, std::vector<double>{0.0}, md, opts, 1);
        CHECK(d[0] == 2.0 - 0.1 * 0.5 * 2.0);  // decoupled decay only

        CHECK_THROWS_AS(adamw_update(d, std::vector<double>{0.0, 1.0}, md, opts, 2), ShapeError);
        CHECK_THROWS_AS(adamw_update(d, std::vector<double>{0.0}, md, opts, 0), ParameterError);
    }

    TEST_CASE("optimizer moments follow prune and expand")
    {
        Gen g(7);
        LinearLayer lin;
        lin.weight = SvdAdapter("a", g.matrix(4, 3), g.matrix(4, 3), g.vector(3), g.matrix(3, 3), 3, 5, 1.0);
        ToyModel model(3, {Layer(lin)}, LossKind::mse);
        AdamW opt(AdamWOptions{}, model);
        const Matrix x = g.matrix(3, 4), t = g.matrix(4, 4);
        for (int s = 0; s < 3; ++s) {
            const auto fwd = model_forward(model, x);
            opt.step(model, model_backward(model, fwd.cache, loss_gradient(model.loss(), fwd.output, t), 0.1));
        }
        SvdAdapter& a = *model.adapters().front();
        const std::size_t victim = smallest_direction(a.lambda());
        const auto before = opt.layer(0);
        auto e = prune_rank(a);
        opt.on_allocation(model, e);
        const auto& after = opt.layer(0);
        CHECK(after.p_first.cols() == 2);
        CHECK(after.q_first.rows() == 2);
        CHECK(after.lambda_first.size() == 2);
        // Surviving directions keep their moments.
        std::vector<double> kept = before.lambda_second;
        kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(victim));
        CHECK(after.lambda_second == kept);

        SeededRng rng(7);
        e = expand_rank(a, InitStrategy{}, rng);
        opt.on_allocation(model, e);
        CHECK(opt.layer(0).p_second.cols() == 3);
        CHECK(opt.layer(0).lambda_first.back() == 0.0);
        CHECK(opt.layer(0).q_first.row(2)[0] == 0.0);
    }

    TEST_CASE("teacher deltas have exactly the requested rank")
    {
        ModelTopology topo{10, {LayerSpec{LayerSpec::Type::linear, 9, true, false, "a"},
                                LayerSpec{LayerSpec::Type::tanh, 0, false, false, ""},
                                LayerSpec{LayerSpec::Type::linear, 7, true, false, "b"}},
                           LossKind::mse};
        SyntheticTask spec;
        spec.teacher_ranks = {4, 2};
        SeededRng rng(8);
        const TaskData data = make_task(spec, topo, rng);
        const std::size_t expected[] = {4, 2};
        for (std::size_t k = 0; k < 2; ++k) {
            const Matrix& d = data.teacher_deltas[k];
            Eigen::MatrixXd m(d.rows(), d.cols());
            for (std::size_t i = 0; i < d.rows(); ++i) {
                for (std::size_t j = 0; j < d.cols(); ++j) {
                    m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d(i, j);
                }
            }
            const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
            std::size_t above = 0;
            for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
                above += svd.singularValues()(i) > 1e-8 ? 1 : 0;
            }
            CHECK(above == expected[k]);
        }
    }

    TEST_CASE("tasks are seeded and validated")
    {
        ModelTopology topo{4, {LayerSpec{LayerSpec::Type::linear, 3, true, false, "a"}}, LossKind::mse};
        SyntheticTask spec;
        spec.teacher_ranks = {2};
        spec.noise_std = 0.1;
        SeededRng a(9), b(9);
        const TaskData x = make_task(spec, topo, a);
        const TaskData y = make_task(spec, topo, b);
        CHECK(x.train.inputs == y.train.inputs);
        CHECK(x.train.targets == y.train.targets);
        CHECK(x.eval.targets == y.eval.targets);

        spec.teacher_ranks = {4};
        SeededRng c(9);
        CHECK_THROWS_AS(make_task(spec, topo, c), ParameterError);
        spec.teacher_ranks = {1, 1};
        CHECK_THROWS_AS(make_task(spec, topo, c), ParameterError);
    }

    TEST_CASE("noiseless teacher is realizable")
    {
        ModelTopology topo{6, {LayerSpec{LayerSpec::Type::linear, 5, true, true, "a"},
                               LayerSpec{LayerSpec::Type::tanh, 0, false, false, ""},
                               LayerSpec{LayerSpec::Type::linear, 3, true, true, "b"}},
                           LossKind::mse};
        SyntheticTask spec;
        spec.teacher_ranks = {2, 1};
        SeededRng rng(10);
        const TaskData data = make_task(spec, topo, rng);
        const ToyModel teacher = teacher_model(data, topo);
        CHECK(loss_value(LossKind::mse, model_predict(teacher, data.train.inputs), data.train.targets) <= 1e-10);
    }

    TEST_CASE("two-blob task gives one-hot labels")
    {
        ModelTopology topo{3, {LayerSpec{LayerSpec::Type::linear, 2, true, false, "a"}}, LossKind::softmax_cross_entropy};
        SyntheticTask spec;
        spec.kind = TaskKind::two_blob;
        spec.train_samples = 40;
        SeededRng rng(11);
        const TaskData data = make_task(spec, topo, rng);
        for (std::size_t j = 0; j < 40; ++j) {
            CHECK(data.train.targets(0, j) + data.train.targets(1, j) == 1.0);
        }
    }

    TEST_CASE("late warmup leaves a single allocation step")
    {
        TrainConfig c = small_config(1);
        c.schedule = BudgetSchedule{2, 199, 0, 200, 1000};
        const auto r = run_training(c);
        CHECK(r.steps_completed == 200);
        CHECK(r.allocation_steps == 1);
        for (const auto& e : r.events) {
            CHECK(e.step == 199);
        }

        c.schedule = BudgetSchedule{1, 0, 99, 100, 1};
        CHECK(run_training(c).allocation_steps == 1);
    }

    TEST_CASE("run is a pure function of the config")
    {
        const auto a = run_training(small_config(3));
        const auto b = run_training(small_config(3));
        CHECK(a.events == b.events);
        CHECK(a.metrics == b.metrics);
        CHECK(std::bit_cast<std::uint64_t>(a.final_eval_loss) == std::bit_cast<std::uint64_t>(b.final_eval_loss));
        CHECK(a.allocation_steps == 8);  // 20, 40, ..., 160
        const auto other = run_training(small_config(4));
        CHECK(other.final_eval_loss != a.final_eval_loss);
    }

    TEST_CASE("training keeps allocator invariants and logs metrics")
    {
        for (AllocatorMode mode : {AllocatorMode::bidirectional, AllocatorMode::prune_only, AllocatorMode::expand_only}) {
            TrainConfig c = small_config(5);
            c.mode = mode;
            c.verify_zero_impact = true;  // throws if an expansion moves the probe loss
            const auto r = run_training(c);
            REQUIRE_FALSE(r.divergence.has_value());
            std::size_t prev_total = 6;
            for (const auto& row : r.metrics) {
                CHECK(row.ranks.size() == 2);
                for (std::size_t k = 0; k < 2; ++k) {
                    CHECK(row.ranks[k] >= 1);
                    CHECK(row.ranks[k] <= 6);
                }
                if (mode == AllocatorMode::bidirectional) {
                    CHECK(row.total_rank == 6);
                } else if (mode == AllocatorMode::prune_only) {
                    CHECK(row.total_rank <= prev_total);
                } else {
                    CHECK(row.total_rank >= prev_total);
                }
                prev_total = row.total_rank;
            }
            CHECK(r.metrics.back().step == 199);
            CHECK(r.metrics.front().step == 0);
        }
    }

    TEST_CASE("all metrics and init strategies run")
    {
        for (MetricVariant v : {MetricVariant::spectral_entropy, MetricVariant::nuclear, MetricVariant::frobenius,
                                MetricVariant::sensitivity, MetricVariant::elem_energy_entropy,
                                MetricVariant::mat_energy_entropy}) {
            TrainConfig c = small_config(6);
            c.metric.variant = v;
            CHECK_FALSE(run_training(c).divergence.has_value());
        }
        for (InitKind k : {InitKind::small_init, InitKind::zero_init, InitKind::orthogonal_init}) {
            TrainConfig c = small_config(6);
            c.init.kind = k;
            CHECK_FALSE(run_training(c).divergence.has_value());
        }
    }

    TEST_CASE("divergence is detected")
    {
        TrainConfig c = small_config(7);
        c.optimizer.lr = 1e6;
        const auto r = run_training(c);
        REQUIRE(r.divergence.has_value());
        CHECK(r.steps_completed < 200);
        CHECK(r.divergence->step == r.steps_completed);
    }

    TEST_CASE("property: noiseless realizable tasks are learned")
    {
        int solved = 0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            TrainConfig c;
            c.seed = seed;
            c.topology.input_dim = 8;
            c.topology.layers = {LayerSpec{LayerSpec::Type::linear, 6, true, false, "a"}};
            c.adapter = AdapterOptions{3, 6, 3.0, 0.02};
            c.task.teacher_ranks = {2};
            c.task.train_samples = 128;
            c.optimizer.lr = 0.01;
            c.schedule = BudgetSchedule{1, 1999, 0, 2000, 1};
            c.mode = AllocatorMode::expand_only;
            const auto r = run_training(c);
            solved += r.final_train_loss < 1e-3 ? 1 : 0;
        }
        CHECK(solved >= 4);
    }

    TEST_CASE("config validation")
    {
        TrainConfig c = small_config(1);
        c.batch_size = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = small_config(1);
        c.gamma = -1.0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = small_config(1);
        c.topology.layers[0].adapter = false;
        c.topology.layers[2].adapter = false;
        c.task.teacher_ranks.clear();
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
}
