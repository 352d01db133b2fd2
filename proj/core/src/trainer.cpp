// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexrank/trainer.hpp"

#include <bit>
#include <cmath>
#include <map>

#include "flexrank/errors.hpp"

namespace flexrank {

void TrainConfig::validate() const
{
    topology.validate();
    validate_task(task, topology);
    optimizer.validate();
    schedule.validate();
    metric.validate();
    init.validate();
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
        throw ConfigError("gamma must be finite and non-negative");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be at least 1");
    }
    if (log_every < 1) {
        throw ConfigError("log_every must be at least 1");
    }
    if (adapter.r_init < 1 || adapter.r_max < adapter.r_init) {
        throw ConfigError("adapter: need 1 <= r_init <= r_max");
    }
    if (!(adapter.alpha > 0.0) || !(adapter.vector_std > 0.0)) {
        throw ConfigError("adapter: alpha and vector_std must be positive");
    }
    bool any_adapter = false;
    for (const auto& layer : topology.layers) {
        any_adapter = any_adapter || (layer.type == LayerSpec::Type::linear && layer.adapter);
    }
    if (!any_adapter) {
        throw ConfigError("model.layers: at least one linear layer needs an adapter");
    }
}

namespace {

// Fixed order of child streams drawn from the run seed.
struct RunStreams {
    SeededRng task;
    SeededRng model;
    SeededRng batches;
    SeededRng allocation;

    explicit RunStreams(std::uint64_t seed)
        : RunStreams(SeededRng(seed))
    {
    }

private:
    explicit RunStreams(SeededRng root)
        : task(root.fork()), model(root.fork()), batches(root.fork()), allocation(root.fork())
    {
    }
};

std::vector<std::size_t> sample_indices(std::size_t count, std::size_t population, SeededRng& rng)
{
    std::vector<std::size_t> out(count);
    for (auto& i : out) {
        i = static_cast<std::size_t>(rng.uniform_index(population));
    }
    return out;
}

MetricsRow snapshot(const ToyModel& model, std::int64_t step, double loss)
{
    MetricsRow row{step, loss, model.total_rank(), model.parameter_count(), {}};
    for (const SvdAdapter* a : model.adapters()) {
        row.ranks.push_back(a->rank());
    }
    return row;
}

bool bitwise_equal(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

} // namespace

ToyModel initial_model(const TrainConfig& config)
{
    RunStreams streams(config.seed);
    const TaskData data = make_task(config.task, config.topology, streams.task);
    return build_model(config.topology, data.base_weights, data.base_biases, config.adapter, streams.model);
}

TrainResult run_training(const TrainConfig& config)
{
    config.validate();
    RunStreams streams(config.seed);
    const TaskData data = make_task(config.task, config.topology, streams.task);
    TrainResult result{build_model(config.topology, data.base_weights, data.base_biases, config.adapter,
                                   streams.model),
                       {}, {}, {}, std::nullopt, 0, 0, 0.0, 0.0};
    ToyModel& model = result.model;
    for (const SvdAdapter* a : model.adapters()) {
        result.adapters.push_back({a->id(), a->r_init(), a->r_max(), a->d_out(), a->d_in()});
    }

    AdamW optimizer(config.optimizer, model);
    std::map<std::string, SensitivityState> sensitivity;
    const std::size_t batch = std::min(config.batch_size, data.train.size());
    // Fixed probe batch for the zero-impact check: the first `batch` training examples.
    std::vector<std::size_t> probe_idx(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        probe_idx[i] = i;
    }
    const Dataset probe = data.train.gather(probe_idx);

    double first_loss = 0.0;
    const std::int64_t total = config.schedule.total_steps;
    for (std::int64_t t = 0; t < total; ++t) {
        const Dataset mb = data.train.gather(sample_indices(batch, data.train.size(), streams.batches));
        ForwardResult fwd = model_forward(model, mb.inputs);
        const double loss = loss_value(model.loss(), fwd.output, mb.targets);
        if (t == 0) {
            first_loss = loss;
        }
        if (!std::isfinite(loss) || (first_loss > 0.0 && loss > kDivergenceFactor * first_loss)) {
            result.divergence = Divergence{t, loss, std::isfinite(loss) ? "loss exceeded 1e6x its initial value"
                                                                        : "non-finite loss"};
            result.metrics.push_back(snapshot(model, t, loss));
            break;
        }

        const Gradients grads =
            model_backward(model, fwd.cache, loss_gradient(model.loss(), fwd.output, mb.targets), config.gamma);

        if (config.metric.variant == MetricVariant::sensitivity) {
            for (SvdAdapter* a : model.adapters()) {
                const auto& g = grads.layers[model.adapter_layer(a->id())];
                sensitivity[a->id()] = sensitivity_update(sensitivity[a->id()], flatten_trainables(*a),
                                                          flatten_adapter_gradient(g), config.metric.beta1,
                                                          config.metric.beta2);
            }
        }

        optimizer.step(model, grads);

        if (is_allocation_step(config.schedule, t)) {
            ++result.allocation_steps;
            const std::int64_t b = budget(config.schedule, t);
            const auto view = model.adapters();
            const std::vector<const SvdAdapter*> cview(view.begin(), view.end());
            const ImportanceReport report = score_all(cview, config.metric, sensitivity, t);
            const Selection selection = select_candidates(report, cview, b, config.mode);
            if (!selection.empty()) {
                auto events = apply_prunes(view, selection, t);
                const bool check = config.verify_zero_impact && config.init.kind == InitKind::zero_impact &&
                                   !selection.expand.empty();
                const double before = check ? loss_value(model.loss(), model_predict(model, probe.inputs),
                                                         probe.targets)
                                            : 0.0;
                auto grown = apply_expansions(view, selection, config.init, streams.allocation, t);
                if (check) {
                    const double after =
                        loss_value(model.loss(), model_predict(model, probe.inputs), probe.targets);
                    if (!bitwise_equal(before, after)) {
                        throw InvariantError("zero-impact expansion changed the probe loss at step " +
                                             std::to_string(t));
                    }
                }
                events.insert(events.end(), grown.begin(), grown.end());
                for (const auto& e : events) {
                    optimizer.on_allocation(model, e);
                }
                result.events.insert(result.events.end(), events.begin(), events.end());
            }
        }

        result.steps_completed = t + 1;
        if (t % config.log_every == 0 || t + 1 == total) {
            result.metrics.push_back(snapshot(model, t, loss));
        }
    }

    result.final_train_loss = loss_value(model.loss(), model_predict(model, data.train.inputs), data.train.targets);
    result.final_eval_loss = loss_value(model.loss(), model_predict(model, data.eval.inputs), data.eval.targets);
    return result;
}

} // namespace flexrank
