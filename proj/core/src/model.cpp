// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexrank/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "flexrank/errors.hpp"

namespace flexrank {

std::string_view to_string(ActivationKind kind) { return kind == ActivationKind::tanh ? "tanh" : "relu"; }

std::string_view to_string(LossKind kind)
{
    return kind == LossKind::mse ? "mse" : "softmax_cross_entropy";
}

LossKind loss_kind_from_string(std::string_view name)
{
    if (name == "mse") {
        return LossKind::mse;
    }
    if (name == "softmax_cross_entropy") {
        return LossKind::softmax_cross_entropy;
    }
    throw ParameterError("unknown loss '" + std::string(name) + "'");
}

std::string_view to_string(LayerSpec::Type type)
{
    switch (type) {
    case LayerSpec::Type::linear: return "linear";
    case LayerSpec::Type::tanh: return "tanh";
    case LayerSpec::Type::relu: return "relu";
    }
    return "unknown";
}

LayerSpec::Type layer_type_from_string(std::string_view name)
{
    for (auto t : {LayerSpec::Type::linear, LayerSpec::Type::tanh, LayerSpec::Type::relu}) {
        if (to_string(t) == name) {
            return t;
        }
    }
    throw ParameterError("unknown layer type '" + std::string(name) + "'");
}

void ModelTopology::validate() const
{
    if (input_dim == 0) {
        throw ConfigError("model.input_dim must be positive");
    }
    if (layers.empty()) {
        throw ConfigError("model.layers must not be empty");
    }
    bool any_linear = false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].type == LayerSpec::Type::linear) {
            any_linear = true;
            if (layers[i].out == 0) {
                throw ConfigError("model.layers[" + std::to_string(i) + "].out must be positive");
            }
        }
    }
    if (!any_linear) {
        throw ConfigError("model.layers needs at least one linear layer");
    }
    std::set<std::string> seen;
    for (const auto& id : adapter_ids()) {
        if (!id.empty() && !seen.insert(id).second) {
            throw ConfigError("model.layers: duplicate adapter id '" + id + "'");
        }
    }
}

std::size_t ModelTopology::output_dim() const
{
    std::size_t dim = input_dim;
    for (const auto& layer : layers) {
        if (layer.type == LayerSpec::Type::linear) {
            dim = layer.out;
        }
    }
    return dim;
}

std::vector<std::pair<std::size_t, std::size_t>> ModelTopology::linear_shapes() const
{
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    std::size_t dim = input_dim;
    for (const auto& layer : layers) {
        if (layer.type == LayerSpec::Type::linear) {
            shapes.emplace_back(layer.out, dim);
            dim = layer.out;
        }
    }
    return shapes;
}

std::vector<std::string> ModelTopology::adapter_ids() const
{
    std::vector<std::string> ids;
    for (const auto& layer : layers) {
        if (layer.type != LayerSpec::Type::linear) {
            continue;
        }
        if (!layer.adapter) {
            ids.emplace_back();
        } else {
            ids.push_back(layer.id.empty() ? "layer" + std::to_string(ids.size()) : layer.id);
        }
    }
    return ids;
}

std::size_t LinearLayer::d_out() const
{
    if (const auto* a = adapter()) {
        return a->d_out();
    }
    return std::get<Matrix>(weight).rows();
}

std::size_t LinearLayer::d_in() const
{
    if (const auto* a = adapter()) {
        return a->d_in();
    }
    return std::get<Matrix>(weight).cols();
}

ToyModel::ToyModel(std::size_t input_dim, std::vector<Layer> layers, LossKind loss)
    : input_dim_(input_dim), layers_(std::move(layers)), loss_(loss)
{
    std::size_t dim = input_dim_;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (auto* lin = std::get_if<LinearLayer>(&layers_[i])) {
            if (lin->d_in() != dim) {
                throw ShapeError("layer " + std::to_string(i) + " expects " + std::to_string(lin->d_in()) +
                                 " inputs, previous layer yields " + std::to_string(dim));
            }
            if (lin->bias && lin->bias->size() != lin->d_out()) {
                throw ShapeError("layer " + std::to_string(i) + ": bias length mismatch");
            }
            if (const auto* a = lin->adapter(); a != nullptr && !ids.insert(a->id()).second) {
                throw ConfigError("duplicate adapter id '" + a->id() + "'");
            }
            dim = lin->d_out();
        }
    }
}

std::size_t ToyModel::output_dim() const
{
    std::size_t dim = input_dim_;
    for (const auto& layer : layers_) {
        if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
            dim = lin->d_out();
        }
    }
    return dim;
}

LinearLayer* ToyModel::linear(std::size_t layer) { return std::get_if<LinearLayer>(&layers_.at(layer)); }

const LinearLayer* ToyModel::linear(std::size_t layer) const
{
    return std::get_if<LinearLayer>(&layers_.at(layer));
}

std::vector<SvdAdapter*> ToyModel::adapters()
{
    std::vector<SvdAdapter*> out;
    for (auto& layer : layers_) {
        if (auto* lin = std::get_if<LinearLayer>(&layer); lin != nullptr && lin->adapter() != nullptr) {
            out.push_back(lin->adapter());
        }
    }
    return out;
}

std::vector<const SvdAdapter*> ToyModel::adapters() const
{
    std::vector<const SvdAdapter*> out;
    for (const auto& layer : layers_) {
        if (const auto* lin = std::get_if<LinearLayer>(&layer); lin != nullptr && lin->adapter() != nullptr) {
            out.push_back(lin->adapter());
        }
    }
    return out;
}

SvdAdapter* ToyModel::find_adapter(std::string_view id)
{
    for (SvdAdapter* a : adapters()) {
        if (a->id() == id) {
            return a;
        }
    }
    return nullptr;
}

std::size_t ToyModel::adapter_layer(std::string_view id) const
{
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (const auto* lin = std::get_if<LinearLayer>(&layers_[i]);
            lin != nullptr && lin->adapter() != nullptr && lin->adapter()->id() == id) {
            return i;
        }
    }
    throw ConfigError("no adapter with id '" + std::string(id) + "'");
}

std::vector<double>& ToyModel::bias_mut(std::size_t layer)
{
    LinearLayer* lin = linear(layer);
    if (lin == nullptr || !lin->bias) {
        throw ConfigError("layer " + std::to_string(layer) + " has no bias");
    }
    ++bias_version_;
    return *lin->bias;
}

std::uint64_t ToyModel::version() const
{
    std::uint64_t v = bias_version_;
    for (const SvdAdapter* a : adapters()) {
        v += a->version();
    }
    return v;
}

std::size_t ToyModel::parameter_count() const
{
    std::size_t count = 0;
    for (const auto& layer : layers_) {
        if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
            if (const auto* a = lin->adapter()) {
                count += a->parameter_count();
            }
            if (lin->bias) {
                count += lin->bias->size();
            }
        }
    }
    return count;
}

std::size_t ToyModel::total_rank() const
{
    std::size_t total = 0;
    for (const SvdAdapter* a : adapters()) {
        total += a->rank();
    }
    return total;
}

ToyModel build_model(const ModelTopology& topology, const std::vector<Matrix>& base_weights,
                     const std::vector<std::vector<double>>& base_biases, const AdapterOptions& options,
                     SeededRng& rng)
{
    topology.validate();
    const auto shapes = topology.linear_shapes();
    const auto ids = topology.adapter_ids();
    if (base_weights.size() != shapes.size() || base_biases.size() != shapes.size()) {
        throw ShapeError("build_model: need one base weight and bias per linear layer");
    }
    std::vector<Layer> layers;
    std::size_t k = 0;
    for (const auto& spec : topology.layers) {
        switch (spec.type) {
        case LayerSpec::Type::tanh:
            layers.emplace_back(ActivationLayer{ActivationKind::tanh});
            break;
        case LayerSpec::Type::relu:
            layers.emplace_back(ActivationLayer{ActivationKind::relu});
            break;
        case LayerSpec::Type::linear: {
            const Matrix& w = base_weights[k];
            if (w.rows() != shapes[k].first || w.cols() != shapes[k].second) {
                throw ShapeError("build_model: base weight " + std::to_string(k) + " has wrong shape");
            }
            LinearLayer lin{w, std::nullopt};
            if (spec.adapter) {
                lin.weight = SvdAdapter(ids[k], w, options, rng);
            }
            if (spec.bias) {
                lin.bias = base_biases[k].empty() ? std::vector<double>(w.rows(), 0.0) : base_biases[k];
            }
            layers.emplace_back(std::move(lin));
            ++k;
            break;
        }
        }
    }
    return ToyModel(topology.input_dim, std::move(layers), topology.loss);
}

ForwardResult model_forward(const ToyModel& model, const Matrix& x)
{
    if (x.rows() != model.input_dim()) {
        throw ShapeError("model_forward: input has " + std::to_string(x.rows()) + " rows, model expects " +
                         std::to_string(model.input_dim()));
    }
    ForwardResult result;
    auto& cache = result.cache;
    cache.version = model.version();
    cache.inputs.reserve(model.layer_count());
    cache.outputs.reserve(model.layer_count());
    cache.adapter_activations.resize(model.layer_count());

    Matrix h = x;
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        cache.inputs.push_back(h);
        const Layer& layer = model.layers()[i];
        if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
            if (const SvdAdapter* a = lin->adapter()) {
                h = forward(*a, h, &cache.adapter_activations[i]);
            } else {
                h = matmul(std::get<Matrix>(lin->weight), h);
            }
            if (lin->bias) {
                for (std::size_t r = 0; r < h.rows(); ++r) {
                    for (double& v : h.row(r)) {
                        v += (*lin->bias)[r];
                    }
                }
            }
        } else {
            const auto kind = std::get<ActivationLayer>(layer).kind;
            for (double& v : h.data()) {
                v = kind == ActivationKind::tanh ? std::tanh(v) : std::max(v, 0.0);
            }
        }
        cache.outputs.push_back(h);
    }
    result.output = std::move(h);
    return result;
}

Matrix model_predict(const ToyModel& model, const Matrix& x) { return model_forward(model, x).output; }

namespace {

void require_matching(const Matrix& output, const Matrix& targets)
{
    if (output.rows() != targets.rows() || output.cols() != targets.cols()) {
        throw ShapeError("loss: output " + std::to_string(output.rows()) + "x" + std::to_string(output.cols()) +
                         " vs targets " + std::to_string(targets.rows()) + "x" + std::to_string(targets.cols()));
    }
    if (output.cols() == 0) {
        throw ShapeError("loss: empty batch");
    }
}

// Column-wise log-softmax.
Matrix log_softmax(const Matrix& logits)
{
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t j = 0; j < logits.cols(); ++j) {
        double peak = logits(0, j);
        for (std::size_t i = 1; i < logits.rows(); ++i) {
            peak = std::max(peak, logits(i, j));
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < logits.rows(); ++i) {
            sum += std::exp(logits(i, j) - peak);
        }
        const double log_sum = peak + std::log(sum);
        for (std::size_t i = 0; i < logits.rows(); ++i) {
            out(i, j) = logits(i, j) - log_sum;
        }
    }
    return out;
}

} // namespace

double loss_value(LossKind loss, const Matrix& output, const Matrix& targets)
{
    require_matching(output, targets);
    const double batch = static_cast<double>(output.cols());
    double acc = 0.0;
    if (loss == LossKind::mse) {
        auto y = output.data();
        auto t = targets.data();
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double d = y[i] - t[i];
            acc += d * d;
        }
        return acc / static_cast<double>(y.size());
    }
    const Matrix logp = log_softmax(output);
    auto lp = logp.data();
    auto t = targets.data();
    for (std::size_t i = 0; i < lp.size(); ++i) {
        if (t[i] != 0.0) {
            acc -= t[i] * lp[i];
        }
    }
    return acc / batch;
}

Matrix loss_gradient(LossKind loss, const Matrix& output, const Matrix& targets)
{
    require_matching(output, targets);
    Matrix grad(output.rows(), output.cols());
    if (loss == LossKind::mse) {
        const double factor = 2.0 / static_cast<double>(output.size());
        auto y = output.data();
        auto t = targets.data();
        auto g = grad.data();
        for (std::size_t i = 0; i < y.size(); ++i) {
            g[i] = factor * (y[i] - t[i]);
        }
        return grad;
    }
    const Matrix logp = log_softmax(output);
    const double batch = static_cast<double>(output.cols());
    for (std::size_t j = 0; j < output.cols(); ++j) {
        double mass = 0.0;
        for (std::size_t i = 0; i < output.rows(); ++i) {
            mass += targets(i, j);
        }
        for (std::size_t i = 0; i < output.rows(); ++i) {
            grad(i, j) = (mass * std::exp(logp(i, j)) - targets(i, j)) / batch;
        }
    }
    return grad;
}

double regularization(const ToyModel& model)
{
    double total = 0.0;
    for (const SvdAdapter* a : model.adapters()) {
        total += ortho_regularizer(*a);
    }
    return total;
}

double objective(const ToyModel& model, const Matrix& x, const Matrix& targets, double gamma)
{
    const double data = loss_value(model.loss(), model_predict(model, x), targets);
    return gamma == 0.0 ? data : data + gamma * regularization(model);
}

Gradients model_backward(const ToyModel& model, const ForwardCache& cache, const Matrix& output_grad,
                         double gamma)
{
    if (cache.version != model.version() || cache.inputs.size() != model.layer_count()) {
        throw StalenessError("model_backward: forward cache does not match the current model");
    }
    Gradients grads;
    grads.layers.resize(model.layer_count());
    Matrix upstream = output_grad;
    for (std::size_t idx = model.layer_count(); idx-- > 0;) {
        const Layer& layer = model.layers()[idx];
        const Matrix& input = cache.inputs[idx];
        if (upstream.rows() != cache.outputs[idx].rows() || upstream.cols() != cache.outputs[idx].cols()) {
            throw ShapeError("model_backward: gradient shape does not match layer " + std::to_string(idx));
        }
        LayerGradients& g = grads.layers[idx];

        if (const auto* act = std::get_if<ActivationLayer>(&layer)) {
            const Matrix& out = cache.outputs[idx];
            auto up = upstream.data();
            auto y = out.data();
            auto xin = input.data();
            for (std::size_t i = 0; i < up.size(); ++i) {
                up[i] *= act->kind == ActivationKind::tanh ? (1.0 - y[i] * y[i]) : (xin[i] > 0.0 ? 1.0 : 0.0);
            }
            continue;
        }

        const auto& lin = std::get<LinearLayer>(layer);
        if (lin.bias) {
            g.bias.assign(upstream.rows(), 0.0);
            for (std::size_t r = 0; r < upstream.rows(); ++r) {
                for (double v : upstream.row(r)) {
                    g.bias[r] += v;
                }
            }
        }

        const SvdAdapter* adapter = lin.adapter();
        if (adapter == nullptr) {
            if (idx > 0) {
                upstream = matmul(std::get<Matrix>(lin.weight).transposed(), upstream);
            }
            continue;
        }

        const AdapterActivations& acts = cache.adapter_activations[idx];
        const std::size_t r = adapter->rank();
        const Matrix d_update = scaled(upstream, adapter->scale());        // d_out x B
        g.p = matmul(d_update, acts.scaled.transposed());                  // d_out x r
        Matrix d_scaled = matmul(adapter->p().transposed(), d_update);     // r x B
        g.lambda.assign(r, 0.0);
        for (std::size_t i = 0; i < r; ++i) {
            g.lambda[i] = dot(d_scaled.row(i), acts.qx.row(i));
            for (double& v : d_scaled.row(i)) {
                v *= adapter->lambda()[i];
            }
        }
        g.q = matmul(d_scaled, input.transposed());                        // r x d_in
        if (gamma != 0.0) {
            const RegularizerGrad reg = ortho_regularizer_grad(*adapter);
            g.p = add(g.p, scaled(reg.grad_p, gamma));
            g.q = add(g.q, scaled(reg.grad_q, gamma));
        }
        if (idx > 0) {
            upstream = add(matmul(adapter->base_w().transposed(), upstream),
                           matmul(adapter->q().transposed(), d_scaled));
        }
    }
    return grads;
}

std::vector<double> flatten_adapter_gradient(const LayerGradients& grads)
{
    std::vector<double> out;
    out.reserve(grads.p.size() + grads.lambda.size() + grads.q.size());
    out.insert(out.end(), grads.p.data().begin(), grads.p.data().end());
    out.insert(out.end(), grads.lambda.begin(), grads.lambda.end());
    out.insert(out.end(), grads.q.data().begin(), grads.q.data().end());
    return out;
}

} // namespace flexrank
