// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "flexrank/adapter.hpp"
#include "flexrank/matrix.hpp"

namespace flexrank {

enum class ActivationKind { tanh, relu };
enum class LossKind { mse, softmax_cross_entropy };

std::string_view to_string(ActivationKind kind);
std::string_view to_string(LossKind kind);
LossKind loss_kind_from_string(std::string_view name);

/// Declarative description of one layer.
struct LayerSpec {
    enum class Type { linear, tanh, relu };
    Type type = Type::linear;
    std::size_t out = 0;     ///< linear only
    bool adapter = false;    ///< linear only
    bool bias = false;       ///< linear only
    std::string id;          ///< adapter id; defaults to "layer<k>" for the k-th linear layer

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

std::string_view to_string(LayerSpec::Type type);
LayerSpec::Type layer_type_from_string(std::string_view name);

struct ModelTopology {
    std::size_t input_dim = 0;
    std::vector<LayerSpec> layers;
    LossKind loss = LossKind::mse;

    /// Throws ConfigError on empty/zero dims or non-unique adapter ids.
    void validate() const;
    std::size_t output_dim() const;
    /// (d_out, d_in) of every linear layer, in order.
    std::vector<std::pair<std::size_t, std::size_t>> linear_shapes() const;
    /// Adapter id of the k-th linear layer (empty if it has no adapter).
    std::vector<std::string> adapter_ids() const;

    friend bool operator==(const ModelTopology&, const ModelTopology&) = default;
};

/// Frozen linear map with an optional SVD adapter and an optional trainable bias.
struct LinearLayer {
    std::variant<Matrix, SvdAdapter> weight;
    std::optional<std::vector<double>> bias;

    std::size_t d_out() const;
    std::size_t d_in() const;
    SvdAdapter* adapter() { return std::get_if<SvdAdapter>(&weight); }
    const SvdAdapter* adapter() const { return std::get_if<SvdAdapter>(&weight); }
};

struct ActivationLayer {
    ActivationKind kind = ActivationKind::tanh;
};

using Layer = std::variant<LinearLayer, ActivationLayer>;

/// Small feed-forward network whose only trainables are adapter factors and biases.
class ToyModel {
public:
    ToyModel(std::size_t input_dim, std::vector<Layer> layers, LossKind loss);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const;
    LossKind loss() const { return loss_; }

    const std::vector<Layer>& layers() const { return layers_; }
    std::size_t layer_count() const { return layers_.size(); }

    LinearLayer* linear(std::size_t layer);
    const LinearLayer* linear(std::size_t layer) const;

    /// Adapters in declared depth order.
    std::vector<SvdAdapter*> adapters();
    std::vector<const SvdAdapter*> adapters() const;
    SvdAdapter* find_adapter(std::string_view id);
    /// Layer index holding the adapter with this id.
    std::size_t adapter_layer(std::string_view id) const;

    /// Mutable bias access; counts as a mutation.
    std::vector<double>& bias_mut(std::size_t layer);

    /// Changes whenever any trainable or any rank changes.
    std::uint64_t version() const;

    std::size_t parameter_count() const;
    std::size_t total_rank() const;

private:
    std::size_t input_dim_;
    std::vector<Layer> layers_;
    LossKind loss_;
    std::uint64_t bias_version_ = 0;
};

/// Builds the network from a topology. `base_weights` and `base_biases` hold
/// one entry per linear layer; adapters are constructed with `options`.
ToyModel build_model(const ModelTopology& topology, const std::vector<Matrix>& base_weights,
                     const std::vector<std::vector<double>>& base_biases, const AdapterOptions& options,
                     SeededRng& rng);

/// Per-layer values kept by the forward pass for the backward pass.
struct ForwardCache {
    std::uint64_t version = 0;
    std::vector<Matrix> inputs;   ///< input of each layer
    std::vector<Matrix> outputs;  ///< output of each layer
    std::vector<AdapterActivations> adapter_activations;  ///< per layer; empty for non-adapted layers
};

struct ForwardResult {
    Matrix output;
    ForwardCache cache;
};

/// x is input_dim x batch; each column is one example.
ForwardResult model_forward(const ToyModel& model, const Matrix& x);
Matrix model_predict(const ToyModel& model, const Matrix& x);

/// Mean over examples. MSE averages (y - t)^2 over every output entry;
/// cross-entropy takes `targets` as one-hot (or soft) label columns.
double loss_value(LossKind loss, const Matrix& output, const Matrix& targets);
Matrix loss_gradient(LossKind loss, const Matrix& output, const Matrix& targets);

/// Sum of orthogonality penalties over every adapter.
double regularization(const ToyModel& model);

/// loss_value + gamma * regularization
double objective(const ToyModel& model, const Matrix& x, const Matrix& targets, double gamma);

struct LayerGradients {
    Matrix p;
    std::vector<double> lambda;
    Matrix q;
    std::vector<double> bias;
};

struct Gradients {
    std::vector<LayerGradients> layers;  ///< one per layer; unused fields stay empty
};

/// Reverse pass. `output_grad` is d(loss)/d(output). Adds gamma times the
/// orthogonality penalty gradient to every P and Q gradient.
Gradients model_backward(const ToyModel& model, const ForwardCache& cache, const Matrix& output_grad,
                         double gamma);

/// Flattened P, lambda, Q gradient of one layer, matching flatten_trainables.
std::vector<double> flatten_adapter_gradient(const LayerGradients& grads);

} // namespace flexrank
