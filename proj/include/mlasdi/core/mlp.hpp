// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlasdi/core/dense_matrix.hpp"
#include "mlasdi/error.hpp"

namespace mlasdi {

enum class Activation { tanh, sine, identity };

constexpr std::string_view activation_name(Activation a) noexcept {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::sine: return "sine";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "sine") return Activation::sine;
  if (name == "identity") return Activation::identity;
  fail(ErrorKind::format, "unknown activation '" + std::string(name) + "'");
}

/// A named mutable view of one trainable parameter block.
struct ParamBlock {
  std::string name;
  std::span<double> values;
};

/// A named read-only view of one gradient block.
struct GradBlock {
  std::string name;
  std::span<const double> values;
};

struct DenseLayer {
  DenseMatrix weight;  // (out, in)
  std::vector<double> bias;
  Activation activation = Activation::identity;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Per-layer inputs and pre-activations recorded by a forward pass.
struct ForwardCache {
  std::vector<DenseMatrix> inputs;
  std::vector<DenseMatrix> preactivations;
  DenseMatrix output;
};

struct LayerGradient {
  DenseMatrix weight;
  std::vector<double> bias;
};

struct MlpGradients {
  std::vector<LayerGradient> layers;
  DenseMatrix input;

  std::vector<GradBlock> blocks(std::string_view prefix = "") const {
    std::vector<GradBlock> out;
    out.reserve(2 * layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string base = std::string(prefix) + "layer" + std::to_string(i);
      out.push_back({base + ".weight", layers[i].weight.values()});
      out.push_back({base + ".bias", layers[i].bias});
    }
    return out;
  }
};

namespace detail {

inline double activate(Activation a, double x) noexcept {
  switch (a) {
    case Activation::tanh: return std::tanh(x);
    case Activation::sine: return std::sin(x);
    case Activation::identity: return x;
  }
  return x;
}

inline double activate_derivative(Activation a, double pre, double post) noexcept {
  switch (a) {
    case Activation::tanh: return 1.0 - post * post;
    case Activation::sine: return std::cos(pre);
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

}  // namespace detail

/// Fully connected network with float64 weights and per-layer activations.
///
/// Layer i maps layer_dims[i] -> layer_dims[i+1] as act(W x + b). The last
/// layer is always identity so outputs are unconstrained.
class MlpNetwork {
 public:
  MlpNetwork() = default;

  /// Zero-initialized network.
  MlpNetwork(std::vector<std::size_t> layer_dims, std::vector<Activation> activations) {
    if (layer_dims.size() < 2) fail(ErrorKind::shape, "network needs at least input and output dims");
    if (activations.size() != layer_dims.size() - 1) {
      fail(ErrorKind::shape, "expected " + std::to_string(layer_dims.size() - 1) +
                                 " activations, got " + std::to_string(activations.size()));
    }
    if (activations.back() != Activation::identity) {
      fail(ErrorKind::shape, "final layer activation must be identity");
    }
    for (std::size_t d : layer_dims) {
      if (d == 0) fail(ErrorKind::shape, "layer dimension must be positive");
    }
    layers_.reserve(activations.size());
    for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) {
      layers_.push_back({DenseMatrix(layer_dims[i + 1], layer_dims[i]),
                         std::vector<double>(layer_dims[i + 1], 0.0), activations[i]});
    }
  }

  /// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  template <class Rng>
  static MlpNetwork initialized(std::vector<std::size_t> layer_dims,
                                std::vector<Activation> activations, Rng& rng) {
    MlpNetwork net(std::move(layer_dims), std::move(activations));
    for (auto& layer : net.layers_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& w : layer.weight.values()) w = dist(rng);
      for (double& b : layer.bias) b = dist(rng);
    }
    return net;
  }

  /// Layers with the given widths; hidden activations are given by `hidden_activation(i)`.
  template <class HiddenAct>
  static std::vector<Activation> activations_for(std::size_t n_layers, HiddenAct hidden_activation) {
    std::vector<Activation> acts;
    for (std::size_t i = 0; i + 1 < n_layers; ++i) acts.push_back(hidden_activation(i));
    acts.push_back(Activation::identity);
    return acts;
  }

  std::size_t input_dim() const noexcept { return layers_.empty() ? 0 : layers_.front().weight.cols(); }
  std::size_t output_dim() const noexcept { return layers_.empty() ? 0 : layers_.back().weight.rows(); }
  std::size_t num_layers() const noexcept { return layers_.size(); }

  std::vector<std::size_t> layer_dims() const {
    std::vector<std::size_t> dims;
    if (layers_.empty()) return dims;
    dims.push_back(input_dim());
    for (const auto& l : layers_) dims.push_back(l.weight.rows());
    return dims;
  }

  std::vector<Activation> activations() const {
    std::vector<Activation> acts;
    for (const auto& l : layers_) acts.push_back(l.activation);
    return acts;
  }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  std::vector<ParamBlock> parameter_blocks(std::string_view prefix = "") {
    std::vector<ParamBlock> out;
    out.reserve(2 * layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string base = std::string(prefix) + "layer" + std::to_string(i);
      out.push_back({base + ".weight", layers_[i].weight.values()});
      out.push_back({base + ".bias", layers_[i].bias});
    }
    return out;
  }

  DenseMatrix forward(const DenseMatrix& batch) const {
    check_input(batch);
    DenseMatrix x = batch;
    for (const auto& layer : layers_) {
      DenseMatrix y = affine(layer, x);
      for (double& v : y.values()) v = detail::activate(layer.activation, v);
      x = std::move(y);
    }
    return x;
  }

  ForwardCache forward_cached(const DenseMatrix& batch) const {
    check_input(batch);
    ForwardCache cache;
    cache.inputs.reserve(layers_.size());
    cache.preactivations.reserve(layers_.size());
    DenseMatrix x = batch;
    for (const auto& layer : layers_) {
      DenseMatrix pre = affine(layer, x);
      DenseMatrix post = pre;
      for (double& v : post.values()) v = detail::activate(layer.activation, v);
      cache.inputs.push_back(std::move(x));
      cache.preactivations.push_back(std::move(pre));
      x = std::move(post);
    }
    cache.output = std::move(x);
    return cache;
  }

  /// Reverse-mode gradients of sum(upstream .* forward(batch)).
  MlpGradients backward(const ForwardCache& cache, const DenseMatrix& upstream) const {
    if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols()) {
      fail(ErrorKind::shape, "upstream gradient " + upstream.shape_string() +
                                 " does not match network output " + cache.output.shape_string());
    }
    MlpGradients grads;
    grads.layers.resize(layers_.size());
    DenseMatrix delta = upstream;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& layer = layers_[li];
      const DenseMatrix& pre = cache.preactivations[li];
      const DenseMatrix& post = li + 1 < layers_.size() ? cache.inputs[li + 1] : cache.output;
      if (layer.activation != Activation::identity) {
        auto d = delta.values();
        auto p = pre.values();
        auto q = post.values();
        for (std::size_t i = 0; i < d.size(); ++i) {
          d[i] *= detail::activate_derivative(layer.activation, p[i], q[i]);
        }
      }
      const DenseMatrix& x = cache.inputs[li];
      const std::size_t batch = x.rows();
      const std::size_t in = layer.weight.cols();
      const std::size_t out = layer.weight.rows();

      LayerGradient& g = grads.layers[li];
      g.weight = DenseMatrix(out, in);
      g.bias.assign(out, 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        auto drow = delta.row(b);
        auto xrow = x.row(b);
        for (std::size_t o = 0; o < out; ++o) {
          const double dv = drow[o];
          if (dv == 0.0) continue;
          g.bias[o] += dv;
          auto wrow = g.weight.row(o);
          for (std::size_t k = 0; k < in; ++k) wrow[k] += dv * xrow[k];
        }
      }

      DenseMatrix dx(batch, in);
      for (std::size_t b = 0; b < batch; ++b) {
        auto drow = delta.row(b);
        auto dxrow = dx.row(b);
        for (std::size_t o = 0; o < out; ++o) {
          const double dv = drow[o];
          if (dv == 0.0) continue;
          auto wrow = layer.weight.row(o);
          for (std::size_t k = 0; k < in; ++k) dxrow[k] += dv * wrow[k];
        }
      }
      delta = std::move(dx);
    }
    grads.input = std::move(delta);
    return grads;
  }

  friend bool operator==(const MlpNetwork&, const MlpNetwork&) = default;

 private:
  void check_input(const DenseMatrix& batch) const {
    if (layers_.empty()) fail(ErrorKind::shape, "network has no layers");
    if (batch.cols() != input_dim()) {
      fail(ErrorKind::shape, "batch " + batch.shape_string() + " does not match network input dim " +
                                 std::to_string(input_dim()) + " (first weight " +
                                 layers_.front().weight.shape_string() + ")");
    }
  }

  static DenseMatrix affine(const DenseLayer& layer, const DenseMatrix& x) {
    const std::size_t batch = x.rows();
    const std::size_t in = layer.weight.cols();
    const std::size_t out = layer.weight.rows();
    DenseMatrix y(batch, out);
    for (std::size_t b = 0; b < batch; ++b) {
      auto xrow = x.row(b);
      auto yrow = y.row(b);
      for (std::size_t o = 0; o < out; ++o) {
        auto wrow = layer.weight.row(o);
        double acc = layer.bias[o];
        for (std::size_t k = 0; k < in; ++k) acc += wrow[k] * xrow[k];
        yrow[o] = acc;
      }
    }
    return y;
  }

  std::vector<DenseLayer> layers_;
};

/// Runs forward and backward in one call.
inline MlpGradients backward(const MlpNetwork& net, const DenseMatrix& batch, const DenseMatrix& upstream) {
  return net.backward(net.forward_cached(batch), upstream);
}

/// Rejects encoder/decoder pairs whose bottleneck dims disagree.
inline void check_composable(const MlpNetwork& first, const MlpNetwork& second) {
  if (first.output_dim() != second.input_dim()) {
    fail(ErrorKind::shape, "cannot compose networks: output dim " + std::to_string(first.output_dim()) +
                               " != input dim " + std::to_string(second.input_dim()));
  }
}

}  // namespace mlasdi
