#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cpath/adam.hpp"
#include "cpath/dataset.hpp"
#include "cpath/diffcore.hpp"
#include "cpath/error.hpp"

namespace cpath {

struct MlpSpec {
  std::vector<std::size_t> layer_dims;  // input dim first, class count last
  std::uint64_t seed = 0;
};

/// Feed-forward classifier. Hidden layers use ReLU, the last layer emits logits.
///
/// Layer index l names a representation space: l = 0 is the raw input and
/// l = h is the output of hidden layer h, for 1 <= h <= hidden_layers().
struct MlpModel {
  std::vector<LayerParams> layers;

  std::size_t num_layers() const { return layers.size(); }
  std::size_t hidden_layers() const { return layers.size() - 1; }
  std::size_t class_count() const { return layers.back().out_dim(); }
  std::size_t input_dim() const { return layers.front().in_dim(); }

  /// Dimension of the representation at layer index l.
  std::size_t dim_at(std::size_t l) const {
    check_layer_index(l);
    return l == 0 ? input_dim() : layers[l - 1].out_dim();
  }

  void check_layer_index(std::size_t l) const {
    if (l > hidden_layers()) {
      throw ContractError("layer index " + std::to_string(l) + " out of range [0, " +
                          std::to_string(hidden_layers()) + "]");
    }
  }

  std::span<const LayerParams> head(std::size_t l) const {
    return std::span<const LayerParams>(layers).first(l);
  }
  std::span<const LayerParams> tail(std::size_t l) const {
    return std::span<const LayerParams>(layers).subspan(l);
  }

  void validate() const {
    if (layers.empty()) throw ContractError("model has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].validate();
      if (i > 0 && layers[i].in_dim() != layers[i - 1].out_dim()) {
        throw DimensionError("layer " + std::to_string(i) + " input dim " +
                             std::to_string(layers[i].in_dim()) +
                             " does not chain with previous output dim " +
                             std::to_string(layers[i - 1].out_dim()));
      }
    }
  }
};

inline bool bitwise_equal(const MlpModel& a, const MlpModel& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].activation != b.layers[i].activation ||
        !bitwise_equal(a.layers[i].weights, b.layers[i].weights) ||
        !bitwise_equal(a.layers[i].bias, b.layers[i].bias)) {
      return false;
    }
  }
  return true;
}

/// Builds a layer stack with N(0, 1/in_dim) weights and zero biases.
/// `final_activation` applies to the last layer only.
inline std::vector<LayerParams> init_layers(std::span<const std::size_t> dims,
                                            std::uint64_t seed,
                                            Activation final_activation) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<LayerParams> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::size_t in = dims[i];
    const std::size_t out = dims[i + 1];
    LayerParams l;
    l.weights = Tensor({out, in});
    l.bias = Tensor::zeros(out);
    l.activation = i + 2 == dims.size() ? final_activation : Activation::relu;
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : l.weights.data()) w = scale * gauss(rng);
    layers.push_back(std::move(l));
  }
  return layers;
}

inline MlpModel init_model(const MlpSpec& spec) {
  if (spec.layer_dims.size() < 2) {
    throw ContractError("MlpSpec needs at least input and class dims");
  }
  if (std::any_of(spec.layer_dims.begin(), spec.layer_dims.end(),
                  [](std::size_t d) { return d == 0; })) {
    throw ContractError("MlpSpec dims must be positive");
  }
  if (spec.layer_dims.back() < 2) throw ContractError("MlpSpec needs at least 2 classes");
  return MlpModel{init_layers(spec.layer_dims, spec.seed, Activation::identity)};
}

inline Tensor logits(const MlpModel& model, const Tensor& x) {
  return forward(model.layers, x);
}

/// z^l: activations after hidden layer l (l = 0 returns x).
inline Tensor latent(const MlpModel& model, const Tensor& x, std::size_t layer_index) {
  model.check_layer_index(layer_index);
  if (x.rank() != 1 || x.size() != model.input_dim()) {
    throw DimensionError("latent: input " + Tensor::shape_string(x.shape()) +
                         " vs model input dim " + std::to_string(model.input_dim()));
  }
  return forward(model.head(layer_index), x);
}

/// Logits from a representation at layer index l (the remaining layers only).
inline Tensor partial_forward(const MlpModel& model, const Tensor& z,
                              std::size_t layer_index) {
  model.check_layer_index(layer_index);
  if (z.rank() != 1 || z.size() != model.dim_at(layer_index)) {
    throw DimensionError("partial_forward: representation " +
                         Tensor::shape_string(z.shape()) + " vs layer " +
                         std::to_string(layer_index) + " dim " +
                         std::to_string(model.dim_at(layer_index)));
  }
  return forward(model.tail(layer_index), z);
}

struct Prediction {
  ClassIndex label;
  Tensor probs;
};

inline Prediction predict_logits(const Tensor& logits) {
  Tensor p = softmax_probs(logits);
  return {argmax(logits), std::move(p)};
}

inline Prediction predict(const MlpModel& model, const Tensor& x) {
  if (x.rank() != 1 || x.size() != model.input_dim()) {
    throw DimensionError("predict: input " + Tensor::shape_string(x.shape()) +
                         " vs model input dim " + std::to_string(model.input_dim()));
  }
  return predict_logits(logits(model, x));
}

inline double accuracy(const MlpModel& model, const Dataset& data) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predict(model, data.points[i]).label == data.labels[i]) ++hits;
  }
  return data.size() ? static_cast<double>(hits) / static_cast<double>(data.size()) : 0.0;
}

inline double mean_loss(const MlpModel& model, const Dataset& data) {
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    s += cross_entropy(logits(model, data.points[i]), data.labels[i]);
  }
  return s / static_cast<double>(data.size());
}

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 200;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0.0) || batch_size == 0 || epochs == 0 ||
        !(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
        !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
      throw ContractError("invalid training configuration");
    }
  }
  AdamParams adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }
};

/// Mini-batch Adam loop shared by classifier and decoder training.
/// `batch_grad(indices)` returns the mean loss and parameter gradients of
/// one batch. Returns the per-epoch mean batch loss.
/// `on_epoch(epoch)` runs after the last update of each epoch.
template <class BatchGrad, class OnEpoch = void (*)(std::size_t)>
std::vector<double> adam_epochs(std::vector<LayerParams>& layers, std::size_t sample_count,
                                const TrainConfig& cfg, BatchGrad&& batch_grad,
                                OnEpoch&& on_epoch = [](std::size_t) {}) {
  cfg.validate();
  if (sample_count == 0) throw ContractError("training on an empty dataset");
  std::mt19937_64 rng(cfg.seed);
  AdamState adam(layers, cfg.adam());
  std::vector<std::size_t> order(sample_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> trace;
  trace.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    for (std::size_t start = 0; start < sample_count; start += cfg.batch_size) {
      const std::size_t stop = std::min(sample_count, start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      GradResult g = batch_grad(idx);
      if (!std::isfinite(g.loss)) {
        throw TrainingError("loss diverged (non-finite) in epoch " + std::to_string(epoch));
      }
      weighted += g.loss * static_cast<double>(idx.size());
      adam.step(layers, *g.grad_params);
    }
    const double epoch_loss = weighted / static_cast<double>(sample_count);
    if (!std::isfinite(epoch_loss)) {
      throw TrainingError("loss diverged (non-finite) in epoch " + std::to_string(epoch));
    }
    trace.push_back(epoch_loss);
    on_epoch(epoch);
  }
  return trace;
}

struct TrainResult {
  MlpModel model;
  std::vector<double> loss_trace;
};

inline TrainResult train_adam(const MlpModel& model, const Dataset& data,
                              const TrainConfig& cfg) {
  model.validate();
  if (data.size() == 0) throw ContractError("train_adam: empty dataset");
  if (data.points.front().size() != model.input_dim()) {
    throw DimensionError("train_adam: data dim " + std::to_string(data.points.front().size()) +
                         " vs model input dim " + std::to_string(model.input_dim()));
  }
  TrainResult r{model, {}};
  std::vector<const Tensor*> xs;
  r.loss_trace = adam_epochs(r.model.layers, data.size(), cfg,
                             [&](std::span<const std::size_t> idx) {
                               xs.clear();
                               for (std::size_t i : idx) xs.push_back(&data.points[i]);
                               return batch_param_grad(
                                   r.model.layers, xs, [&](std::size_t j) {
                                     return CrossEntropyHead{data.labels[idx[j]]};
                                   });
                             });
  return r;
}

}  // namespace cpath
