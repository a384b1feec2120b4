#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpath/error.hpp"
#include "cpath/tensor.hpp"

namespace cpath {

enum class Activation : std::uint8_t { identity = 0, relu = 1 };

inline const char* activation_name(Activation a) {
  return a == Activation::relu ? "relu" : "identity";
}

/// One affine layer y = act(W x + b). `weights` is out_dim x in_dim.
struct LayerParams {
  Tensor weights;
  Tensor bias;
  Activation activation = Activation::identity;

  std::size_t out_dim() const { return weights.shape().at(0); }
  std::size_t in_dim() const { return weights.shape().at(1); }

  void validate() const {
    if (weights.rank() != 2 || bias.rank() != 1 ||
        bias.shape()[0] != weights.shape()[0]) {
      throw DimensionError("layer weights " + Tensor::shape_string(weights.shape()) +
                           " inconsistent with bias " +
                           Tensor::shape_string(bias.shape()));
    }
  }
};

struct LayerGrad {
  Tensor weights;
  Tensor bias;
};

struct GradResult {
  double loss = 0.0;
  Tensor grad_input;
  std::optional<std::vector<LayerGrad>> grad_params;
};

using ClassIndex = std::size_t;

inline Tensor forward_affine(const Tensor& x, const LayerParams& layer) {
  layer.validate();
  if (x.rank() != 1 || x.size() != layer.in_dim()) {
    throw DimensionError("forward_affine: input " + Tensor::shape_string(x.shape()) +
                         " vs weights " + Tensor::shape_string(layer.weights.shape()));
  }
  const std::size_t rows = layer.out_dim();
  const std::size_t cols = layer.in_dim();
  Tensor y = Tensor::zeros(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = layer.bias[r];
    for (std::size_t c = 0; c < cols; ++c) s += layer.weights.at(r, c) * x[c];
    if (layer.activation == Activation::relu && !(s > 0.0)) s = 0.0;
    y[r] = s;
  }
  return y;
}

/// Applies `layers` in order. latent, partial_forward and logits all call this.
inline Tensor forward(std::span<const LayerParams> layers, const Tensor& x) {
  Tensor h = x;
  for (const LayerParams& layer : layers) h = forward_affine(h, layer);
  return h;
}

inline Tensor softmax_probs(const Tensor& logits) {
  if (logits.rank() != 1 || logits.size() < 2) {
    throw ContractError("softmax_probs: need at least 2 logits, got shape " +
                        Tensor::shape_string(logits.shape()));
  }
  const double m = *std::max_element(logits.data().begin(), logits.data().end());
  Tensor p = Tensor::zeros(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - m);
    z += p[k];
  }
  for (std::size_t k = 0; k < p.size(); ++k) p[k] /= z;
  return p;
}

/// Index of the largest entry; ties go to the lowest index.
inline ClassIndex argmax(const Tensor& v) {
  ClassIndex best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

namespace detail {

inline double log_sum_exp(const Tensor& logits) {
  const double m = *std::max_element(logits.data().begin(), logits.data().end());
  double s = 0.0;
  for (double v : logits.data()) s += std::exp(v - m);
  return m + std::log(s);
}

inline void check_target(const Tensor& logits, ClassIndex target) {
  if (logits.rank() != 1 || logits.size() < 2) {
    throw ContractError("cross_entropy: need at least 2 logits");
  }
  if (target >= logits.size()) {
    throw ContractError("cross_entropy: target " + std::to_string(target) +
                        " out of range for " + std::to_string(logits.size()) +
                        " classes");
  }
}

}  // namespace detail

inline double cross_entropy(const Tensor& logits, ClassIndex target) {
  detail::check_target(logits, target);
  const double loss = detail::log_sum_exp(logits) - logits[target];
  return loss < 0.0 ? 0.0 : loss;  // NaN passes through
}

/// Loss heads: value and gradient with respect to the network output.
struct CrossEntropyHead {
  ClassIndex target;
  double operator()(const Tensor& logits, Tensor& grad_out) const {
    const double loss = cross_entropy(logits, target);
    grad_out = softmax_probs(logits);
    grad_out[target] -= 1.0;
    return loss;
  }
};

/// Mean squared error averaged over output coordinates.
struct MseHead {
  const Tensor* reference;
  double operator()(const Tensor& out, Tensor& grad_out) const {
    Tensor::require_same_shape(out, *reference, "mse");
    const double n = static_cast<double>(out.size());
    grad_out = Tensor::zeros(out.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = out[i] - (*reference)[i];
      loss += d * d;
      grad_out[i] = 2.0 * d / n;
    }
    return loss / n;
  }
};

inline double mean_squared_error(const Tensor& out, const Tensor& reference) {
  Tensor g;
  return MseHead{&reference}(out, g);
}

namespace detail {

inline std::vector<LayerGrad> zero_grads(std::span<const LayerParams> layers) {
  std::vector<LayerGrad> grads;
  grads.reserve(layers.size());
  for (const LayerParams& l : layers) {
    grads.push_back({Tensor(l.weights.shape()), Tensor(l.bias.shape())});
  }
  return grads;
}

// Forward with cached layer inputs and outputs, then backward from the head.
// Parameter gradients are accumulated with weight `scale` when `accum` is set.
template <class Head>
double backprop_sample(std::span<const LayerParams> layers, const Tensor& x,
                       const Head& head, Tensor* grad_input,
                       std::vector<LayerGrad>* accum, double scale) {
  if (layers.empty()) throw ContractError("backprop: empty layer list");
  std::vector<Tensor> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(x);
  for (const LayerParams& layer : layers) acts.push_back(forward_affine(acts.back(), layer));

  Tensor delta;
  const double loss = head(acts.back(), delta);

  for (std::size_t li = layers.size(); li-- > 0;) {
    const LayerParams& layer = layers[li];
    const Tensor& out = acts[li + 1];
    const Tensor& in = acts[li];
    if (layer.activation == Activation::relu) {
      for (std::size_t r = 0; r < delta.size(); ++r) {
        if (!(out[r] > 0.0)) delta[r] = 0.0;
      }
    }
    if (accum) {
      LayerGrad& g = (*accum)[li];
      for (std::size_t r = 0; r < layer.out_dim(); ++r) {
        const double d = scale * delta[r];
        g.bias[r] += d;
        for (std::size_t c = 0; c < layer.in_dim(); ++c) g.weights.at(r, c) += d * in[c];
      }
    }
    if (li == 0 && !grad_input) break;
    Tensor prev = Tensor::zeros(layer.in_dim());
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      for (std::size_t c = 0; c < layer.in_dim(); ++c) prev[c] += layer.weights.at(r, c) * d;
    }
    delta = std::move(prev);
  }
  if (grad_input) *grad_input = std::move(delta);
  return loss;
}

inline void check_input(std::span<const LayerParams> layers, const Tensor& x) {
  if (layers.empty()) throw ContractError("empty layer list");
  if (x.rank() != 1 || x.size() != layers.front().in_dim()) {
    throw DimensionError("input " + Tensor::shape_string(x.shape()) +
                         " does not match first layer weights " +
                         Tensor::shape_string(layers.front().weights.shape()));
  }
}

}  // namespace detail

/// Gradient of cross_entropy(forward(layers, z), target) with respect to z.
inline GradResult grad_wrt_input(std::span<const LayerParams> layers,
                                 const Tensor& z, ClassIndex target) {
  detail::check_input(layers, z);
  GradResult r;
  r.loss = detail::backprop_sample(layers, z, CrossEntropyHead{target},
                                   &r.grad_input, nullptr, 1.0);
  return r;
}

struct LabeledPoint {
  Tensor x;
  ClassIndex label;
};

/// Mean-over-batch gradient of the loss produced by `head_for(i)` on
/// `inputs[i]`, with respect to every weight and bias.
template <class HeadFor>
GradResult batch_param_grad(std::span<const LayerParams> layers,
                            std::span<const Tensor* const> inputs,
                            HeadFor&& head_for) {
  if (inputs.empty()) throw ContractError("grad_wrt_params: empty batch");
  const double scale = 1.0 / static_cast<double>(inputs.size());
  GradResult r;
  r.grad_params = detail::zero_grads(layers);
  r.grad_input = Tensor::zeros(layers.front().in_dim());
  double total = 0.0;
  Tensor gi;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    detail::check_input(layers, *inputs[i]);
    total += detail::backprop_sample(layers, *inputs[i], head_for(i), &gi,
                                     &*r.grad_params, scale);
    r.grad_input.axpy(scale, gi);
  }
  r.loss = total * scale;
  return r;
}

/// Mean cross-entropy gradients over a labelled batch. `grad_input` holds the
/// batch-mean input gradient.
inline GradResult grad_wrt_params(std::span<const LayerParams> layers,
                                  std::span<const LabeledPoint> batch) {
  std::vector<const Tensor*> xs;
  xs.reserve(batch.size());
  for (const LabeledPoint& p : batch) xs.push_back(&p.x);
  return batch_param_grad(layers, xs,
                          [&](std::size_t i) { return CrossEntropyHead{batch[i].label}; });
}

/// Central finite differences, one coordinate at a time.
inline Tensor fd_gradient(const std::function<double(const Tensor&)>& f,
                          const Tensor& z, double eps) {
  if (!(eps > 0.0)) throw ContractError("fd_gradient: eps must be positive");
  Tensor g(z.shape());
  Tensor probe = z;
  for (std::size_t i = 0; i < z.size(); ++i) {
    probe[i] = z[i] + eps;
    const double up = f(probe);
    probe[i] = z[i] - eps;
    const double down = f(probe);
    probe[i] = z[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("fd_gradient: non-finite evaluation at coordinate " +
                         std::to_string(i));
    }
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||); zero when both vanish.
inline double relative_l2_error(const Tensor& a, const Tensor& b) {
  const double scale = std::max(norm(a), norm(b));
  if (scale == 0.0) return 0.0;
  return norm(a - b) / scale;
}

/// Parameters flattened layer by layer (weights then bias).
inline Tensor flatten_params(std::span<const LayerParams> layers) {
  std::vector<double> flat;
  for (const LayerParams& l : layers) {
    flat.insert(flat.end(), l.weights.data().begin(), l.weights.data().end());
    flat.insert(flat.end(), l.bias.data().begin(), l.bias.data().end());
  }
  return Tensor::vector(std::move(flat));
}

inline Tensor flatten_grads(std::span<const LayerGrad> grads) {
  std::vector<double> flat;
  for (const LayerGrad& g : grads) {
    flat.insert(flat.end(), g.weights.data().begin(), g.weights.data().end());
    flat.insert(flat.end(), g.bias.data().begin(), g.bias.data().end());
  }
  return Tensor::vector(std::move(flat));
}

/// Inverse of flatten_params, using `shape_like` for layer shapes.
inline std::vector<LayerParams> unflatten_params(std::span<const LayerParams> shape_like,
                                                 const Tensor& flat) {
  std::vector<LayerParams> out(shape_like.begin(), shape_like.end());
  std::size_t k = 0;
  for (LayerParams& l : out) {
    for (double& v : l.weights.data()) v = flat[k++];
    for (double& v : l.bias.data()) v = flat[k++];
  }
  if (k != flat.size()) throw DimensionError("unflatten_params: length mismatch");
  return out;
}

}  // namespace cpath
