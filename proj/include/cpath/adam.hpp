#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "cpath/diffcore.hpp"

namespace cpath {

struct AdamParams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a stack of layers.
class AdamState {
 public:
  AdamState(std::span<const LayerParams> layers, AdamParams params)
      : params_(params), m_(detail::zero_grads(layers)), v_(detail::zero_grads(layers)) {}

  void step(std::span<LayerParams> layers, std::span<const LayerGrad> grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
    for (std::size_t li = 0; li < layers.size(); ++li) {
      update(layers[li].weights, grads[li].weights, m_[li].weights, v_[li].weights, c1, c2);
      update(layers[li].bias, grads[li].bias, m_[li].bias, v_[li].bias, c1, c2);
    }
  }

  long steps() const { return t_; }

 private:
  void update(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, double c1,
              double c2) const {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = params_.beta1 * m[i] + (1.0 - params_.beta1) * g[i];
      v[i] = params_.beta2 * v[i] + (1.0 - params_.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= params_.learning_rate * mhat / (std::sqrt(vhat) + params_.eps);
    }
  }

  AdamParams params_;
  std::vector<LayerGrad> m_;
  std::vector<LayerGrad> v_;
  long t_ = 0;
};

}  // namespace cpath
