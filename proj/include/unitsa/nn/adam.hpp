#pragma once

#include <cmath>
#include <vector>

#include "unitsa/nn/tensor.hpp"

namespace unitsa::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; <= 0 disables.
  double max_grad_norm = 0.0;
};

/// Adam over the trainable tensors of a ParameterStore. Frozen tensors are
/// never written.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  /// Returns the pre-clip global gradient norm over trainable tensors.
  double step(ParameterStore<T>& store) {
    if (m_.size() != store.size()) {
      m_.assign(store.size(), {});
      v_.assign(store.size(), {});
    }
    double norm_sq = 0.0;
    for (const auto& e : store) {
      if (!e.trainable) continue;
      for (T g : e.grad.values) norm_sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(norm_sq);
    double clip = 1.0;
    if (config_.max_grad_norm > 0.0 && norm > config_.max_grad_norm) clip = config_.max_grad_norm / norm;

    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < store.size(); ++p) {
      auto& e = store[p];
      if (!e.trainable) continue;
      auto& m = m_[p];
      auto& v = v_[p];
      if (m.size() != e.value.size()) {
        m.assign(e.value.size(), 0.0);
        v.assign(e.value.size(), 0.0);
      }
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        const double g = static_cast<double>(e.grad[i]) * clip;
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double update = config_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.epsilon);
        e.value[i] = static_cast<T>(static_cast<double>(e.value[i]) - update);
      }
    }
    return norm;
  }

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long long t_ = 0;
};

}  // namespace unitsa::nn
