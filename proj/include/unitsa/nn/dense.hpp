#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "unitsa/nn/tensor.hpp"
#include "unitsa/rng.hpp"

namespace unitsa::nn {

/// Low-rank additive path of a dense layer: z += scale * A (B^T x), with
/// A: out x rank and B: in x rank.
struct LoraSlot {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t rank = 0;
  double alpha = 1.0;

  double scale() const { return alpha / static_cast<double>(rank); }
};

/// y = W x + b. W is stored [out][in]. Parameters live in a ParameterStore
/// and are addressed by index, so a layer is a cheap value type.
struct Dense {
  std::size_t weight = 0;
  std::size_t bias = 0;
  bool has_bias = true;
  std::size_t in = 0;
  std::size_t out = 0;
  std::string name;
  std::optional<LoraSlot> lora;

  template <typename T>
  static Dense create(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                      bool with_bias = true) {
    Dense d;
    d.name = name;
    d.in = in;
    d.out = out;
    d.weight = store.add(name + ".weight", {out, in});
    d.has_bias = with_bias;
    if (with_bias) d.bias = store.add(name + ".bias", {out});
    return d;
  }

  /// Zero-mean Gaussian weights with variance 1 / fan_in, zero bias.
  template <typename T>
  void init(ParameterStore<T>& store, Rng& rng) const {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& w : store[weight].value.values) w = static_cast<T>(rng.normal(0.0, stddev));
    if (has_bias) std::fill(store[bias].value.values.begin(), store[bias].value.values.end(), T{});
  }

  /// `lora_scratch` receives B^T x when an adapter is attached.
  template <typename T>
  void forward(const ParameterStore<T>& store, const T* x, T* y, std::vector<T>* lora_scratch = nullptr) const {
    const T* w = store[weight].value.data();
    for (std::size_t o = 0; o < out; ++o) {
      const T* row = w + o * in;
      // Four independent partial sums; the summation order is fixed.
      T p0{}, p1{}, p2{}, p3{};
      std::size_t i = 0;
      for (; i + 4 <= in; i += 4) {
        p0 += row[i] * x[i];
        p1 += row[i + 1] * x[i + 1];
        p2 += row[i + 2] * x[i + 2];
        p3 += row[i + 3] * x[i + 3];
      }
      for (; i < in; ++i) p0 += row[i] * x[i];
      T acc = (p0 + p1) + (p2 + p3);
      if (has_bias) acc += store[bias].value[o];
      y[o] = acc;
    }
    if (lora) {
      std::vector<T> local;
      std::vector<T>& u = lora_scratch ? *lora_scratch : local;
      const std::size_t r = lora->rank;
      u.assign(r, T{});
      const T* b = store[lora->b].value.data();
      for (std::size_t i = 0; i < in; ++i) {
        const T xi = x[i];
        for (std::size_t k = 0; k < r; ++k) u[k] += b[i * r + k] * xi;
      }
      const T* a = store[lora->a].value.data();
      const T s = static_cast<T>(lora->scale());
      for (std::size_t o = 0; o < out; ++o) {
        T acc{};
        for (std::size_t k = 0; k < r; ++k) acc += a[o * r + k] * u[k];
        y[o] += s * acc;
      }
    }
  }

  /// Accumulates parameter gradients (trainable tensors only) and, when
  /// `dx` is non-null, adds the input gradient to it.
  template <typename T>
  void backward(ParameterStore<T>& store, const T* x, const T* dy, std::type_identity_t<T>* dx,
                const std::vector<T>* lora_scratch = nullptr) const {
    auto& W = store[weight];
    if (W.trainable) {
      T* gw = W.grad.data();
      for (std::size_t o = 0; o < out; ++o) {
        const T g = dy[o];
        if (g == T{}) continue;
        T* row = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += g * x[i];
      }
    }
    if (has_bias && store[bias].trainable) {
      T* gb = store[bias].grad.data();
      for (std::size_t o = 0; o < out; ++o) gb[o] += dy[o];
    }
    if (dx) {
      const T* w = W.value.data();
      for (std::size_t o = 0; o < out; ++o) {
        const T g = dy[o];
        if (g == T{}) continue;
        const T* row = w + o * in;
        for (std::size_t i = 0; i < in; ++i) dx[i] += g * row[i];
      }
    }
    if (lora) {
      const std::size_t r = lora->rank;
      const T s = static_cast<T>(lora->scale());
      std::vector<T> u_local;
      if (!lora_scratch) {
        u_local.assign(r, T{});
        const T* b = store[lora->b].value.data();
        for (std::size_t i = 0; i < in; ++i) {
          for (std::size_t k = 0; k < r; ++k) u_local[k] += b[i * r + k] * x[i];
        }
      }
      const std::vector<T>& u = lora_scratch ? *lora_scratch : u_local;
      auto& A = store[lora->a];
      auto& B = store[lora->b];
      // du = s * A^T dy
      std::vector<T> du(r, T{});
      for (std::size_t o = 0; o < out; ++o) {
        const T g = s * dy[o];
        for (std::size_t k = 0; k < r; ++k) du[k] += A.value[o * r + k] * g;
      }
      if (A.trainable) {
        for (std::size_t o = 0; o < out; ++o) {
          const T g = s * dy[o];
          for (std::size_t k = 0; k < r; ++k) A.grad[o * r + k] += g * u[k];
        }
      }
      if (B.trainable) {
        for (std::size_t i = 0; i < in; ++i) {
          for (std::size_t k = 0; k < r; ++k) B.grad[i * r + k] += x[i] * du[k];
        }
      }
      if (dx) {
        for (std::size_t i = 0; i < in; ++i) {
          T acc{};
          for (std::size_t k = 0; k < r; ++k) acc += B.value[i * r + k] * du[k];
          dx[i] += acc;
        }
      }
    }
  }

  /// True if any tensor this layer reads is trainable.
  template <typename T>
  bool any_trainable(const ParameterStore<T>& store) const {
    bool t = store[weight].trainable || (has_bias && store[bias].trainable);
    if (lora) t = t || store[lora->a].trainable || store[lora->b].trainable;
    return t;
  }
};

}  // namespace unitsa::nn
