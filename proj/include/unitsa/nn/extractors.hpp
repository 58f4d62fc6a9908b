#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "unitsa/common.hpp"
#include "unitsa/encoder/state.hpp"
#include "unitsa/nn/dense.hpp"
#include "unitsa/nn/tensor.hpp"

namespace unitsa::nn {

enum class ExtractorKind { Cnn, Rnn, Transformer };

inline std::string_view to_string(ExtractorKind kind) {
  switch (kind) {
    case ExtractorKind::Cnn: return "cnn";
    case ExtractorKind::Rnn: return "rnn";
    case ExtractorKind::Transformer: return "transformer";
  }
  return "?";
}

inline ExtractorKind parse_extractor(std::string_view text) {
  if (text == "cnn") return ExtractorKind::Cnn;
  if (text == "rnn") return ExtractorKind::Rnn;
  if (text == "transformer") return ExtractorKind::Transformer;
  throw ConfigError("extractor: expected cnn|rnn|transformer, got '" + std::string(text) + "'");
}

struct ExtractorConfig {
  ExtractorKind kind = ExtractorKind::Rnn;
  /// Channels of the movement-wise convolution (kernel spans one row).
  std::size_t conv1_channels = 32;
  /// Channels of the junction-wise convolution (kernel spans all rows).
  std::size_t conv2_channels = 32;
  std::size_t rnn_hidden = 64;
  /// Query/key width of the attention block.
  std::size_t attention_dim = 32;
  std::size_t feature_dim = 64;
};

inline constexpr std::size_t kFrames = encoder::kFrames;
inline constexpr std::size_t kRows = sim::kMovements;
inline constexpr std::size_t kCols = encoder::kFeatures;
inline constexpr std::size_t kFrameSize = kRows * kCols;
inline constexpr std::size_t kStateSize = kFrames * kFrameSize;

/// Intermediate values of one forward pass, kept for the backward pass.
template <typename T>
struct ExtractorCache {
  std::vector<T> input;      // CNN: movement-major gather (rows x K*cols); otherwise the raw state
  std::vector<T> conv1_pre;  // per frame (or once for CNN): rows x C1
  std::vector<T> conv1_out;
  std::vector<T> conv2_pre;  // per frame: C2
  std::vector<T> conv2_out;
  std::vector<T> hidden;     // RNN: (K+1) x H, row 0 = h_0 = 0
  std::vector<T> tokens;     // attention: (K+1) x C2, row 0 = class token
  std::vector<T> keys;       // (K+1) x attention_dim
  std::vector<T> values;     // (K+1) x feature_dim
  std::vector<T> query;      // attention_dim, class-token query
  std::vector<T> weights;    // K+1 softmax weights of the class-token query
  /// Smallest |pre-activation| over all ReLUs; gradient checks use it to
  /// avoid instances that straddle a kink.
  double relu_margin = std::numeric_limits<double>::infinity();
};

/// Intersection feature extractor: maps a K x 8 x 8 traffic state to a
/// feature vector of size feature_dim. Three variants share the interface:
///
///  - Cnn: the K frames are input channels; a 1x8 convolution over each
///    movement row, then an 8x1 convolution over the junction, ReLU after
///    each, then a linear map.
///  - Rnn: a weight-shared movement/junction convolution per frame,
///    tanh recurrence over the K frame features, linear output.
///  - Transformer: the same per-frame convolution, a learnable class token
///    prepended, one single-head self-attention block; the class-token row
///    of the attention output is the feature vector.
template <typename T>
class FeatureExtractor {
 public:
  FeatureExtractor() = default;

  FeatureExtractor(ParameterStore<T>& store, const ExtractorConfig& config) : config_(config) {
    const std::size_t c1 = config.conv1_channels;
    const std::size_t c2 = config.conv2_channels;
    switch (config.kind) {
      case ExtractorKind::Cnn:
        conv1_ = Dense::create(store, "extractor.cnn.conv1", kFrames * kCols, c1);
        conv2_ = Dense::create(store, "extractor.cnn.conv2", kRows * c1, c2);
        out_ = Dense::create(store, "extractor.cnn.out", c2, config.feature_dim);
        break;
      case ExtractorKind::Rnn:
        conv1_ = Dense::create(store, "extractor.frame.conv1", kCols, c1);
        conv2_ = Dense::create(store, "extractor.frame.conv2", kRows * c1, c2);
        rnn_input_ = Dense::create(store, "extractor.rnn.input", c2, config.rnn_hidden);
        rnn_hidden_ = Dense::create(store, "extractor.rnn.hidden", config.rnn_hidden, config.rnn_hidden, false);
        out_ = Dense::create(store, "extractor.rnn.out", config.rnn_hidden, config.feature_dim);
        break;
      case ExtractorKind::Transformer:
        conv1_ = Dense::create(store, "extractor.frame.conv1", kCols, c1);
        conv2_ = Dense::create(store, "extractor.frame.conv2", kRows * c1, c2);
        class_token_ = store.add("extractor.attn.class_token", {c2});
        query_ = Dense::create(store, "extractor.attn.query", c2, config.attention_dim, false);
        key_ = Dense::create(store, "extractor.attn.key", c2, config.attention_dim, false);
        value_ = Dense::create(store, "extractor.attn.value", c2, config.feature_dim, false);
        break;
    }
  }

  const ExtractorConfig& config() const { return config_; }
  std::size_t output_dim() const { return config_.feature_dim; }

  void init(ParameterStore<T>& store, Rng& rng) const {
    conv1_.init(store, rng);
    conv2_.init(store, rng);
    switch (config_.kind) {
      case ExtractorKind::Cnn: out_.init(store, rng); break;
      case ExtractorKind::Rnn:
        rnn_input_.init(store, rng);
        rnn_hidden_.init(store, rng);
        out_.init(store, rng);
        break;
      case ExtractorKind::Transformer: {
        const double stddev = 1.0 / std::sqrt(static_cast<double>(config_.conv2_channels));
        for (auto& v : store[class_token_].value.values) v = static_cast<T>(rng.normal(0.0, stddev));
        query_.init(store, rng);
        key_.init(store, rng);
        value_.init(store, rng);
        break;
      }
    }
  }

  bool any_trainable(const ParameterStore<T>& store) const {
    bool t = conv1_.any_trainable(store) || conv2_.any_trainable(store);
    switch (config_.kind) {
      case ExtractorKind::Cnn: t = t || out_.any_trainable(store); break;
      case ExtractorKind::Rnn:
        t = t || rnn_input_.any_trainable(store) || rnn_hidden_.any_trainable(store) || out_.any_trainable(store);
        break;
      case ExtractorKind::Transformer:
        t = t || store[class_token_].trainable || query_.any_trainable(store) || key_.any_trainable(store) ||
            value_.any_trainable(store);
        break;
    }
    return t;
  }

  /// `state` holds kStateSize values laid out [frame][row][feature].
  void forward(const ParameterStore<T>& store, const double* state, ExtractorCache<T>& cache, T* out) const {
    cache.relu_margin = std::numeric_limits<double>::infinity();
    switch (config_.kind) {
      case ExtractorKind::Cnn: forward_cnn(store, state, cache, out); break;
      case ExtractorKind::Rnn: forward_rnn(store, state, cache, out); break;
      case ExtractorKind::Transformer: forward_attention(store, state, cache, out); break;
    }
  }

  void backward(ParameterStore<T>& store, const ExtractorCache<T>& cache, const T* d_out) const {
    switch (config_.kind) {
      case ExtractorKind::Cnn: backward_cnn(store, cache, d_out); break;
      case ExtractorKind::Rnn: backward_rnn(store, cache, d_out); break;
      case ExtractorKind::Transformer: backward_attention(store, cache, d_out); break;
    }
  }

  /// Full (K+1) x (K+1) attention matrix; row 0 is the class-token query.
  std::vector<T> attention_matrix(const ParameterStore<T>& store, const double* state) const {
    if (config_.kind != ExtractorKind::Transformer) throw StateError("attention_matrix: not a transformer extractor");
    ExtractorCache<T> cache;
    std::vector<T> out(config_.feature_dim);
    forward_attention(store, state, cache, out.data());
    const std::size_t n = kFrames + 1;
    const std::size_t dk = config_.attention_dim;
    std::vector<T> matrix(n * n);
    std::vector<T> q(dk);
    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
    for (std::size_t i = 0; i < n; ++i) {
      query_.forward(store, &cache.tokens[i * config_.conv2_channels], q.data());
      std::vector<T> scores(n);
      for (std::size_t j = 0; j < n; ++j) {
        T s{};
        for (std::size_t d = 0; d < dk; ++d) s += q[d] * cache.keys[j * dk + d];
        scores[j] = s * inv_sqrt;
      }
      softmax(scores.data(), &matrix[i * n], n);
    }
    return matrix;
  }

  static void softmax(const T* in, T* out, std::size_t n) {
    T max = in[0];
    for (std::size_t i = 1; i < n; ++i) max = std::max(max, in[i]);
    T sum{};
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::exp(in[i] - max);
      sum += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
  }

 private:
  void relu(const T* pre, T* post, std::size_t n, double& margin) const {
    for (std::size_t i = 0; i < n; ++i) {
      post[i] = pre[i] > T{} ? pre[i] : T{};
      margin = std::min(margin, static_cast<double>(std::abs(pre[i])));
    }
  }

  // Shared movement/junction convolution of one frame into conv2_out[f].
  void forward_frame(const ParameterStore<T>& store, std::size_t f, ExtractorCache<T>& cache) const {
    const std::size_t c1 = config_.conv1_channels;
    const std::size_t c2 = config_.conv2_channels;
    const T* frame = &cache.input[f * kFrameSize];
    T* pre1 = &cache.conv1_pre[f * kRows * c1];
    T* out1 = &cache.conv1_out[f * kRows * c1];
    for (std::size_t r = 0; r < kRows; ++r) conv1_.forward(store, frame + r * kCols, pre1 + r * c1);
    relu(pre1, out1, kRows * c1, cache.relu_margin);
    conv2_.forward(store, out1, &cache.conv2_pre[f * c2]);
    relu(&cache.conv2_pre[f * c2], &cache.conv2_out[f * c2], c2, cache.relu_margin);
  }

  void backward_frame(ParameterStore<T>& store, std::size_t f, const ExtractorCache<T>& cache,
                      const T* d_feature) const {
    const std::size_t c1 = config_.conv1_channels;
    const std::size_t c2 = config_.conv2_channels;
    std::vector<T> d_pre2(c2);
    for (std::size_t i = 0; i < c2; ++i) d_pre2[i] = cache.conv2_pre[f * c2 + i] > T{} ? d_feature[i] : T{};
    std::vector<T> d_out1(kRows * c1, T{});
    const bool need_conv1 = conv1_.any_trainable(store);
    conv2_.backward(store, &cache.conv1_out[f * kRows * c1], d_pre2.data(), need_conv1 ? d_out1.data() : nullptr);
    if (!need_conv1) return;
    const T* pre1 = &cache.conv1_pre[f * kRows * c1];
    for (std::size_t i = 0; i < kRows * c1; ++i) {
      if (!(pre1[i] > T{})) d_out1[i] = T{};
    }
    const T* frame = &cache.input[f * kFrameSize];
    for (std::size_t r = 0; r < kRows; ++r) conv1_.backward(store, frame + r * kCols, &d_out1[r * c1], nullptr);
  }

  void load_raw(const double* state, ExtractorCache<T>& cache) const {
    cache.input.resize(kStateSize);
    for (std::size_t i = 0; i < kStateSize; ++i) cache.input[i] = static_cast<T>(state[i]);
  }

  void allocate_frames(ExtractorCache<T>& cache) const {
    cache.conv1_pre.resize(kFrames * kRows * config_.conv1_channels);
    cache.conv1_out.resize(kFrames * kRows * config_.conv1_channels);
    cache.conv2_pre.resize(kFrames * config_.conv2_channels);
    cache.conv2_out.resize(kFrames * config_.conv2_channels);
  }

  void forward_cnn(const ParameterStore<T>& store, const double* state, ExtractorCache<T>& cache, T* out) const {
    const std::size_t c1 = config_.conv1_channels;
    const std::size_t c2 = config_.conv2_channels;
    // Gather each movement's K x 8 patch: input[r][k * kCols + c].
    cache.input.resize(kRows * kFrames * kCols);
    for (std::size_t r = 0; r < kRows; ++r) {
      for (std::size_t k = 0; k < kFrames; ++k) {
        for (std::size_t c = 0; c < kCols; ++c) {
          cache.input[r * kFrames * kCols + k * kCols + c] = static_cast<T>(state[k * kFrameSize + r * kCols + c]);
        }
      }
    }
    cache.conv1_pre.resize(kRows * c1);
    cache.conv1_out.resize(kRows * c1);
    cache.conv2_pre.resize(c2);
    cache.conv2_out.resize(c2);
    for (std::size_t r = 0; r < kRows; ++r) {
      conv1_.forward(store, &cache.input[r * kFrames * kCols], &cache.conv1_pre[r * c1]);
    }
    relu(cache.conv1_pre.data(), cache.conv1_out.data(), kRows * c1, cache.relu_margin);
    conv2_.forward(store, cache.conv1_out.data(), cache.conv2_pre.data());
    relu(cache.conv2_pre.data(), cache.conv2_out.data(), c2, cache.relu_margin);
    out_.forward(store, cache.conv2_out.data(), out);
  }

  void backward_cnn(ParameterStore<T>& store, const ExtractorCache<T>& cache, const T* d_out) const {
    const std::size_t c1 = config_.conv1_channels;
    const std::size_t c2 = config_.conv2_channels;
    std::vector<T> d_c(c2, T{});
    out_.backward(store, cache.conv2_out.data(), d_out, d_c.data());
    for (std::size_t i = 0; i < c2; ++i) {
      if (!(cache.conv2_pre[i] > T{})) d_c[i] = T{};
    }
    std::vector<T> d_out1(kRows * c1, T{});
    conv2_.backward(store, cache.conv1_out.data(), d_c.data(), d_out1.data());
    for (std::size_t i = 0; i < kRows * c1; ++i) {
      if (!(cache.conv1_pre[i] > T{})) d_out1[i] = T{};
    }
    for (std::size_t r = 0; r < kRows; ++r) {
      conv1_.backward(store, &cache.input[r * kFrames * kCols], &d_out1[r * c1], nullptr);
    }
  }

  void forward_rnn(const ParameterStore<T>& store, const double* state, ExtractorCache<T>& cache, T* out) const {
    load_raw(state, cache);
    allocate_frames(cache);
    const std::size_t c2 = config_.conv2_channels;
    const std::size_t h = config_.rnn_hidden;
    cache.hidden.assign((kFrames + 1) * h, T{});
    std::vector<T> pre(h), rec(h);
    for (std::size_t f = 0; f < kFrames; ++f) {
      forward_frame(store, f, cache);
      rnn_input_.forward(store, &cache.conv2_out[f * c2], pre.data());
      rnn_hidden_.forward(store, &cache.hidden[f * h], rec.data());
      T* next = &cache.hidden[(f + 1) * h];
      for (std::size_t i = 0; i < h; ++i) next[i] = std::tanh(pre[i] + rec[i]);
    }
    out_.forward(store, &cache.hidden[kFrames * h], out);
  }

  void backward_rnn(ParameterStore<T>& store, const ExtractorCache<T>& cache, const T* d_out) const {
    const std::size_t c2 = config_.conv2_channels;
    const std::size_t h = config_.rnn_hidden;
    std::vector<T> dh(h, T{});
    out_.backward(store, &cache.hidden[kFrames * h], d_out, dh.data());
    std::vector<T> dpre(h), dh_prev(h), dc(c2);
    for (std::size_t f = kFrames; f-- > 0;) {
      const T* hf = &cache.hidden[(f + 1) * h];
      for (std::size_t i = 0; i < h; ++i) dpre[i] = dh[i] * (T{1} - hf[i] * hf[i]);
      std::fill(dc.begin(), dc.end(), T{});
      std::fill(dh_prev.begin(), dh_prev.end(), T{});
      rnn_input_.backward(store, &cache.conv2_out[f * c2], dpre.data(), dc.data());
      rnn_hidden_.backward(store, &cache.hidden[f * h], dpre.data(), dh_prev.data());
      backward_frame(store, f, cache, dc.data());
      dh.swap(dh_prev);
    }
  }

  void forward_attention(const ParameterStore<T>& store, const double* state, ExtractorCache<T>& cache,
                         T* out) const {
    load_raw(state, cache);
    allocate_frames(cache);
    const std::size_t c2 = config_.conv2_channels;
    const std::size_t dk = config_.attention_dim;
    const std::size_t dv = config_.feature_dim;
    const std::size_t n = kFrames + 1;
    cache.tokens.resize(n * c2);
    std::copy(store[class_token_].value.values.begin(), store[class_token_].value.values.end(), cache.tokens.begin());
    for (std::size_t f = 0; f < kFrames; ++f) {
      forward_frame(store, f, cache);
      std::copy_n(&cache.conv2_out[f * c2], c2, &cache.tokens[(f + 1) * c2]);
    }
    cache.keys.resize(n * dk);
    cache.values.resize(n * dv);
    for (std::size_t j = 0; j < n; ++j) {
      key_.forward(store, &cache.tokens[j * c2], &cache.keys[j * dk]);
      value_.forward(store, &cache.tokens[j * c2], &cache.values[j * dv]);
    }
    cache.query.resize(dk);
    query_.forward(store, cache.tokens.data(), cache.query.data());
    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
    std::vector<T> scores(n);
    for (std::size_t j = 0; j < n; ++j) {
      T s{};
      for (std::size_t d = 0; d < dk; ++d) s += cache.query[d] * cache.keys[j * dk + d];
      scores[j] = s * inv_sqrt;
    }
    cache.weights.resize(n);
    softmax(scores.data(), cache.weights.data(), n);
    for (std::size_t d = 0; d < dv; ++d) out[d] = T{};
    for (std::size_t j = 0; j < n; ++j) {
      const T a = cache.weights[j];
      for (std::size_t d = 0; d < dv; ++d) out[d] += a * cache.values[j * dv + d];
    }
  }

  void backward_attention(ParameterStore<T>& store, const ExtractorCache<T>& cache, const T* d_out) const {
    const std::size_t c2 = config_.conv2_channels;
    const std::size_t dk = config_.attention_dim;
    const std::size_t dv = config_.feature_dim;
    const std::size_t n = kFrames + 1;
    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));

    std::vector<T> da(n);
    for (std::size_t j = 0; j < n; ++j) {
      T s{};
      for (std::size_t d = 0; d < dv; ++d) s += d_out[d] * cache.values[j * dv + d];
      da[j] = s;
    }
    T weighted{};
    for (std::size_t j = 0; j < n; ++j) weighted += cache.weights[j] * da[j];
    std::vector<T> d_tokens(n * c2, T{});
    std::vector<T> dq(dk, T{}), dkey(dk), dval(dv);
    for (std::size_t j = 0; j < n; ++j) {
      const T ds = cache.weights[j] * (da[j] - weighted) * inv_sqrt;
      for (std::size_t d = 0; d < dk; ++d) {
        dq[d] += ds * cache.keys[j * dk + d];
        dkey[d] = ds * cache.query[d];
      }
      for (std::size_t d = 0; d < dv; ++d) dval[d] = cache.weights[j] * d_out[d];
      key_.backward(store, &cache.tokens[j * c2], dkey.data(), &d_tokens[j * c2]);
      value_.backward(store, &cache.tokens[j * c2], dval.data(), &d_tokens[j * c2]);
    }
    query_.backward(store, cache.tokens.data(), dq.data(), d_tokens.data());
    if (store[class_token_].trainable) {
      auto& g = store[class_token_].grad;
      for (std::size_t d = 0; d < c2; ++d) g[d] += d_tokens[d];
    }
    for (std::size_t f = 0; f < kFrames; ++f) backward_frame(store, f, cache, &d_tokens[(f + 1) * c2]);
  }

  ExtractorConfig config_;
  Dense conv1_;
  Dense conv2_;
  Dense out_;
  Dense rnn_input_;
  Dense rnn_hidden_;
  Dense query_;
  Dense key_;
  Dense value_;
  std::size_t class_token_ = 0;
};

}  // namespace unitsa::nn
