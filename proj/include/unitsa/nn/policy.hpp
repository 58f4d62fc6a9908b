#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "unitsa/common.hpp"
#include "unitsa/encoder/state.hpp"
#include "unitsa/nn/dense.hpp"
#include "unitsa/nn/extractors.hpp"
#include "unitsa/nn/tensor.hpp"
#include "unitsa/rng.hpp"

namespace unitsa::nn {

inline constexpr std::size_t kActions = 2;

template <typename T>
struct PolicyOutput {
  std::array<T, kActions> logits{};
  T value{};

  std::array<T, kActions> probabilities() const {
    const T m = std::max(logits[0], logits[1]);
    const T e0 = std::exp(logits[0] - m);
    const T e1 = std::exp(logits[1] - m);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
  }

  T log_prob(std::size_t action) const {
    const T m = std::max(logits[0], logits[1]);
    const T lse = m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
    return logits[action] - lse;
  }

  std::size_t greedy_action() const { return logits[1] > logits[0] ? 1 : 0; }
};

struct PolicyConfig {
  ExtractorConfig extractor;
  std::size_t head_hidden = 32;
};

/// Cache of the two dense heads for one sample.
template <typename T>
struct HeadCache {
  std::vector<T> features;
  std::vector<T> actor_hidden;
  std::vector<T> critic_hidden;
  std::array<std::vector<T>, 4> lora_scratch;
};

template <typename T>
struct ForwardCache {
  ExtractorCache<T> extractor;
  HeadCache<T> heads;
};

/// Extractor followed by an actor head (feature -> hidden -> 2 logits) and a
/// critic head (feature -> hidden -> 1 value), tanh between the dense layers.
template <typename T>
class ActorCritic {
 public:
  /// Names of the four dense head layers, in forward order.
  static constexpr std::array<const char*, 4> kHeadLayers = {"actor.fc1", "actor.fc2", "critic.fc1", "critic.fc2"};

  ActorCritic() = default;

  explicit ActorCritic(const PolicyConfig& config, std::uint64_t seed = 0) : config_(config) {
    extractor_ = FeatureExtractor<T>(store_, config.extractor);
    const std::size_t feat = config.extractor.feature_dim;
    heads_[0] = Dense::create(store_, kHeadLayers[0], feat, config.head_hidden);
    heads_[1] = Dense::create(store_, kHeadLayers[1], config.head_hidden, kActions);
    heads_[2] = Dense::create(store_, kHeadLayers[2], feat, config.head_hidden);
    heads_[3] = Dense::create(store_, kHeadLayers[3], config.head_hidden, 1);
    Rng rng(seed);
    extractor_.init(store_, rng);
    for (const auto& d : heads_) d.init(store_, rng);
  }

  const PolicyConfig& config() const { return config_; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }
  const FeatureExtractor<T>& extractor() const { return extractor_; }

  Dense& head_layer(const std::string& name) {
    for (std::size_t i = 0; i < heads_.size(); ++i) {
      if (name == kHeadLayers[i]) return heads_[i];
    }
    throw ConfigError("unknown dense layer '" + name + "'");
  }
  const Dense& head_layer(std::size_t i) const { return heads_.at(i); }

  bool extractor_trainable() const { return extractor_.any_trainable(store_); }

  PolicyOutput<T> forward(const encoder::TrafficState& state, ForwardCache<T>* cache = nullptr) const {
    ForwardCache<T> local;
    ForwardCache<T>& c = cache ? *cache : local;
    c.heads.features.resize(config_.extractor.feature_dim);
    extractor_.forward(store_, state.data(), c.extractor, c.heads.features.data());
    return forward_heads(c.heads);
  }

  /// Heads only; `cache.features` must already hold the extractor output.
  PolicyOutput<T> forward_heads(HeadCache<T>& cache) const {
    const std::size_t h = config_.head_hidden;
    PolicyOutput<T> out;
    cache.actor_hidden.resize(h);
    cache.critic_hidden.resize(h);
    heads_[0].forward(store_, cache.features.data(), cache.actor_hidden.data(), &cache.lora_scratch[0]);
    for (auto& v : cache.actor_hidden) v = std::tanh(v);
    heads_[1].forward(store_, cache.actor_hidden.data(), out.logits.data(), &cache.lora_scratch[1]);
    heads_[2].forward(store_, cache.features.data(), cache.critic_hidden.data(), &cache.lora_scratch[2]);
    for (auto& v : cache.critic_hidden) v = std::tanh(v);
    heads_[3].forward(store_, cache.critic_hidden.data(), &out.value, &cache.lora_scratch[3]);
    return out;
  }

  /// Accumulates gradients of a scalar loss given dL/dlogits and dL/dvalue.
  void backward(const ForwardCache<T>& cache, const std::array<T, kActions>& d_logits, T d_value) {
    const bool through_extractor = extractor_trainable();
    std::vector<T> d_features = backward_heads(cache.heads, d_logits, d_value, through_extractor);
    if (through_extractor) extractor_.backward(store_, cache.extractor, d_features.data());
  }

  /// Returns dL/dfeatures (empty when `need_features` is false).
  std::vector<T> backward_heads(const HeadCache<T>& cache, const std::array<T, kActions>& d_logits, T d_value,
                                bool need_features) {
    const std::size_t h = config_.head_hidden;
    std::vector<T> d_features(need_features ? config_.extractor.feature_dim : 0, T{});
    T* df = need_features ? d_features.data() : nullptr;
    std::vector<T> dh(h, T{});
    heads_[1].backward(store_, cache.actor_hidden.data(), d_logits.data(), dh.data(), &cache.lora_scratch[1]);
    for (std::size_t i = 0; i < h; ++i) dh[i] *= T{1} - cache.actor_hidden[i] * cache.actor_hidden[i];
    heads_[0].backward(store_, cache.features.data(), dh.data(), df, &cache.lora_scratch[0]);
    std::fill(dh.begin(), dh.end(), T{});
    heads_[3].backward(store_, cache.critic_hidden.data(), &d_value, dh.data(), &cache.lora_scratch[3]);
    for (std::size_t i = 0; i < h; ++i) dh[i] *= T{1} - cache.critic_hidden[i] * cache.critic_hidden[i];
    heads_[2].backward(store_, cache.features.data(), dh.data(), df, &cache.lora_scratch[2]);
    return d_features;
  }

 private:
  PolicyConfig config_;
  ParameterStore<T> store_;
  FeatureExtractor<T> extractor_;
  std::array<Dense, 4> heads_;
};

using Policy = ActorCritic<double>;

}  // namespace unitsa::nn
