#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "unitsa/encoder/state.hpp"
#include "unitsa/nn/policy.hpp"

namespace unitsa::ppo {

using encoder::TrafficState;
using nn::Policy;

struct Transition {
  TrafficState observation;
  std::size_t action = 0;
  double log_prob = 0.0;  // behavior policy
  double value = 0.0;     // V(observation) at collection
  double reward = 0.0;    // normalized
  double raw_reward = 0.0;
  double next_value = 0.0;
  bool done = false;
  /// True only for real terminal states; horizon truncation bootstraps.
  bool terminal = false;
  std::size_t env_id = 0;
  double advantage = 0.0;
  double reward_to_go = 0.0;
};

/// One-step TD advantage A_t = r_t + g V(s_t+1) - V(s_t), and discounted
/// reward-to-go per environment, cut at episode ends and at the end of the
/// buffer with a V(s_T) bootstrap unless the state is terminal.
inline void compute_advantages(std::vector<Transition>& buffer, double gamma) {
  std::size_t n_envs = 0;
  for (const auto& t : buffer) n_envs = std::max(n_envs, t.env_id + 1);
  std::vector<std::optional<double>> later(n_envs);
  for (std::size_t k = buffer.size(); k-- > 0;) {
    auto& t = buffer[k];
    const double boot = t.terminal ? 0.0 : t.next_value;
    t.advantage = t.reward + gamma * boot - t.value;
    auto& next = later[t.env_id];
    t.reward_to_go = (t.done || !next) ? t.reward + gamma * boot : t.reward + gamma * *next;
    next = t.reward_to_go;
  }
}

/// Per-sample clipped surrogate min(rho A, clip(rho, 1-e, 1+e) A) and its
/// derivative with respect to log pi(a|s).
struct Surrogate {
  double objective = 0.0;
  double unclipped = 0.0;
  double ratio = 1.0;
  double d_log_prob = 0.0;
  bool clipped = false;
};

inline Surrogate clipped_surrogate(double log_prob, double log_prob_old, double advantage, double clip_epsilon) {
  Surrogate s;
  s.ratio = std::exp(log_prob - log_prob_old);
  s.unclipped = s.ratio * advantage;
  const double bounded = std::clamp(s.ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantage;
  s.clipped = std::abs(s.ratio - 1.0) > clip_epsilon;
  if (s.unclipped <= bounded) {
    s.objective = s.unclipped;
    s.d_log_prob = s.unclipped;
  } else {
    s.objective = bounded;
    s.d_log_prob = 0.0;
  }
  return s;
}

/// Weights of the combined loss  policy * L_pf + value * L_vf - entropy * H.
/// The training loss is (-1, lambda, 0).
struct LossWeights {
  double policy = -1.0;
  double value = 0.9;
  double entropy = 0.0;
};

struct BatchLoss {
  double policy_objective = 0.0;  // L_pf
  double unclipped_objective = 0.0;
  double value_loss = 0.0;        // L_vf
  double entropy = 0.0;
  double combined = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
};

/// Evaluates the minibatch `indices` of `data` and, when `accumulate` is
/// set, adds the gradient of the weighted loss to the policy's gradient
/// buffers. `features`, if given, holds precomputed extractor outputs per
/// transition and only the heads are run.
inline BatchLoss batch_loss(Policy& policy, const std::vector<Transition>& data, std::span<const std::size_t> indices,
                            const LossWeights& weights, double clip_epsilon, bool accumulate,
                            const std::vector<std::vector<double>>* features = nullptr) {
  BatchLoss loss;
  if (indices.empty()) return loss;
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  nn::ForwardCache<double> cache;
  std::size_t clipped = 0;
  for (std::size_t idx : indices) {
    const Transition& t = data[idx];
    nn::PolicyOutput<double> out;
    if (features) {
      cache.heads.features = (*features)[idx];
      out = policy.forward_heads(cache.heads);
    } else {
      out = policy.forward(t.observation, &cache);
    }
    const double log_prob = out.log_prob(t.action);
    const Surrogate s = clipped_surrogate(log_prob, t.log_prob, t.advantage, clip_epsilon);
    const double err = out.value - t.reward_to_go;
    const auto p = out.probabilities();
    double h = 0.0;
    for (double pk : p) {
      if (pk > 0.0) h -= pk * std::log(pk);
    }
    loss.policy_objective += s.objective * inv_n;
    loss.unclipped_objective += s.unclipped * inv_n;
    loss.value_loss += err * err * inv_n;
    loss.entropy += h * inv_n;
    loss.mean_ratio += s.ratio * inv_n;
    if (s.clipped) ++clipped;

    if (!accumulate) continue;
    const double d_log_prob = weights.policy * s.d_log_prob * inv_n;
    std::array<double, nn::kActions> d_logits{};
    for (std::size_t k = 0; k < nn::kActions; ++k) {
      const double indicator = k == t.action ? 1.0 : 0.0;
      d_logits[k] = d_log_prob * (indicator - p[k]);
      if (weights.entropy != 0.0 && p[k] > 0.0) {
        d_logits[k] += weights.entropy * inv_n * p[k] * (std::log(p[k]) + h);
      }
    }
    const double d_value = weights.value * 2.0 * err * inv_n;
    if (features) {
      policy.backward_heads(cache.heads, d_logits, d_value, false);
    } else {
      policy.backward(cache, d_logits, d_value);
    }
  }
  loss.clip_fraction = static_cast<double>(clipped) * inv_n;
  loss.combined = weights.policy * loss.policy_objective + weights.value * loss.value_loss - weights.entropy * loss.entropy;
  return loss;
}

}  // namespace unitsa::ppo
