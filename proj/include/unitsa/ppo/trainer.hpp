#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "unitsa/augment/augment.hpp"
#include "unitsa/common.hpp"
#include "unitsa/encoder/state.hpp"
#include "unitsa/nn/adam.hpp"
#include "unitsa/nn/policy.hpp"
#include "unitsa/ppo/agent.hpp"
#include "unitsa/ppo/loss.hpp"
#include "unitsa/rng.hpp"
#include "unitsa/sim/environment.hpp"
#include "unitsa/sim/scenario.hpp"

namespace unitsa::ppo {

struct PPOConfig {
  double learning_rate = 1e-4;
  std::size_t buffer_size = 3000;
  double clip_epsilon = 0.2;
  double gamma = 0.99;
  double value_coef = 0.9;
  std::size_t parallel_envs = 4;
  std::size_t total_steps = 200000;
  std::size_t epochs = 10;
  std::size_t minibatch_size = 256;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.0;
  bool normalize_advantages = false;
  std::size_t reward_warmup = 1000;
  bool augmentation = false;
  /// Augment when acting instead of once per update.
  bool augment_at_collection = false;
  augment::PlanBounds augment_bounds;
  std::uint64_t seed = 0;
  /// Greedy evaluation every this many updates (0 disables).
  std::size_t eval_every = 1;
  /// Eval routes per scenario used in periodic evaluation (0 = all).
  std::size_t eval_routes = 0;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("ppo: learning_rate must be >= 0");
    if (buffer_size == 0) throw ConfigError("ppo: buffer_size must be positive");
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw ConfigError("ppo: clip_epsilon must be in (0, 1)");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo: gamma must be in (0, 1]");
    if (!(value_coef > 0.0)) throw ConfigError("ppo: value_coef must be positive");
    if (parallel_envs == 0) throw ConfigError("ppo: parallel_envs must be positive");
    if (epochs == 0) throw ConfigError("ppo: epochs must be positive");
    if (minibatch_size == 0) throw ConfigError("ppo: minibatch_size must be positive");
    if (entropy_coef < 0.0 || max_grad_norm < 0.0) throw ConfigError("ppo: entropy_coef and max_grad_norm must be >= 0");
    if (augmentation) augment_bounds.validate();
  }
};

struct EpisodeStats {
  std::size_t env_id = 0;
  std::string scenario;
  std::uint64_t route = 0;
  double total_raw_reward = 0.0;
  std::optional<double> avg_waiting_time;
  std::size_t steps = 0;
};

/// Environments stepped round-robin. Slot j plays, at its e-th episode,
/// scenario (j + e E) mod S, so every rollout interleaves the configured
/// intersections and each gets an equal share over time.
class RolloutCollector {
 public:
  RolloutCollector(std::vector<sim::Scenario> scenarios, std::size_t n_envs, std::uint64_t seed)
      : scenarios_(std::move(scenarios)), rng_(derive_seed(seed, 11)), seed_(seed) {
    if (scenarios_.empty()) throw ConfigError("rollout: at least one scenario is required");
    for (const auto& s : scenarios_) {
      sim::validate(s);
      if (s.train_routes.empty()) throw ConfigError("rollout: scenario '" + s.config.name + "' has no training routes");
    }
    if (n_envs == 0) throw ConfigError("rollout: need at least one environment");
    slots_.resize(n_envs);
    for (std::size_t j = 0; j < n_envs; ++j) reset_slot(j);
  }

  std::size_t size() const { return slots_.size(); }
  const std::vector<sim::Scenario>& scenarios() const { return scenarios_; }
  const sim::Environment& environment(std::size_t j) const { return *slots_.at(j).env; }
  const TrafficState& state(std::size_t j) const { return slots_.at(j).state; }
  std::size_t scenario_of(std::size_t j) const { return slots_.at(j).scenario; }

  /// Collects exactly n transitions. Completed episodes are appended to
  /// `finished`. Augmentation, when given, is applied to the observation
  /// the policy acts on, and that observation is stored.
  std::vector<Transition> collect(const Policy& policy, std::size_t n, encoder::RewardNormalizer& normalizer,
                                  std::vector<EpisodeStats>* finished = nullptr,
                                  const augment::PlanBounds* augment_bounds = nullptr) {
    std::vector<Transition> buffer;
    buffer.reserve(n);
    std::vector<std::optional<std::size_t>> last(slots_.size());
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t j = k % slots_.size();
      Slot& slot = slots_[j];
      Transition t;
      t.env_id = j;
      t.observation = slot.state;
      if (augment_bounds) {
        t.observation = augment::augment(slot.state, augment::sample_plan(derive_seed(seed_ ^ 0xa5a5ULL, collected_), *augment_bounds));
      }
      const auto out = policy.forward(t.observation);
      const auto p = out.probabilities();
      t.action = rng_.uniform() < p[1] ? 1 : 0;
      t.log_prob = out.log_prob(t.action);
      t.value = out.value;
      if (last[j]) buffer[*last[j]].next_value = t.value;

      const sim::StepOutcome* outcome = nullptr;
      try {
        outcome = &slot.env->step(t.action == 1 ? sim::Action::Change : sim::Action::Keep);
      } catch (const std::exception& e) {
        throw StateError("environment " + std::to_string(j) + " ('" + scenarios_[slot.scenario].config.name +
                         "'): " + e.what());
      }
      slot.state = encoder::push_frame(slot.state, encoder::encode_junction(*outcome, scenarios_[slot.scenario].config));
      t.raw_reward = encoder::raw_reward(outcome->queue);
      t.reward = normalizer.normalize(t.raw_reward);
      t.done = outcome->done;
      slot.episode_reward += t.raw_reward;
      ++slot.steps;
      ++collected_;
      buffer.push_back(std::move(t));
      if (buffer.back().done) {
        // Horizon truncation: bootstrap from the final state.
        buffer.back().next_value = policy.forward(slot.state).value;
        if (finished) {
          finished->push_back(EpisodeStats{j, scenarios_[slot.scenario].config.name, slot.route, slot.episode_reward,
                                           slot.env->avg_waiting_time(), slot.steps});
        }
        ++slot.episode;
        reset_slot(j);
        last[j].reset();
      } else {
        last[j] = buffer.size() - 1;
      }
    }
    for (std::size_t j = 0; j < slots_.size(); ++j) {
      if (last[j]) buffer[*last[j]].next_value = policy.forward(slots_[j].state).value;
    }
    return buffer;
  }

 private:
  struct Slot {
    std::size_t scenario = 0;
    std::size_t episode = 0;
    std::uint64_t route = 0;
    std::unique_ptr<sim::Environment> env;
    TrafficState state{};
    double episode_reward = 0.0;
    std::size_t steps = 0;
  };

  void reset_slot(std::size_t j) {
    Slot& slot = slots_[j];
    const std::size_t draw = j + slot.episode * slots_.size();
    slot.scenario = draw % scenarios_.size();
    const auto& sc = scenarios_[slot.scenario];
    slot.route = sc.train_routes[(draw / scenarios_.size()) % sc.train_routes.size()];
    slot.env = std::make_unique<sim::Environment>(sc.config, sc.route(slot.route));
    slot.state = encoder::push_frame(TrafficState{}, encoder::encode_junction(slot.env->sense(), sc.config));
    slot.episode_reward = 0.0;
    slot.steps = 0;
  }

  std::vector<sim::Scenario> scenarios_;
  std::vector<Slot> slots_;
  Rng rng_;
  std::uint64_t seed_;
  std::uint64_t collected_ = 0;
};

struct UpdateReport {
  double policy_loss = 0.0;  // L_pf, mean over minibatch steps
  double value_loss = 0.0;   // L_vf
  double combined_loss = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  /// Values on the first gradient step, where theta = theta_old.
  double first_policy_loss = 0.0;
  double first_unclipped_loss = 0.0;
  double first_clip_fraction = 0.0;
  double grad_norm = 0.0;
  std::size_t gradient_steps = 0;
  std::optional<double> mean_episode_reward;
};

/// Augments each observation once (re-evaluating the behavior log-prob on
/// the augmented input), then runs `epochs` passes of shuffled minibatch
/// Adam steps on the combined loss. Advantages must already be computed.
inline UpdateReport update(std::vector<Transition>& buffer, Policy& policy, nn::Adam<double>& optimizer,
                           const PPOConfig& config, std::uint64_t update_seed) {
  if (buffer.empty()) throw StateError("update: empty buffer");
  if (config.augmentation && !config.augment_at_collection) {
    for (std::size_t i = 0; i < buffer.size(); ++i) {
      auto& t = buffer[i];
      t.observation = augment::augment(t.observation, augment::sample_plan(derive_seed(update_seed, i), config.augment_bounds));
      t.log_prob = policy.forward(t.observation).log_prob(t.action);
    }
  }
  if (config.normalize_advantages && buffer.size() > 1) {
    double mean = 0.0;
    for (const auto& t : buffer) mean += t.advantage;
    mean /= static_cast<double>(buffer.size());
    double var = 0.0;
    for (const auto& t : buffer) var += (t.advantage - mean) * (t.advantage - mean);
    const double sd = std::sqrt(var / static_cast<double>(buffer.size()));
    for (auto& t : buffer) t.advantage = (t.advantage - mean) / (sd + 1e-8);
  }

  // With a frozen extractor the features never change during the update.
  std::optional<std::vector<std::vector<double>>> features;
  if (!policy.extractor_trainable()) {
    features.emplace(buffer.size());
    nn::ForwardCache<double> cache;
    for (std::size_t i = 0; i < buffer.size(); ++i) {
      policy.forward(buffer[i].observation, &cache);
      (*features)[i] = cache.heads.features;
    }
  }

  const LossWeights weights{-1.0, config.value_coef, config.entropy_coef};
  UpdateReport report;
  Rng rng(update_seed);
  std::vector<std::size_t> order(buffer.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
    }
    for (std::size_t start = 0; start < order.size(); start += config.minibatch_size) {
      const std::size_t end = std::min(order.size(), start + config.minibatch_size);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      policy.parameters().zero_grad();
      const BatchLoss loss =
          batch_loss(policy, buffer, batch, weights, config.clip_epsilon, true, features ? &*features : nullptr);
      if (!std::isfinite(loss.combined)) {
        throw Error("update: non-finite loss at epoch " + std::to_string(epoch) + ", minibatch " +
                    std::to_string(start / config.minibatch_size) + " (policy " + std::to_string(loss.policy_objective) +
                    ", value " + std::to_string(loss.value_loss) + ")");
      }
      if (report.gradient_steps == 0) {
        report.first_policy_loss = loss.policy_objective;
        report.first_unclipped_loss = loss.unclipped_objective;
        report.first_clip_fraction = loss.clip_fraction;
      }
      report.grad_norm = optimizer.step(policy.parameters());
      ++report.gradient_steps;
      report.policy_loss += loss.policy_objective;
      report.value_loss += loss.value_loss;
      report.combined_loss += loss.combined;
      report.mean_ratio += loss.mean_ratio;
      report.clip_fraction += loss.clip_fraction;
    }
  }
  const double n = static_cast<double>(report.gradient_steps);
  report.policy_loss /= n;
  report.value_loss /= n;
  report.combined_loss /= n;
  report.mean_ratio /= n;
  report.clip_fraction /= n;
  return report;
}

/// One row of the training curve.
struct CurvePoint {
  std::size_t step = 0;
  std::size_t update = 0;
  double mean_step_reward = 0.0;
  std::optional<double> mean_episode_reward;
  std::optional<double> eval_reward;
  std::optional<double> eval_waiting_time;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double combined_loss = 0.0;
  double clip_fraction = 0.0;
};

inline void write_curve_header(std::ostream& os) {
  os << "step,update,mean_step_reward,mean_episode_reward,eval_reward,eval_waiting_time,policy_loss,value_loss,"
        "combined_loss,clip_fraction\n";
}

inline std::string format_real(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline void write_curve_row(std::ostream& os, const CurvePoint& p) {
  auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
  os << p.step << ',' << p.update << ',' << format_real(p.mean_step_reward) << ',' << opt(p.mean_episode_reward) << ','
     << opt(p.eval_reward) << ',' << opt(p.eval_waiting_time) << ',' << format_real(p.policy_loss) << ','
     << format_real(p.value_loss) << ',' << format_real(p.combined_loss) << ',' << format_real(p.clip_fraction)
     << '\n';
}

/// Collect / update loop over a fixed scenario set.
class Trainer {
 public:
  Trainer(Policy& policy, std::vector<sim::Scenario> scenarios, PPOConfig config,
          std::optional<encoder::RewardNormalizer> normalizer = std::nullopt)
      : policy_(&policy),
        config_((config.validate(), config)),
        collector_(std::move(scenarios), config.parallel_envs, derive_seed(config.seed, 1)),
        optimizer_(nn::AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8, config.max_grad_norm}),
        normalizer_(normalizer.value_or(encoder::RewardNormalizer(config.reward_warmup))) {}

  const PPOConfig& config() const { return config_; }
  std::size_t steps() const { return steps_; }
  std::size_t updates() const { return updates_; }
  const std::vector<CurvePoint>& curve() const { return curve_; }
  const encoder::RewardNormalizer& normalizer() const { return normalizer_; }
  const RolloutCollector& collector() const { return collector_; }
  const UpdateReport& last_report() const { return last_report_; }

  /// One rollout of buffer_size transitions followed by one update.
  const CurvePoint& iterate() {
    std::vector<EpisodeStats> finished;
    const bool at_collection = config_.augmentation && config_.augment_at_collection;
    auto buffer = collector_.collect(*policy_, config_.buffer_size, normalizer_, &finished,
                                     at_collection ? &config_.augment_bounds : nullptr);
    compute_advantages(buffer, config_.gamma);
    CurvePoint point;
    for (const auto& t : buffer) point.mean_step_reward += t.raw_reward;
    point.mean_step_reward /= static_cast<double>(buffer.size());
    if (!finished.empty()) {
      double sum = 0.0;
      for (const auto& e : finished) sum += e.total_raw_reward;
      point.mean_episode_reward = sum / static_cast<double>(finished.size());
    }
    last_report_ = update(buffer, *policy_, optimizer_, config_, derive_seed(config_.seed, 1000 + updates_));
    last_report_.mean_episode_reward = point.mean_episode_reward;
    buffer.clear();
    steps_ += config_.buffer_size;
    ++updates_;
    point.step = steps_;
    point.update = updates_;
    point.policy_loss = last_report_.policy_loss;
    point.value_loss = last_report_.value_loss;
    point.combined_loss = last_report_.combined_loss;
    point.clip_fraction = last_report_.clip_fraction;
    if (config_.eval_every > 0 && updates_ % config_.eval_every == 0) {
      const auto eval = evaluate_now();
      point.eval_reward = eval.mean_episode_reward;
      point.eval_waiting_time = eval.mean_waiting_time;
    }
    curve_.push_back(point);
    return curve_.back();
  }

  /// Iterates until total_steps is consumed (whole buffers only).
  void run(const std::function<void(const CurvePoint&)>& on_update = {}) {
    while (steps_ + config_.buffer_size <= config_.total_steps) {
      const auto& p = iterate();
      if (on_update) on_update(p);
    }
  }

  /// Greedy evaluation over the eval routes of every scenario.
  EvaluationSummary evaluate_now() const {
    std::vector<baselines::EpisodeResult> episodes;
    AgentController agent(*policy_);
    for (const auto& sc : collector_.scenarios()) {
      std::vector<std::uint64_t> routes = sc.eval_routes;
      if (config_.eval_routes > 0 && routes.size() > config_.eval_routes) routes.resize(config_.eval_routes);
      auto s = evaluate(agent, sc, routes);
      for (auto& e : s.episodes) episodes.push_back(std::move(e));
    }
    return summarize(std::move(episodes));
  }

 private:
  Policy* policy_;
  PPOConfig config_;
  RolloutCollector collector_;
  nn::Adam<double> optimizer_;
  encoder::RewardNormalizer normalizer_;
  std::size_t steps_ = 0;
  std::size_t updates_ = 0;
  std::vector<CurvePoint> curve_;
  UpdateReport last_report_;
};

}  // namespace unitsa::ppo
