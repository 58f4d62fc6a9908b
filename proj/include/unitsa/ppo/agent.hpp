#pragma once

#include <string>

#include "unitsa/baselines/controllers.hpp"
#include "unitsa/encoder/state.hpp"
#include "unitsa/nn/policy.hpp"
#include "unitsa/sim/scenario.hpp"

namespace unitsa::ppo {

/// Greedy (argmax) policy behind the common controller interface.
class AgentController final : public baselines::Controller {
 public:
  explicit AgentController(const nn::Policy& policy, std::string name = "UniTSA") : policy_(&policy), name_(std::move(name)) {}

  std::string name() const override { return name_; }

  void reset(const sim::IntersectionConfig& config) override {
    config_ = config;
    state_ = {};
  }

  sim::Action decide(const sim::StepOutcome& outcome) override {
    state_ = encoder::push_frame(state_, encoder::encode_junction(outcome, config_));
    return policy_->forward(state_).greedy_action() == 1 ? sim::Action::Change : sim::Action::Keep;
  }

  const encoder::TrafficState& state() const { return state_; }

 private:
  const nn::Policy* policy_;
  std::string name_;
  sim::IntersectionConfig config_;
  encoder::TrafficState state_{};
};

struct EvaluationSummary {
  double mean_episode_reward = 0.0;
  /// Mean of per-episode average waiting times (episodes without vehicles skipped).
  std::optional<double> mean_waiting_time;
  std::vector<baselines::EpisodeResult> episodes;
};

inline EvaluationSummary summarize(std::vector<baselines::EpisodeResult> episodes) {
  EvaluationSummary s;
  double wait = 0.0;
  std::size_t with_wait = 0;
  for (const auto& e : episodes) {
    s.mean_episode_reward += e.total_raw_reward;
    if (e.avg_waiting_time) {
      wait += *e.avg_waiting_time;
      ++with_wait;
    }
  }
  if (!episodes.empty()) s.mean_episode_reward /= static_cast<double>(episodes.size());
  if (with_wait > 0) s.mean_waiting_time = wait / static_cast<double>(with_wait);
  s.episodes = std::move(episodes);
  return s;
}

/// Runs `controller` once per route seed.
inline EvaluationSummary evaluate(baselines::Controller& controller, const sim::Scenario& scenario,
                                  const std::vector<std::uint64_t>& routes) {
  std::vector<baselines::EpisodeResult> episodes;
  for (std::uint64_t r : routes) episodes.push_back(baselines::run_episode(scenario.config, scenario.route(r), controller));
  return summarize(std::move(episodes));
}

}  // namespace unitsa::ppo
