#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "unitsa/common.hpp"
#include "unitsa/sim/environment.hpp"

namespace unitsa::baselines {

using sim::Action;
using sim::IntersectionConfig;
using sim::StepOutcome;

/// Uniform keep/change interface shared by baselines and the RL agent.
/// `decide` sees the readings of the interval that just ended (or the
/// initial reading before the first step).
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual void reset(const IntersectionConfig& config) = 0;
  virtual Action decide(const StepOutcome& outcome) = 0;
};

/// Fixed-time plan: every phase runs `phase_duration_s` (yellow included),
/// i.e. a change is issued every duration / interval decisions.
class FixTimeController final : public Controller {
 public:
  explicit FixTimeController(double phase_duration_s) : duration_s_(phase_duration_s) {
    if (!(duration_s_ > 0.0)) throw ConfigError("fixtime: phase_duration_s must be > 0");
  }

  std::string name() const override { return "Fix-" + std::to_string(static_cast<int>(duration_s_)); }

  void reset(const IntersectionConfig& config) override {
    const double ratio = duration_s_ / config.action_interval_s;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0) {
      throw ConfigError("fixtime: phase_duration_s " + std::to_string(duration_s_) +
                        " is not a positive multiple of the action interval");
    }
    period_ = static_cast<int>(std::lround(ratio));
    count_ = 0;
  }

  Action decide(const StepOutcome&) override {
    if (period_ == 0) throw StateError("fixtime: decide before reset");
    if (++count_ >= period_) {
      count_ = 0;
      return Action::Change;
    }
    return Action::Keep;
  }

 private:
  double duration_s_;
  int period_ = 0;
  int count_ = 0;
};

/// Cycle length and per-phase green from critical flow ratios.
struct WebsterPlan {
  double cycle_s = 0.0;
  std::vector<double> green_s;
  double flow_ratio_sum = 0.0;
};

/// C = (1.5 L + 5) / (1 - Y), g_p = (y_p / Y)(C - L), Y capped at
/// `max_flow_ratio`. Returns an empty plan when Y = 0.
inline WebsterPlan webster_plan(const std::vector<double>& critical_ratios, double lost_time_s,
                                double max_flow_ratio = 0.95) {
  WebsterPlan plan;
  double y = 0.0;
  for (double r : critical_ratios) y += std::max(0.0, r);
  if (y <= 0.0) return plan;
  const double capped = std::min(y, max_flow_ratio);
  plan.flow_ratio_sum = capped;
  plan.cycle_s = (1.5 * lost_time_s + 5.0) / (1.0 - capped);
  const double effective = plan.cycle_s - lost_time_s;
  for (double r : critical_ratios) plan.green_s.push_back(std::max(0.0, r) / y * effective);
  return plan;
}

/// Real-time Webster: arrival volumes are counted over `window_s`, a new
/// plan is computed at each window boundary, and phases are then held for
/// their green time (rounded to whole action intervals, never below min
/// green). Before the first window, and whenever no vehicles were counted,
/// every phase runs its minimum green.
class WebsterController final : public Controller {
 public:
  explicit WebsterController(std::optional<double> lost_time_s = std::nullopt, double window_s = 300.0,
                             double max_flow_ratio = 0.95)
      : lost_time_s_(lost_time_s), window_s_(window_s), max_flow_ratio_(max_flow_ratio) {
    if (!(window_s_ > 0.0)) throw ConfigError("webster: window_s must be > 0");
  }

  std::string name() const override { return "Webster"; }

  void reset(const IntersectionConfig& config) override {
    config_ = config;
    counts_.fill(0);
    window_elapsed_ = 0.0;
    phase_time_ = 0.0;
    green_s_.assign(config.num_phases(), config.min_green_s);
    phase_ = 0;
    changed_once_ = false;
  }

  const std::vector<double>& green_times() const { return green_s_; }

  Action decide(const StepOutcome& outcome) override {
    if (!outcome.substeps.empty()) {
      for (std::size_t i = 0; i < sim::kMovements; ++i) counts_[i] += outcome.arrivals[i];
      window_elapsed_ += config_.action_interval_s;
      phase_time_ += config_.action_interval_s;
      phase_ = outcome.phase_index;
    }
    if (window_elapsed_ >= window_s_) recompute();

    // Phase time includes the yellow that opened it; the first phase has none.
    const double yellow = changed_once_ ? config_.yellow_s : 0.0;
    const double target = std::max(green_s_[phase_], config_.min_green_s) + yellow;
    const double rounded = std::max(1.0, std::round(target / config_.action_interval_s)) * config_.action_interval_s;
    if (phase_time_ >= rounded && outcome.phase_elapsed_s >= config_.min_green_s) {
      phase_time_ = 0.0;
      changed_once_ = true;
      return Action::Change;
    }
    return Action::Keep;
  }

 private:
  void recompute() {
    const double lost = lost_time_s_.value_or(config_.yellow_s * static_cast<double>(config_.num_phases()));
    std::vector<double> ratios;
    for (const auto& phase : config_.phases) {
      double y = 0.0;
      for (std::size_t i = 0; i < sim::kMovements; ++i) {
        if (!phase.green.test(i)) continue;
        const double per_lane = counts_[i] / window_elapsed_ / config_.lanes[i];
        y = std::max(y, per_lane / config_.saturation_flow_vps);
      }
      ratios.push_back(y);
    }
    const WebsterPlan plan = webster_plan(ratios, lost, max_flow_ratio_);
    if (plan.green_s.empty()) {
      green_s_.assign(config_.num_phases(), config_.min_green_s);
    } else {
      green_s_ = plan.green_s;
    }
    counts_.fill(0);
    window_elapsed_ = 0.0;
  }

  std::optional<double> lost_time_s_;
  double window_s_;
  double max_flow_ratio_;
  IntersectionConfig config_;
  sim::MovementArray<long long> counts_{};
  double window_elapsed_ = 0.0;
  double phase_time_ = 0.0;
  std::vector<double> green_s_;
  std::size_t phase_ = 0;
  bool changed_once_ = false;
};

/// Self-organizing threshold rule: vehicles queued on red movements are
/// accumulated every sub-step; once the sum exceeds theta and the current
/// phase has had its minimum green, the controller changes and resets.
class SotlController final : public Controller {
 public:
  explicit SotlController(double theta) : theta_(theta) {
    if (!(theta_ > 0.0)) throw ConfigError("sotl: theta must be > 0");
  }

  std::string name() const override { return "SOTL"; }

  void reset(const IntersectionConfig&) override { kappa_ = 0.0; }

  double pressure() const { return kappa_; }

  Action decide(const StepOutcome& outcome) override {
    for (const auto& s : outcome.substeps) {
      for (std::size_t i = 0; i < sim::kMovements; ++i) {
        if (!s.green.test(i)) kappa_ += s.queue[i];
      }
    }
    if (kappa_ > theta_ && outcome.min_green_reached.any()) {
      kappa_ = 0.0;
      return Action::Change;
    }
    return Action::Keep;
  }

 private:
  double theta_;
  double kappa_ = 0.0;
};

/// Result of one closed-loop episode.
struct EpisodeResult {
  std::optional<double> avg_waiting_time;
  double total_raw_reward = 0.0;
  std::size_t steps = 0;
  std::vector<Action> actions;
};

/// Runs `controller` on a fresh environment until the horizon.
inline EpisodeResult run_episode(const IntersectionConfig& config, const sim::DemandSchedule& demand,
                                 Controller& controller, bool record_actions = false) {
  sim::Environment env(config, demand);
  controller.reset(config);
  EpisodeResult result;
  while (!env.done()) {
    const Action a = controller.decide(env.sense());
    if (record_actions) result.actions.push_back(a);
    const auto& out = env.step(a);
    result.total_raw_reward -= out.total_queue();
    ++result.steps;
  }
  result.avg_waiting_time = env.avg_waiting_time();
  return result;
}

}  // namespace unitsa::baselines
