#include <gtest/gtest.h>

#include "unitsa/baselines/controllers.hpp"
#include "unitsa/sim/presets.hpp"

using namespace unitsa;
using namespace unitsa::baselines;
using sim::Action;

namespace {

std::vector<Action> trace(Controller& c, std::size_t n) {
  c.reset(sim::preset("INT-1"));
  std::vector<Action> out;
  sim::StepOutcome o;
  for (std::size_t i = 0; i < n; ++i) out.push_back(c.decide(o));
  return out;
}

std::vector<std::size_t> change_points(const std::vector<Action>& a) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == Action::Change) idx.push_back(i);
  }
  return idx;
}

/// Interval in which movement 0 is green, `queue` vehicles wait on every
/// red movement, and min green is or is not reached.
sim::StepOutcome scripted(int queue, bool min_green) {
  sim::StepOutcome o;
  for (int s = 0; s < 5; ++s) {
    sim::SubstepSample ss;
    ss.green.set(0);
    ss.queue.fill(queue);
    ss.queue[0] = 100;
    o.substeps.push_back(ss);
  }
  o.green_now.set(0);
  if (min_green) o.min_green_reached.set(0);
  return o;
}

}  // namespace

TEST(FixTime, ChangeEveryPeriod) {
  FixTimeController f30(30), f40(40), f5(5);
  EXPECT_EQ(change_points(trace(f30, 18)), (std::vector<std::size_t>{5, 11, 17}));
  EXPECT_EQ(change_points(trace(f40, 16)), (std::vector<std::size_t>{7, 15}));
  EXPECT_EQ(change_points(trace(f5, 3)).size(), 3u);
  FixTimeController bad(12);
  EXPECT_THROW(bad.reset(sim::preset("INT-1")), ConfigError);
  EXPECT_THROW(FixTimeController(0), ConfigError);
  EXPECT_EQ(f30.name(), "Fix-30");
}

TEST(FixTime, ClosedLoopPhaseDurations) {
  const auto cfg = sim::preset("INT-1");
  sim::DemandSchedule d;
  d.horizon_s = 120;
  FixTimeController f(30);
  sim::Environment env(cfg, d);
  f.reset(cfg);
  std::vector<double> starts;
  std::size_t phase = env.phase_index();
  while (!env.done()) {
    const auto& out = env.step(f.decide(env.sense()));
    if (out.phase_index != phase) {
      starts.push_back(out.clock_s);
      phase = out.phase_index;
    }
  }
  ASSERT_GE(starts.size(), 3u);
  EXPECT_DOUBLE_EQ(starts[1] - starts[0], 30.0);
  EXPECT_DOUBLE_EQ(starts[2] - starts[1], 30.0);
}

TEST(Webster, PlanOracle) {
  // L = 6 s, y = {0.3, 0.3}: C = (9 + 5) / 0.4 = 35, g = 0.5 * 29 = 14.5.
  const auto plan = webster_plan({0.3, 0.3}, 6.0);
  EXPECT_DOUBLE_EQ(plan.cycle_s, 35.0);
  ASSERT_EQ(plan.green_s.size(), 2u);
  EXPECT_DOUBLE_EQ(plan.green_s[0], 14.5);
  EXPECT_DOUBLE_EQ(plan.green_s[1], 14.5);
  EXPECT_TRUE(webster_plan({0.0, 0.0}, 6.0).green_s.empty());
  const auto sat = webster_plan({0.7, 0.6}, 6.0);
  EXPECT_DOUBLE_EQ(sat.flow_ratio_sum, 0.95);
  EXPECT_DOUBLE_EQ(sat.cycle_s, 14.0 / 0.05);
}

TEST(Webster, ZeroFlowFallsBackToMinGreen) {
  const auto cfg = sim::preset("INT-1");
  sim::DemandSchedule d;
  d.horizon_s = 600;
  WebsterController w;
  const auto r = run_episode(cfg, d, w, true);
  for (double g : w.green_times()) EXPECT_EQ(g, cfg.min_green_s);
  EXPECT_FALSE(r.avg_waiting_time.has_value());
  EXPECT_EQ(r.total_raw_reward, 0.0);
}

TEST(Webster, LongerGreenForHeavierPhase) {
  const auto cfg = sim::preset("INT-3");
  sim::MovementArray<double> rates{};
  for (std::size_t i = 0; i < sim::kMovements; ++i) rates[i] = cfg.phases[0].green.test(i) ? 0.3 : 0.05;
  WebsterController w;
  run_episode(cfg, sim::DemandSchedule::constant(rates, 900, 3), w);
  ASSERT_EQ(w.green_times().size(), 2u);
  EXPECT_GT(w.green_times()[0], 2 * w.green_times()[1]);
}

TEST(Sotl, ThresholdAndMinGreen) {
  SotlController s(50);
  s.reset(sim::preset("INT-1"));
  // 7 red movements x 1 vehicle x 5 sub-steps = 35 per interval.
  EXPECT_EQ(s.decide(scripted(1, true)), Action::Keep);
  EXPECT_DOUBLE_EQ(s.pressure(), 35.0);
  EXPECT_EQ(s.decide(scripted(1, false)), Action::Keep);
  EXPECT_DOUBLE_EQ(s.pressure(), 70.0);
  EXPECT_EQ(s.decide(scripted(0, true)), Action::Change);
  EXPECT_DOUBLE_EQ(s.pressure(), 0.0);
  // Exactly at the threshold is not enough.
  SotlController t(35);
  t.reset(sim::preset("INT-1"));
  EXPECT_EQ(t.decide(scripted(1, true)), Action::Keep);
  EXPECT_THROW(SotlController(0), ConfigError);
}

TEST(Episode, DeterministicAndCounted) {
  const auto cfg = sim::preset("INT-2");
  const auto d = sim::generate_demand(cfg, sim::DemandGenerator{}, 17);
  SotlController a(40), b(40);
  const auto r1 = run_episode(cfg, d, a, true);
  const auto r2 = run_episode(cfg, d, b, true);
  EXPECT_EQ(r1.actions, r2.actions);
  EXPECT_EQ(r1.total_raw_reward, r2.total_raw_reward);
  EXPECT_EQ(r1.steps, 600u);
}
