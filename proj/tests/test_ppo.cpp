#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "unitsa/nn/checkpoint.hpp"
#include "unitsa/ppo/trainer.hpp"
#include "unitsa/sim/scenario.hpp"

using namespace unitsa;
using namespace unitsa::ppo;
using test_support::random_state;

namespace {

sim::Scenario short_scenario(const char* name = "INT-1", double horizon = 100.0) {
  sim::DemandGenerator g;
  g.horizon_s = horizon;
  return sim::preset_scenario(name, 1, 8, g);
}

PPOConfig tiny() {
  PPOConfig c;
  c.buffer_size = 64;
  c.parallel_envs = 2;
  c.minibatch_size = 16;
  c.epochs = 2;
  c.total_steps = 128;
  c.reward_warmup = 20;
  c.eval_every = 0;
  c.seed = 5;
  return c;
}

Transition make(double reward, double value, double next_value, bool done, bool terminal, std::size_t env = 0) {
  Transition t;
  t.reward = reward;
  t.value = value;
  t.next_value = next_value;
  t.done = done;
  t.terminal = terminal;
  t.env_id = env;
  return t;
}

}  // namespace

TEST(Advantages, RewardToGoOracle) {
  std::vector<Transition> b = {make(1, 0, 0, false, false), make(1, 0, 0, false, false), make(1, 0, 0, true, true)};
  compute_advantages(b, 0.5);
  EXPECT_DOUBLE_EQ(b[0].reward_to_go, 1.75);
  EXPECT_DOUBLE_EQ(b[1].reward_to_go, 1.5);
  EXPECT_DOUBLE_EQ(b[2].reward_to_go, 1.0);
}

TEST(Advantages, TdErrorAndBootstrap) {
  // Two interleaved environments; env 1 is truncated mid-buffer.
  std::vector<Transition> b = {make(1.0, 0.5, 2.0, false, false, 0), make(-1.0, 0.2, 4.0, true, false, 1),
                               make(2.0, 2.0, 3.0, false, false, 0)};
  compute_advantages(b, 0.9);
  EXPECT_DOUBLE_EQ(b[0].advantage, 1.0 + 0.9 * 2.0 - 0.5);
  EXPECT_DOUBLE_EQ(b[1].advantage, -1.0 + 0.9 * 4.0 - 0.2);
  EXPECT_DOUBLE_EQ(b[2].reward_to_go, 2.0 + 0.9 * 3.0);
  EXPECT_DOUBLE_EQ(b[0].reward_to_go, 1.0 + 0.9 * b[2].reward_to_go);
  EXPECT_DOUBLE_EQ(b[1].reward_to_go, -1.0 + 0.9 * 4.0);
}

TEST(Surrogate, ClipCases) {
  const double eps = 0.2;
  auto pos = clipped_surrogate(std::log(1.3), 0.0, 2.0, eps);
  EXPECT_NEAR(pos.objective, 1.2 * 2.0, 1e-12);
  EXPECT_EQ(pos.d_log_prob, 0.0);
  EXPECT_TRUE(pos.clipped);

  auto neg = clipped_surrogate(std::log(1.3), 0.0, -2.0, eps);
  EXPECT_NEAR(neg.objective, -2.6, 1e-12);
  EXPECT_NEAR(neg.d_log_prob, -2.6, 1e-12);

  auto low = clipped_surrogate(std::log(0.7), 0.0, 1.0, eps);
  EXPECT_NEAR(low.objective, 0.7, 1e-12);
  EXPECT_NEAR(low.d_log_prob, 0.7, 1e-12);
  EXPECT_TRUE(low.clipped);

  auto inside = clipped_surrogate(std::log(1.1), 0.0, 3.0, eps);
  EXPECT_FALSE(inside.clipped);
  EXPECT_NEAR(inside.d_log_prob, 3.3, 1e-12);
}

TEST(Loss, GradientMatchesFiniteDifference) {
  nn::PolicyConfig pc;
  nn::Policy policy(pc, 3);
  Rng rng(4);
  std::vector<Transition> data;
  for (int i = 0; i < 6; ++i) {
    Transition t;
    t.observation = random_state(rng);
    t.action = static_cast<std::size_t>(i % 2);
    // Old log-prob close to the current one keeps the ratio off the clip edge.
    t.log_prob = policy.forward(t.observation).log_prob(t.action) + (i % 3 == 0 ? 0.05 : -0.03);
    t.advantage = rng.normal();
    t.reward_to_go = rng.normal();
    data.push_back(t);
  }
  std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5};
  const LossWeights w{-1.0, 0.9, 0.01};
  policy.parameters().zero_grad();
  batch_loss(policy, data, idx, w, 0.2, true);
  const double h = 1e-6;
  for (auto& e : policy.parameters()) {
    const std::size_t stride = std::max<std::size_t>(1, e.value.size() / 5);
    for (std::size_t i = 0; i < e.value.size(); i += stride) {
      const double keep = e.value[i];
      e.value[i] = keep + h;
      const double up = batch_loss(policy, data, idx, w, 0.2, false).combined;
      e.value[i] = keep - h;
      const double down = batch_loss(policy, data, idx, w, 0.2, false).combined;
      e.value[i] = keep;
      const double fd = (up - down) / (2 * h);
      ASSERT_NEAR(e.grad[i], fd, 1e-6 + 1e-5 * std::abs(fd)) << e.name << "[" << i << "]";
    }
  }
}

TEST(Loss, FeatureCacheMatchesFullPass) {
  nn::Policy policy(nn::PolicyConfig{}, 3);
  Rng rng(5);
  std::vector<Transition> data(4);
  std::vector<std::vector<double>> features;
  for (auto& t : data) {
    t.observation = random_state(rng);
    t.advantage = 1.0;
    nn::ForwardCache<double> c;
    t.log_prob = policy.forward(t.observation, &c).log_prob(0);
    features.push_back(c.heads.features);
  }
  const std::vector<std::size_t> idx = {0, 1, 2, 3};
  const auto full = batch_loss(policy, data, idx, {}, 0.2, false);
  const auto cached = batch_loss(policy, data, idx, {}, 0.2, false, &features);
  EXPECT_EQ(full.combined, cached.combined);
  EXPECT_DOUBLE_EQ(full.mean_ratio, 1.0);
}

TEST(Collector, RoundRobinAndSingleStep) {
  RolloutCollector col({short_scenario()}, 3, 9);
  nn::Policy policy(nn::PolicyConfig{}, 1);
  encoder::RewardNormalizer norm(10);
  const auto one = col.collect(policy, 1, norm);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].env_id, 0u);
  EXPECT_TRUE(std::isfinite(one[0].next_value));
  const auto buf = col.collect(policy, 7, norm);
  for (std::size_t k = 0; k < buf.size(); ++k) EXPECT_EQ(buf[k].env_id, k % 3);
}

TEST(Collector, EpisodesEndAtHorizonAndBootstrap) {
  RolloutCollector col({short_scenario("INT-1", 25.0)}, 1, 2);
  nn::Policy policy(nn::PolicyConfig{}, 1);
  encoder::RewardNormalizer norm(10);
  std::vector<EpisodeStats> done;
  const auto buf = col.collect(policy, 12, norm, &done);
  ASSERT_EQ(done.size(), 2u);
  EXPECT_EQ(done[0].steps, 5u);
  EXPECT_TRUE(buf[4].done);
  EXPECT_FALSE(buf[4].terminal);
  // Within an episode next_value is the next transition's value.
  EXPECT_EQ(buf[0].next_value, buf[1].value);
}

TEST(Update, ZeroLearningRateLeavesWeights) {
  auto cfg = tiny();
  cfg.learning_rate = 0.0;
  nn::Policy policy(nn::PolicyConfig{}, 1);
  const auto before = nn::export_tensors(policy.parameters());
  Trainer trainer(policy, {short_scenario()}, cfg);
  trainer.iterate();
  EXPECT_EQ(nn::export_tensors(policy.parameters()), before);
  EXPECT_NEAR(trainer.last_report().mean_ratio, 1.0, 1e-12);
  EXPECT_EQ(trainer.last_report().clip_fraction, 0.0);
}

TEST(Update, NonFiniteLossThrows) {
  nn::Policy policy(nn::PolicyConfig{}, 1);
  std::vector<Transition> buf(2);
  buf[1].reward_to_go = std::nan("");
  nn::Adam<double> opt;
  EXPECT_THROW(update(buf, policy, opt, tiny(), 1), Error);
}

TEST(Trainer, Deterministic) {
  auto run = [] {
    nn::Policy policy(nn::PolicyConfig{}, 1);
    auto cfg = tiny();
    cfg.augmentation = true;
    cfg.eval_every = 1;
    Trainer t(policy, {short_scenario(), short_scenario("INT-7")}, cfg);
    t.run();
    return std::make_pair(nn::export_tensors(policy.parameters()), t.curve().back().combined_loss);
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Trainer, FrozenExtractorStaysFixed) {
  nn::Policy policy(nn::PolicyConfig{}, 1);
  for (auto& e : policy.parameters()) e.trainable = e.name.rfind("actor.", 0) == 0 || e.name.rfind("critic.", 0) == 0;
  const auto before = nn::export_tensors(policy.parameters());
  Trainer t(policy, {short_scenario()}, tiny());
  t.iterate();
  const auto after = nn::export_tensors(policy.parameters());
  for (std::size_t i = 0; i < before.size(); ++i) {
    const bool head = before[i].name.rfind("actor.", 0) == 0 || before[i].name.rfind("critic.", 0) == 0;
    if (!head) EXPECT_EQ(before[i], after[i]) << before[i].name;
  }
  EXPECT_NE(before, after);
}

TEST(Config, Rejections) {
  auto c = tiny();
  c.parallel_envs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny();
  c.clip_epsilon = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}
