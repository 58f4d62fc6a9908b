#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "unitsa/augment/augment.hpp"

using namespace unitsa;
using namespace unitsa::augment;
using test_support::random_state;

namespace {
constexpr std::array<bool, 8> kThreeWay = {true, true, false, false, false, true, true, false};
}

TEST(Shuffle, RowsFollowPermutation) {
  Rng rng(1);
  const auto s = random_state(rng);
  const Permutation p = {3, 0, 7, 1, 6, 2, 5, 4};
  const auto out = movement_shuffle(s, p);
  for (std::size_t k = 0; k < kFrames; ++k) {
    for (std::size_t i = 0; i < kMovements; ++i) EXPECT_EQ(out.frames[k][i], s.frames[k][p[i]]);
  }
  Permutation inverse{};
  for (std::size_t i = 0; i < kMovements; ++i) inverse[p[i]] = i;
  EXPECT_EQ(movement_shuffle(out, inverse).frames, s.frames);
  EXPECT_THROW(movement_shuffle(s, Permutation{0, 0, 1, 2, 3, 4, 5, 6}), ConfigError);
}

TEST(LaneChange, ExactRatios) {
  Rng rng(2);
  const auto s = random_state(rng);
  std::array<int, 8> targets = {4, 0, 1, 5, 2, 0, 3, 1};
  const auto out = change_lane_numbers(s, targets);
  for (std::size_t k = 0; k < kFrames; ++k) {
    for (std::size_t i = 0; i < kMovements; ++i) {
      const auto& a = s.frames[k][i];
      const auto& b = out.frames[k][i];
      if (targets[i] == 0) {
        EXPECT_EQ(a, b);
        continue;
      }
      const double rho = targets[i] / a[encoder::kLanes];
      EXPECT_EQ(b[encoder::kLanes], targets[i]);
      for (std::size_t f : {encoder::kFlow, encoder::kOccupancyMax, encoder::kOccupancyMean}) {
        EXPECT_NEAR(b[f], a[f] * rho, 1e-12 * std::abs(a[f] * rho));
      }
      for (std::size_t f : {encoder::kStraight, encoder::kGreenNow, encoder::kGreenNext, encoder::kMinGreen}) {
        EXPECT_EQ(b[f], a[f]);
      }
    }
  }
}

TEST(LaneChange, PaddedRowRejected) {
  Rng rng(3);
  const auto s = random_state(rng, kThreeWay);
  std::array<int, 8> targets{};
  targets[0] = 2;  // N is absent at a three-way junction
  EXPECT_THROW(change_lane_numbers(s, targets), ConfigError);
}

TEST(FlowScale, OnlyTrafficColumns) {
  Rng rng(4);
  const auto s = random_state(rng);
  const auto out = traffic_flow_scale(s, 1.25);
  for (std::size_t k = 0; k < kFrames; ++k) {
    for (std::size_t i = 0; i < kMovements; ++i) {
      for (std::size_t f = 0; f < kFeatures; ++f) {
        const double expect = f <= encoder::kOccupancyMean ? s.frames[k][i][f] * 1.25 : s.frames[k][i][f];
        EXPECT_DOUBLE_EQ(out.frames[k][i][f], expect);
      }
    }
  }
  EXPECT_THROW(traffic_flow_scale(s, 0.0), ConfigError);
}

TEST(Noise, PaddedRowsStayZeroAndMomentsMatch) {
  Rng rng(5);
  const auto s = random_state(rng, kThreeWay);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto out = add_gaussian_noise(s, seed);
    for (std::size_t k = 0; k < kFrames; ++k) {
      for (std::size_t i = 0; i < kMovements; ++i) {
        for (std::size_t f = 0; f < kFeatures; ++f) {
          const double d = out.frames[k][i][f] - s.frames[k][i][f];
          if (kThreeWay[i]) {
            ASSERT_EQ(out.frames[k][i][f], 0.0);
          } else {
            sum += d;
            sq += d * d;
            ++n;
          }
        }
      }
    }
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  // n = 51200 draws: se(mean) ~ 0.0044, se(var) ~ 0.0063.
  EXPECT_NEAR(mean, 0.0, 0.03);
  EXPECT_NEAR(var, 1.0, 0.04);
  EXPECT_EQ(add_gaussian_noise(s, 9).frames, add_gaussian_noise(s, 9).frames);
}

TEST(Mask, ZeroesWindowKeepsNewest) {
  Rng rng(6);
  const auto s = random_state(rng);
  const auto out = mask_frames(s, MaskWindow{5, 2});
  for (std::size_t k = 0; k < kFrames; ++k) {
    if (k == 5 || k == 6) {
      EXPECT_EQ(out.frames[k], encoder::JunctionMatrix{});
    } else {
      EXPECT_EQ(out.frames[k], s.frames[k]);
    }
  }
  EXPECT_THROW(mask_frames(s, MaskWindow{6, 2}), ConfigError);
}

TEST(Plan, SamplesWithinBounds) {
  PlanBounds b;
  std::array<int, kNumTransforms> hits{};
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const auto p = sample_plan(seed, b);
    ASSERT_TRUE(is_permutation(p.permutation));
    for (int t : p.lane_targets) ASSERT_TRUE(t >= 1 && t <= 5);
    ASSERT_TRUE(p.alpha >= 0.5 && p.alpha <= 1.5);
    ASSERT_TRUE(p.mask_window->length >= 1 && p.mask_window->start + p.mask_window->length <= kFrames - 1);
    for (std::size_t t = 0; t < kNumTransforms; ++t) hits[t] += p.apply[t];
  }
  for (int h : hits) EXPECT_NEAR(h, 1000, 5 * 22.4);
  b.enabled[kNoise] = false;
  for (std::uint64_t seed = 0; seed < 100; ++seed) EXPECT_FALSE(sample_plan(seed, b).apply[kNoise]);
  b.apply_probability = 1.5;
  EXPECT_THROW(sample_plan(0, b), ConfigError);
}

TEST(Pipeline, PaddedRowsSurviveFullPlan) {
  Rng rng(7);
  PlanBounds b;
  b.apply_probability = 1.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = random_state(rng, kThreeWay);
    const auto plan = sample_plan(seed, b);
    const auto out = augment::augment(s, plan);
    for (std::size_t i = 0; i < kMovements; ++i) {
      if (!kThreeWay[plan.permutation[i]]) continue;
      for (const auto& frame : out.frames) ASSERT_EQ(frame[i], encoder::MovementVector{});
    }
  }
}
