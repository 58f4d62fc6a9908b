#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>

#include "unitsa/common.hpp"
#include "unitsa/encoder/state.hpp"
#include "unitsa/rng.hpp"

namespace unitsa::augment {

using encoder::JunctionMatrix;
using encoder::kFeatures;
using encoder::kFrames;
using encoder::TrafficState;
using sim::kMovements;

using Permutation = std::array<std::size_t, kMovements>;
using RowMask = std::array<bool, kMovements>;

/// Consecutive frames [start, start + length) to blank out.
struct MaskWindow {
  std::size_t start = 0;
  std::size_t length = 0;
};

/// Index into AugmentationPlan::apply, in pipeline order.
enum Transform : std::size_t { kShuffle = 0, kLaneChange, kFlowScale, kNoise, kMask, kNumTransforms };

/// Parameters of one augmentation draw. A single plan governs every frame
/// of one traffic state.
struct AugmentationPlan {
  Permutation permutation = identity_permutation();
  /// New lane count per output row (after shuffling); 0 leaves the row as is.
  std::array<int, kMovements> lane_targets{};
  double alpha = 1.0;
  std::uint64_t noise_seed = 0;
  double noise_std = 1.0;
  std::optional<MaskWindow> mask_window;
  std::array<bool, kNumTransforms> apply{};

  static constexpr Permutation identity_permutation() {
    Permutation p{};
    for (std::size_t i = 0; i < kMovements; ++i) p[i] = i;
    return p;
  }
};

inline bool is_permutation(const Permutation& p) {
  std::array<bool, kMovements> seen{};
  for (std::size_t v : p) {
    if (v >= kMovements || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

/// Rows that are zero in every frame.
inline RowMask padded_rows(const TrafficState& s) {
  RowMask padded;
  padded.fill(true);
  for (const auto& frame : s.frames) {
    for (std::size_t r = 0; r < kMovements; ++r) {
      if (!padded[r]) continue;
      for (double v : frame[r]) {
        if (v != 0.0) {
          padded[r] = false;
          break;
        }
      }
    }
  }
  return padded;
}

/// Output row i takes input row permutation[i], in every frame.
inline TrafficState movement_shuffle(const TrafficState& s, const Permutation& permutation) {
  if (!is_permutation(permutation)) throw ConfigError("movement_shuffle: permutation is not a bijection on 0..7");
  TrafficState out;
  for (std::size_t k = 0; k < kFrames; ++k) {
    for (std::size_t i = 0; i < kMovements; ++i) out.frames[k][i] = s.frames[k][permutation[i]];
  }
  return out;
}

/// Rescales rows to a new lane count: flow, both occupancies and the lane
/// entry scale by target / current lanes, every other entry is kept.
/// Frames where the row is all zero (history not yet filled) are untouched.
inline TrafficState change_lane_numbers(const TrafficState& s, const std::array<int, kMovements>& lane_targets) {
  const JunctionMatrix& newest = s.newest();
  for (std::size_t i = 0; i < kMovements; ++i) {
    if (lane_targets[i] < 0) throw ConfigError("change_lane_numbers: negative lane target");
    if (lane_targets[i] > 0 && !(newest[i][encoder::kLanes] >= 1.0)) {
      throw ConfigError("change_lane_numbers: row " + std::to_string(i) + " is padded and cannot be retargeted");
    }
  }
  TrafficState out = s;
  for (auto& frame : out.frames) {
    for (std::size_t i = 0; i < kMovements; ++i) {
      const double lanes = frame[i][encoder::kLanes];
      if (lane_targets[i] == 0 || lanes == 0.0) continue;
      const double ratio = static_cast<double>(lane_targets[i]) / lanes;
      for (std::size_t k : {encoder::kFlow, encoder::kOccupancyMax, encoder::kOccupancyMean}) {
        frame[i][k] *= ratio;
      }
      // Set directly so that lanes come out as the exact target value.
      frame[i][encoder::kLanes] = static_cast<double>(lane_targets[i]);
    }
  }
  return out;
}

/// Multiplies flow and occupancies of every row in every frame by `alpha`.
inline TrafficState traffic_flow_scale(const TrafficState& s, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("traffic_flow_scale: alpha must be > 0");
  TrafficState out = s;
  for (auto& frame : out.frames) {
    for (auto& row : frame) {
      row[encoder::kFlow] *= alpha;
      row[encoder::kOccupancyMax] *= alpha;
      row[encoder::kOccupancyMean] *= alpha;
    }
  }
  return out;
}

/// Adds independent N(0, stddev^2) noise to every entry, fresh per frame,
/// then restores padded rows to zero.
inline TrafficState add_gaussian_noise(const TrafficState& s, std::uint64_t noise_seed, double stddev = 1.0) {
  const RowMask padded = padded_rows(s);
  Rng rng(noise_seed);
  TrafficState out = s;
  for (auto& frame : out.frames) {
    for (std::size_t i = 0; i < kMovements; ++i) {
      for (std::size_t k = 0; k < kFeatures; ++k) {
        const double noise = stddev * rng.normal();
        if (!padded[i]) frame[i][k] += noise;
      }
    }
  }
  return out;
}

/// Zeroes the frames of the window; the newest frame may not be masked.
inline TrafficState mask_frames(const TrafficState& s, const MaskWindow& window) {
  if (window.length == 0) return s;
  if (window.start + window.length > kFrames - 1) {
    throw ConfigError("mask_frames: window must end before the newest frame");
  }
  TrafficState out = s;
  for (std::size_t k = window.start; k < window.start + window.length; ++k) out.frames[k] = JunctionMatrix{};
  return out;
}

/// Applies the enabled transforms in pipeline order: shuffle, lane change,
/// flow scale, noise, mask.
inline TrafficState augment(const TrafficState& s, const AugmentationPlan& plan) {
  TrafficState out = s;
  if (plan.apply[kShuffle]) out = movement_shuffle(out, plan.permutation);
  if (plan.apply[kLaneChange]) {
    // Targets are drawn for every row; rows that are padded after the
    // shuffle are skipped here.
    auto targets = plan.lane_targets;
    const auto& newest = out.newest();
    for (std::size_t i = 0; i < kMovements; ++i) {
      if (newest[i][encoder::kLanes] < 1.0) targets[i] = 0;
    }
    out = change_lane_numbers(out, targets);
  }
  if (plan.apply[kFlowScale]) out = traffic_flow_scale(out, plan.alpha);
  if (plan.apply[kNoise]) out = add_gaussian_noise(out, plan.noise_seed, plan.noise_std);
  if (plan.apply[kMask] && plan.mask_window) out = mask_frames(out, *plan.mask_window);
  return out;
}

/// Ranges for sample_plan.
struct PlanBounds {
  double apply_probability = 0.5;
  int min_lanes = 1;
  int max_lanes = 5;
  double alpha_min = 0.5;
  double alpha_max = 1.5;
  double noise_std = 1.0;
  std::size_t mask_min_length = 1;
  std::size_t mask_max_length = 2;
  /// Per-transform switch; a disabled transform is never sampled.
  std::array<bool, kNumTransforms> enabled = {true, true, true, true, true};

  void validate() const {
    if (apply_probability < 0.0 || apply_probability > 1.0) {
      throw ConfigError("augmentation: apply_probability must be in [0, 1]");
    }
    if (min_lanes < 1 || max_lanes < min_lanes) throw ConfigError("augmentation: need 1 <= min_lanes <= max_lanes");
    if (!(alpha_min > 0.0) || alpha_max < alpha_min) throw ConfigError("augmentation: need 0 < alpha_min <= alpha_max");
    if (noise_std < 0.0) throw ConfigError("augmentation: noise_std must be >= 0");
    if (mask_max_length < mask_min_length || mask_max_length > kFrames - 1) {
      throw ConfigError("augmentation: mask lengths must satisfy min <= max <= K-1");
    }
  }
};

/// Draws an independent plan. The permutation is uniform (Fisher-Yates),
/// lane targets and mask start/length are uniform integers, alpha is
/// uniform on [alpha_min, alpha_max].
inline AugmentationPlan sample_plan(std::uint64_t rng_seed, const PlanBounds& bounds) {
  bounds.validate();
  Rng rng(rng_seed);
  AugmentationPlan plan;
  for (std::size_t t = 0; t < kNumTransforms; ++t) {
    const bool hit = rng.uniform() < bounds.apply_probability;
    plan.apply[t] = bounds.enabled[t] && hit;
  }
  for (std::size_t i = kMovements - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(plan.permutation[i], plan.permutation[j]);
  }
  for (auto& target : plan.lane_targets) target = static_cast<int>(rng.uniform_int(bounds.min_lanes, bounds.max_lanes));
  plan.alpha = rng.uniform(bounds.alpha_min, bounds.alpha_max);
  plan.noise_seed = rng.next_u64();
  plan.noise_std = bounds.noise_std;
  const auto length = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(bounds.mask_min_length),
                                                               static_cast<std::int64_t>(bounds.mask_max_length)));
  const auto last_start = static_cast<std::int64_t>(kFrames - 1 - length);
  plan.mask_window = MaskWindow{static_cast<std::size_t>(rng.uniform_int(0, last_start)), length};
  return plan;
}

}  // namespace unitsa::augment
