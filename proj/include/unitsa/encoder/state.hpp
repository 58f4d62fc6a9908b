#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "unitsa/sim/config.hpp"
#include "unitsa/sim/environment.hpp"

namespace unitsa::encoder {

inline constexpr std::size_t kFeatures = 8;
inline constexpr std::size_t kFrames = 8;

/// Feature slots of a movement vector, in row order.
enum Feature : std::size_t {
  kFlow = 0,
  kOccupancyMax = 1,
  kOccupancyMean = 2,
  kStraight = 3,
  kLanes = 4,
  kGreenNow = 5,
  kGreenNext = 6,
  kMinGreen = 7,
};

using MovementVector = std::array<double, kFeatures>;

/// 8x8, row i = movement i in canonical order. Absent movements are zero rows.
using JunctionMatrix = std::array<MovementVector, sim::kMovements>;

/// The K most recent junction matrices, oldest first.
struct TrafficState {
  std::array<JunctionMatrix, kFrames> frames{};

  static constexpr std::size_t size() { return kFrames * sim::kMovements * kFeatures; }

  const double* data() const { return &frames[0][0][0]; }
  double* data() { return &frames[0][0][0]; }

  const JunctionMatrix& newest() const { return frames.back(); }

  friend bool operator==(const TrafficState&, const TrafficState&) = default;
};

static_assert(sizeof(TrafficState) == TrafficState::size() * sizeof(double));

/// Static per-movement facts the sensors do not carry.
struct MovementInfo {
  bool active = false;
  bool straight = false;
  int lanes = 0;
};

/// Signal flags for one movement at decision time.
struct SignalFlags {
  bool green_now = false;
  bool green_next = false;
  bool min_green_reached = false;
};

inline MovementVector encode_movement(const sim::MovementSensors& sensors, const MovementInfo& info,
                                      const SignalFlags& flags) {
  if (!info.active) return MovementVector{};
  return MovementVector{sensors.flow,
                        sensors.occupancy_max,
                        sensors.occupancy_mean,
                        info.straight ? 1.0 : 0.0,
                        static_cast<double>(info.lanes),
                        flags.green_now ? 1.0 : 0.0,
                        flags.green_next ? 1.0 : 0.0,
                        flags.min_green_reached ? 1.0 : 0.0};
}

inline JunctionMatrix encode_junction(const sim::StepOutcome& outcome, const sim::IntersectionConfig& config) {
  JunctionMatrix j{};
  for (std::size_t i = 0; i < sim::kMovements; ++i) {
    const MovementInfo info{config.active(i), config.is_straight[i], config.lanes[i]};
    const SignalFlags flags{outcome.green_now.test(i), outcome.green_next.test(i),
                            outcome.min_green_reached.test(i)};
    j[i] = encode_movement(outcome.sensors[i], info, flags);
  }
  return j;
}

/// Sliding window: drops the oldest frame and appends `j` as newest.
inline TrafficState push_frame(const TrafficState& state, const JunctionMatrix& j) {
  TrafficState out;
  std::copy(state.frames.begin() + 1, state.frames.end(), out.frames.begin());
  out.frames.back() = j;
  return out;
}

/// Negative total queue length.
inline double raw_reward(const sim::MovementArray<int>& queues) {
  double total = 0.0;
  for (int q : queues) total += q;
  return -total;
}

/// Normalizes raw rewards with the mean / standard deviation of the first
/// `warmup` samples, then freezes. Before the freeze the running statistics
/// of the samples seen so far are used.
class RewardNormalizer {
 public:
  explicit RewardNormalizer(std::size_t warmup = 1000, double epsilon = 1e-8)
      : warmup_(warmup), epsilon_(epsilon) {}

  /// Restores a frozen normalizer (e.g. from a checkpoint).
  static RewardNormalizer frozen(double mu, double sigma, double epsilon = 1e-8) {
    RewardNormalizer n(0, epsilon);
    n.mu_ = mu;
    n.sigma_ = sigma;
    n.frozen_ = true;
    return n;
  }

  double normalize(double raw) {
    if (!frozen_) observe(raw);
    return apply(raw);
  }

  /// Normalization without updating statistics.
  double apply(double raw) const { return (raw - mu_) / (sigma_ + epsilon_); }

  bool is_frozen() const { return frozen_; }
  double mean() const { return mu_; }
  double stddev() const { return sigma_; }
  double epsilon() const { return epsilon_; }
  std::size_t count() const { return count_; }
  std::size_t warmup() const { return warmup_; }

 private:
  void observe(double raw) {
    // Welford update; population variance over the samples seen.
    ++count_;
    const double delta = raw - mu_;
    mu_ += delta / static_cast<double>(count_);
    m2_ += delta * (raw - mu_);
    sigma_ = std::sqrt(std::max(0.0, m2_ / static_cast<double>(count_)));
    if (count_ >= warmup_) frozen_ = true;
  }

  std::size_t warmup_;
  double epsilon_;
  std::size_t count_ = 0;
  double mu_ = 0.0;
  double m2_ = 0.0;
  double sigma_ = 0.0;
  bool frozen_ = false;
};

}  // namespace unitsa::encoder
