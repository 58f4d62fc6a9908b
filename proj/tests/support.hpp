#pragma once

#include "unitsa/encoder/state.hpp"
#include "unitsa/rng.hpp"

namespace test_support {

using unitsa::encoder::TrafficState;

/// Plausible state: rows flagged in `padded` stay zero, the others get
/// positive traffic readings, integer lanes in 1..5 and 0/1 flags.
inline TrafficState random_state(unitsa::Rng& rng, const std::array<bool, 8>& padded = {}) {
  namespace e = unitsa::encoder;
  TrafficState s{};
  std::array<double, 8> lanes{};
  std::array<double, 8> straight{};
  for (std::size_t i = 0; i < 8; ++i) {
    lanes[i] = static_cast<double>(rng.uniform_int(1, 5));
    straight[i] = i % 2 == 0 ? 1.0 : 0.0;
  }
  for (auto& frame : s.frames) {
    for (std::size_t i = 0; i < 8; ++i) {
      if (padded[i]) continue;
      auto& row = frame[i];
      row[e::kFlow] = rng.uniform(0.0, 3.0);
      row[e::kOccupancyMax] = rng.uniform(0.1, 1.0);
      row[e::kOccupancyMean] = row[e::kOccupancyMax] * rng.uniform(0.2, 1.0);
      row[e::kStraight] = straight[i];
      row[e::kLanes] = lanes[i];
      row[e::kGreenNow] = rng.uniform() < 0.5 ? 1.0 : 0.0;
      row[e::kGreenNext] = rng.uniform() < 0.5 ? 1.0 : 0.0;
      row[e::kMinGreen] = row[e::kGreenNow] * (rng.uniform() < 0.5 ? 1.0 : 0.0);
    }
  }
  return s;
}

}  // namespace test_support
