#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "unitsa/common.hpp"
#include "unitsa/rng.hpp"
#include "unitsa/sim/movement.hpp"

namespace unitsa::sim {

/// One signal phase: the movements that receive green together.
struct Phase {
  MovementMask green;
};

/// Static description of one intersection: topology, cyclic phase plan and
/// timing constraints.
struct IntersectionConfig {
  std::string name = "intersection";
  int roads = 4;
  /// Incoming lanes per road, clockwise. 4-way roads are (N, E, S, W);
  /// 3-way roads are (E, S, W). Informational once `lanes` is filled.
  std::vector<int> road_lanes;
  /// Lanes serving each movement; 0 marks an absent (padded) movement.
  MovementArray<int> lanes{};
  MovementArray<bool> is_straight = {true, false, true, false, true, false, true, false};
  /// Executed in this order, cyclically.
  std::vector<Phase> phases;
  double min_green_s = 5.0;
  double yellow_s = 3.0;
  double action_interval_s = 5.0;
  double detection_range_m = 150.0;
  double saturation_flow_vps = 0.5;
  double vehicle_length_m = 5.0;

  bool active(std::size_t movement) const { return lanes[movement] > 0; }

  MovementMask active_mask() const {
    MovementMask mask;
    for (std::size_t i = 0; i < kMovements; ++i) mask.set(i, active(i));
    return mask;
  }

  std::size_t num_phases() const { return phases.size(); }

  std::size_t next_phase(std::size_t phase) const { return (phase + 1) % phases.size(); }
};

/// Movements a 3-way (no north approach) junction cannot have.
inline MovementMask three_way_absent_mask() {
  return make_mask({MovementId::N, MovementId::NL, MovementId::S, MovementId::WL});
}

namespace detail {

inline bool is_whole_seconds(double s) { return s >= 0.0 && std::floor(s) == s; }

}  // namespace detail

/// Throws ConfigError naming the first violated constraint.
inline void validate(const IntersectionConfig& config) {
  if (config.roads != 3 && config.roads != 4) {
    throw ConfigError("roads: expected 3 or 4, got " + std::to_string(config.roads));
  }
  for (std::size_t i = 0; i < kMovements; ++i) {
    if (config.lanes[i] < 0) {
      throw ConfigError("lanes_per_movement: negative lane count on movement " +
                        std::string(movement_name(i)));
    }
    if (config.is_straight[i] != is_straight_movement(i)) {
      throw ConfigError("is_straight: movement " + std::string(movement_name(i)) +
                        " has the wrong direction flag");
    }
  }
  const MovementMask forbidden = config.roads == 3 ? three_way_absent_mask() : MovementMask{};
  for (std::size_t i = 0; i < kMovements; ++i) {
    const bool should_be_active = !forbidden.test(i);
    if (config.active(i) != should_be_active) {
      throw ConfigError("lanes_per_movement: movement " + std::string(movement_name(i)) +
                        (should_be_active ? " must have lanes" : " must be absent") + " on a " +
                        std::to_string(config.roads) + "-way intersection");
    }
  }
  if (config.phases.empty()) throw ConfigError("phases: at least one phase is required");
  const MovementMask active = config.active_mask();
  for (std::size_t p = 0; p < config.phases.size(); ++p) {
    const MovementMask& green = config.phases[p].green;
    if (green.none()) throw ConfigError("phases[" + std::to_string(p) + "]: empty green set");
    if ((green & ~active).any()) {
      throw ConfigError("phases[" + std::to_string(p) + "]: green set includes absent movement(s) " +
                        mask_to_string(green & ~active));
    }
  }
  if (!detail::is_whole_seconds(config.action_interval_s) || config.action_interval_s < 1.0) {
    throw ConfigError("action_interval_s: must be a whole number of seconds >= 1");
  }
  if (!detail::is_whole_seconds(config.yellow_s) || config.yellow_s >= config.action_interval_s) {
    throw ConfigError("yellow_s: must be whole seconds shorter than action_interval_s");
  }
  if (config.min_green_s < 0.0) throw ConfigError("min_green_s: must be >= 0");
  if (!(config.detection_range_m > 0.0)) throw ConfigError("detection_range_m: must be > 0");
  if (!(config.saturation_flow_vps > 0.0)) throw ConfigError("saturation_flow_vps: must be > 0");
  if (!(config.vehicle_length_m > 0.0)) throw ConfigError("vehicle_length_m: must be > 0");
}

/// Splits per-road incoming lanes into per-movement lanes.
///
/// 4-way roads carry straight + left (+ a shared right): one left lane, two
/// from five lanes up, the rest straight. On a 3-way junction the east road
/// has straight + left, the south road left + a right-turn lane and the west
/// road straight + a right-turn lane.
inline MovementArray<int> movement_lanes_from_roads(int roads, const std::vector<int>& road_lanes) {
  if (roads != 3 && roads != 4) throw ConfigError("roads: expected 3 or 4");
  if (road_lanes.size() != static_cast<std::size_t>(roads)) {
    throw ConfigError("road_lanes: expected " + std::to_string(roads) + " entries");
  }
  for (int n : road_lanes) {
    if (n < 2) throw ConfigError("road_lanes: every road needs at least 2 lanes");
  }
  auto split = [](int n) {
    const int left = n >= 5 ? 2 : 1;
    return std::pair{n - left, left};
  };
  MovementArray<int> lanes{};
  if (roads == 4) {
    const std::array<MovementId, 4> straight = {MovementId::N, MovementId::E, MovementId::S, MovementId::W};
    const std::array<MovementId, 4> left = {MovementId::NL, MovementId::EL, MovementId::SL, MovementId::WL};
    for (std::size_t r = 0; r < 4; ++r) {
      auto [s, l] = split(road_lanes[r]);
      lanes[index(straight[r])] = s;
      lanes[index(left[r])] = l;
    }
  } else {
    auto [es, el] = split(road_lanes[0]);
    lanes[index(MovementId::E)] = es;
    lanes[index(MovementId::EL)] = el;
    lanes[index(MovementId::SL)] = road_lanes[1] - 1;
    lanes[index(MovementId::W)] = road_lanes[2] - 1;
  }
  return lanes;
}

/// A rate that holds from `start_s` until the next segment starts.
struct RateSegment {
  double start_s = 0.0;
  double rate_vps = 0.0;
};

/// Per-movement piecewise-constant arrival rates plus the seed that fixes
/// the realized arrival stream.
struct DemandSchedule {
  MovementArray<std::vector<RateSegment>> rates;
  /// Deterministic arrivals merged into the Poisson stream (replayed traces).
  MovementArray<std::vector<double>> fixed_arrivals;
  double horizon_s = 3600.0;
  std::uint64_t seed = 0;

  static DemandSchedule constant(const MovementArray<double>& rate_vps, double horizon_s,
                                 std::uint64_t seed) {
    DemandSchedule d;
    d.horizon_s = horizon_s;
    d.seed = seed;
    for (std::size_t i = 0; i < kMovements; ++i) {
      if (rate_vps[i] != 0.0) d.rates[i] = {RateSegment{0.0, rate_vps[i]}};
    }
    return d;
  }

  bool has_demand(std::size_t movement) const {
    if (!fixed_arrivals[movement].empty()) return true;
    return std::any_of(rates[movement].begin(), rates[movement].end(),
                       [](const RateSegment& s) { return s.rate_vps > 0.0; });
  }

  double rate_at(std::size_t movement, double t) const {
    double rate = 0.0;
    for (const RateSegment& s : rates[movement]) {
      if (s.start_s <= t) rate = s.rate_vps;
    }
    return rate;
  }
};

inline void validate(const DemandSchedule& demand) {
  if (!(demand.horizon_s > 0.0)) throw ConfigError("horizon_s: must be > 0");
  for (std::size_t i = 0; i < kMovements; ++i) {
    double prev = -1.0;
    for (const RateSegment& s : demand.rates[i]) {
      if (!(s.rate_vps >= 0.0) || !std::isfinite(s.rate_vps)) {
        throw ConfigError("demand." + std::string(movement_name(i)) + ": rates must be finite and >= 0");
      }
      if (!(s.start_s > prev) || s.start_s < 0.0) {
        throw ConfigError("demand." + std::string(movement_name(i)) +
                          ": segment starts must be >= 0 and strictly increasing");
      }
      prev = s.start_s;
    }
    for (double t : demand.fixed_arrivals[i]) {
      if (!(t >= 0.0) || !std::isfinite(t)) {
        throw ConfigError("demand." + std::string(movement_name(i)) + ": fixed arrival times must be >= 0");
      }
    }
  }
}

inline void validate(const IntersectionConfig& config, const DemandSchedule& demand) {
  validate(config);
  validate(demand);
  for (std::size_t i = 0; i < kMovements; ++i) {
    if (demand.has_demand(i) && !config.active(i)) {
      throw ConfigError("demand on movement " + std::string(movement_name(i)) +
                        " which has zero lanes in '" + config.name + "'");
    }
  }
}

/// Realizes the arrival stream of one movement: a unit-rate Poisson process
/// mapped through the inverse cumulative intensity. Raising the rate curve
/// pointwise moves every arrival earlier and adds arrivals, so paired seeds
/// give pathwise-dominating streams.
inline std::vector<double> generate_arrivals(const DemandSchedule& demand, std::size_t movement) {
  std::vector<double> times;
  const auto& segments = demand.rates[movement];
  Rng rng(derive_seed(demand.seed, movement));
  double unit_time = rng.exponential();
  double cumulative = 0.0;  // integrated intensity up to the current segment start
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const double start = segments[s].start_s;
    if (start >= demand.horizon_s) break;
    const double end = s + 1 < segments.size() ? std::min(segments[s + 1].start_s, demand.horizon_s)
                                               : demand.horizon_s;
    const double rate = segments[s].rate_vps;
    const double mass = rate * (end - start);
    while (rate > 0.0 && unit_time < cumulative + mass) {
      const double t = start + (unit_time - cumulative) / rate;
      if (t >= end) break;
      times.push_back(t);
      unit_time += rng.exponential();
    }
    cumulative += mass;
  }
  for (double t : demand.fixed_arrivals[movement]) {
    if (t < demand.horizon_s) times.push_back(t);
  }
  std::stable_sort(times.begin(), times.end());
  return times;
}

}  // namespace unitsa::sim
