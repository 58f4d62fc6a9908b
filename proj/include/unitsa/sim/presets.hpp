#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "unitsa/common.hpp"
#include "unitsa/rng.hpp"
#include "unitsa/sim/config.hpp"

namespace unitsa::sim {

namespace detail {

inline IntersectionConfig make_preset(std::string name, int roads, std::vector<int> road_lanes,
                                      std::vector<MovementMask> phases) {
  IntersectionConfig c;
  c.name = std::move(name);
  c.roads = roads;
  c.lanes = movement_lanes_from_roads(roads, road_lanes);
  c.road_lanes = std::move(road_lanes);
  for (const auto& green : phases) c.phases.push_back(Phase{green});
  return c;
}

}  // namespace detail

/// Names of the built-in intersection presets, INT-1 .. INT-11.
inline std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (int i = 1; i <= 11; ++i) names.push_back("INT-" + std::to_string(i));
  return names;
}

/// Built-in intersections: roads, lanes per road and phase counts follow the
/// published zoo (INT-1..8 training, INT-9..11 held out). Phase contents are
/// our own choice where only the count is known.
inline IntersectionConfig preset(std::string_view name) {
  using M = MovementId;
  const auto ns = make_mask({M::N, M::S});
  const auto ns_left = make_mask({M::NL, M::SL});
  const auto ew = make_mask({M::E, M::W});
  const auto ew_left = make_mask({M::EL, M::WL});
  const std::vector<int> regular = {3, 3, 3, 3};
  const std::vector<int> large = {3, 4, 4, 5};

  if (name == "INT-1") return detail::make_preset("INT-1", 4, regular, {ns, ns_left, ew, ew_left});
  if (name == "INT-2") return detail::make_preset("INT-2", 4, regular, {ew, ew_left, ns, ns_left});
  if (name == "INT-3") {
    return detail::make_preset("INT-3", 4, regular,
                               {make_mask({M::N, M::NL, M::S, M::SL}), make_mask({M::E, M::EL, M::W, M::WL})});
  }
  if (name == "INT-4") return detail::make_preset("INT-4", 4, large, {ns, ns_left, ew, ew_left});
  if (name == "INT-5") {
    return detail::make_preset("INT-5", 4, large,
                               {make_mask({M::N, M::NL}), make_mask({M::S, M::SL}), make_mask({M::E, M::EL}),
                                make_mask({M::W, M::WL})});
  }
  if (name == "INT-6") {
    return detail::make_preset("INT-6", 4, large,
                               {ns, make_mask({M::N, M::NL}), make_mask({M::S, M::SL}), ew,
                                make_mask({M::E, M::EL}), make_mask({M::W, M::WL})});
  }
  if (name == "INT-7") {
    return detail::make_preset("INT-7", 3, {3, 3, 3}, {ew, make_mask({M::E, M::EL}), make_mask({M::SL})});
  }
  if (name == "INT-8") {
    return detail::make_preset("INT-8", 3, {3, 3, 3}, {ew, make_mask({M::SL}), make_mask({M::E, M::EL})});
  }
  if (name == "INT-9") return detail::make_preset("INT-9", 4, {3, 4, 3, 4}, {ns, ns_left, ew, ew_left});
  if (name == "INT-10") {
    return detail::make_preset("INT-10", 4, regular,
                               {ns, ns_left, ew, make_mask({M::E, M::EL}), make_mask({M::W, M::WL})});
  }
  if (name == "INT-11") {
    return detail::make_preset("INT-11", 3, {4, 3, 3},
                               {ew, make_mask({M::W, M::SL}), make_mask({M::E, M::EL})});
  }
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected INT-1 .. INT-11)");
}

/// Parameters for synthetic route demand: each route draws, per active
/// movement and per time segment, a per-lane rate uniformly from
/// [min_rate_per_lane, max_rate_per_lane].
struct DemandGenerator {
  double min_rate_per_lane = 0.02;
  double max_rate_per_lane = 0.06;
  int segments = 3;
  double horizon_s = 3000.0;
};

/// Deterministic route for (config, generator, route_seed).
inline DemandSchedule generate_demand(const IntersectionConfig& config, const DemandGenerator& gen,
                                      std::uint64_t route_seed) {
  if (gen.segments < 1) throw ConfigError("demand generator: segments must be >= 1");
  if (!(gen.min_rate_per_lane >= 0.0) || gen.max_rate_per_lane < gen.min_rate_per_lane) {
    throw ConfigError("demand generator: need 0 <= min_rate_per_lane <= max_rate_per_lane");
  }
  DemandSchedule d;
  d.horizon_s = gen.horizon_s;
  d.seed = derive_seed(route_seed, 1);
  Rng rng(derive_seed(route_seed, 0));
  for (std::size_t i = 0; i < kMovements; ++i) {
    if (!config.active(i)) continue;
    for (int s = 0; s < gen.segments; ++s) {
      const double rate = config.lanes[i] * rng.uniform(gen.min_rate_per_lane, gen.max_rate_per_lane);
      d.rates[i].push_back(RateSegment{gen.horizon_s * s / gen.segments, rate});
    }
  }
  return d;
}

}  // namespace unitsa::sim
