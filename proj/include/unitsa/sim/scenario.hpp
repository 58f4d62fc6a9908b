#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "unitsa/rng.hpp"
#include "unitsa/sim/config.hpp"
#include "unitsa/sim/presets.hpp"

namespace unitsa::sim {

/// An intersection together with where its traffic comes from. A route
/// seed picks one episode's demand: either a generated route (rates and
/// arrivals both depend on the seed) or, when `demand` is set, that fixed
/// schedule with its arrival seed replaced by the route seed.
struct Scenario {
  IntersectionConfig config;
  DemandGenerator generator;
  std::optional<DemandSchedule> demand;
  std::vector<std::uint64_t> train_routes;
  std::vector<std::uint64_t> eval_routes;

  DemandSchedule route(std::uint64_t route_seed) const {
    if (demand) {
      DemandSchedule d = *demand;
      d.seed = derive_seed(route_seed, 2);
      return d;
    }
    return generate_demand(config, generator, route_seed);
  }

  double horizon_s() const { return demand ? demand->horizon_s : generator.horizon_s; }
};

/// Disjoint train / eval route pools drawn from one base seed.
struct RoutePools {
  std::vector<std::uint64_t> train;
  std::vector<std::uint64_t> eval;
};

inline RoutePools make_route_pools(std::uint64_t base_seed, std::size_t n_train, std::size_t n_eval) {
  RoutePools pools;
  std::set<std::uint64_t> seen;
  Rng rng(derive_seed(base_seed, 0x726f757465ULL));
  auto draw = [&](std::vector<std::uint64_t>& out, std::size_t n) {
    while (out.size() < n) {
      const std::uint64_t s = rng.next_u64();
      if (seen.insert(s).second) out.push_back(s);
    }
  };
  draw(pools.train, n_train);
  draw(pools.eval, n_eval);
  return pools;
}

/// Preset with generated demand and a 75/25 split of `routes` route seeds.
inline Scenario preset_scenario(std::string_view name, std::uint64_t seed, std::size_t routes = 8,
                                DemandGenerator generator = {}) {
  if (routes < 2) throw ConfigError("scenario: need at least 2 routes for a train/eval split");
  Scenario s;
  s.config = preset(name);
  s.generator = generator;
  const std::size_t n_eval = std::max<std::size_t>(1, routes / 4);
  auto pools = make_route_pools(derive_seed(seed, fnv1a64(name)), routes - n_eval, n_eval);
  s.train_routes = std::move(pools.train);
  s.eval_routes = std::move(pools.eval);
  return s;
}

inline void validate(const Scenario& s) {
  validate(s.config);
  if (s.demand) validate(s.config, *s.demand);
  if (s.train_routes.empty() && s.eval_routes.empty()) {
    throw ConfigError("scenario '" + s.config.name + "': no route seeds (runs must be seeded)");
  }
}

}  // namespace unitsa::sim
