#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "unitsa/baselines/controllers.hpp"
#include "unitsa/common.hpp"
#include "unitsa/sim/scenario.hpp"

namespace unitsa::harness {

using nlohmann::json;

/// Controller named in a scenario file or on the command line:
/// "fixtime:30", "webster", "webster:300" (window), "sotl:40".
struct ControllerSpec {
  std::string type;
  double parameter = 0.0;

  static ControllerSpec parse(const std::string& text) {
    ControllerSpec c;
    const auto colon = text.find(':');
    c.type = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    auto number = [&](double fallback) {
      if (arg.empty()) return fallback;
      try {
        std::size_t used = 0;
        const double v = std::stod(arg, &used);
        if (used != arg.size()) throw std::invalid_argument(arg);
        return v;
      } catch (const std::logic_error&) {
        throw ConfigError("controller '" + text + "': parameter is not a number");
      }
    };
    if (c.type == "fixtime") {
      c.parameter = number(30.0);
    } else if (c.type == "webster") {
      c.parameter = number(300.0);
    } else if (c.type == "sotl") {
      c.parameter = number(40.0);
    } else {
      throw ConfigError("controller: expected fixtime[:s]|webster[:window_s]|sotl[:theta], got '" + text + "'");
    }
    return c;
  }

  std::unique_ptr<baselines::Controller> make() const {
    if (type == "fixtime") return std::make_unique<baselines::FixTimeController>(parameter);
    if (type == "webster") return std::make_unique<baselines::WebsterController>(std::nullopt, parameter);
    return std::make_unique<baselines::SotlController>(parameter);
  }

  std::string label() const {
    if (type == "fixtime") return "Fix-" + std::to_string(static_cast<long long>(parameter));
    if (type == "webster") return "Webster";
    return "SOTL";
  }
};

/// A resolved scenario plus the optional controller named in its file.
struct ScenarioSpec {
  sim::Scenario scenario;
  std::uint64_t seed = 0;
  std::optional<ControllerSpec> controller;
  /// Seed of the generated route pools; absent for explicit route lists.
  std::optional<std::uint64_t> pool_base;
};

/// Grows the eval pool to at least n routes. Generated pools are drawn
/// train-first from one stream, so training routes and the existing eval
/// routes keep their values.
inline void ensure_eval_routes(ScenarioSpec& spec, std::size_t n) {
  auto& s = spec.scenario;
  if (s.eval_routes.size() >= n) return;
  if (!spec.pool_base) {
    throw ConfigError("scenario '" + s.config.name + "': " + std::to_string(n) + " episodes requested but only " +
                      std::to_string(s.eval_routes.size()) + " eval routes are listed");
  }
  s.eval_routes = sim::make_route_pools(*spec.pool_base, s.train_routes.size(), n).eval;
}

namespace detail {

// Small typed accessors that name the offending field on failure.
struct Fields {
  const json& obj;
  std::string path;

  bool has(const char* key) const { return obj.contains(key); }

  const json& at(const char* key) const {
    if (!obj.contains(key)) throw ConfigError(path + "." + key + ": required field is missing");
    return obj.at(key);
  }

  double number(const char* key) const {
    const json& v = at(key);
    if (!v.is_number()) throw ConfigError(path + "." + key + ": expected a number");
    return v.get<double>();
  }

  double number(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

  std::int64_t integer(const char* key) const {
    const json& v = at(key);
    if (!v.is_number_integer()) throw ConfigError(path + "." + key + ": expected an integer");
    return v.get<std::int64_t>();
  }

  std::uint64_t seed(const char* key) const {
    const json& v = at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ConfigError(path + "." + key + ": expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::string text(const char* key) const {
    const json& v = at(key);
    if (!v.is_string()) throw ConfigError(path + "." + key + ": expected a string");
    return v.get<std::string>();
  }

  Fields child(const char* key) const {
    const json& v = at(key);
    if (!v.is_object()) throw ConfigError(path + "." + key + ": expected an object");
    return Fields{v, path + "." + key};
  }
};

inline std::size_t movement_key(const std::string& key, const std::string& path) {
  const auto m = sim::parse_movement(key);
  if (!m) throw ConfigError(path + "." + key + ": unknown movement (expected N, NL, E, EL, W, WL, S or SL)");
  return sim::index(*m);
}

inline sim::IntersectionConfig parse_intersection(const Fields& f) {
  sim::IntersectionConfig c;
  c.name = f.has("name") ? f.text("name") : "custom";
  c.roads = static_cast<int>(f.integer("roads"));
  const json& lanes = f.at("road_lanes");
  if (!lanes.is_array()) throw ConfigError(f.path + ".road_lanes: expected an array of lane counts");
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    if (!lanes[i].is_number_integer()) {
      throw ConfigError(f.path + ".road_lanes[" + std::to_string(i) + "]: expected an integer");
    }
    c.road_lanes.push_back(lanes[i].get<int>());
  }
  try {
    c.lanes = sim::movement_lanes_from_roads(c.roads, c.road_lanes);
  } catch (const ConfigError& e) {
    throw ConfigError(f.path + "." + e.what());
  }
  const json& phases = f.at("phases");
  if (!phases.is_array()) throw ConfigError(f.path + ".phases: expected an array of movement lists");
  for (std::size_t p = 0; p < phases.size(); ++p) {
    const std::string where = f.path + ".phases[" + std::to_string(p) + "]";
    if (!phases[p].is_array()) throw ConfigError(where + ": expected a list of movement names");
    sim::Phase phase;
    for (const auto& m : phases[p]) {
      if (!m.is_string()) throw ConfigError(where + ": movement names must be strings");
      phase.green.set(movement_key(m.get<std::string>(), where));
    }
    c.phases.push_back(phase);
  }
  c.min_green_s = f.number("min_green_s", c.min_green_s);
  c.yellow_s = f.number("yellow_s", c.yellow_s);
  c.action_interval_s = f.number("action_interval_s", c.action_interval_s);
  c.detection_range_m = f.number("detection_range_m", c.detection_range_m);
  c.saturation_flow_vps = f.number("saturation_flow_vps", c.saturation_flow_vps);
  c.vehicle_length_m = f.number("vehicle_length_m", c.vehicle_length_m);
  try {
    sim::validate(c);
  } catch (const ConfigError& e) {
    throw ConfigError(f.path + "." + e.what());
  }
  return c;
}

inline void parse_demand(const Fields& f, sim::Scenario& s, double horizon) {
  const std::string type = f.has("type") ? f.text("type") : "generated";
  if (type == "generated") {
    s.generator.min_rate_per_lane = f.number("min_rate_per_lane", s.generator.min_rate_per_lane);
    s.generator.max_rate_per_lane = f.number("max_rate_per_lane", s.generator.max_rate_per_lane);
    s.generator.segments = static_cast<int>(f.has("segments") ? f.integer("segments") : s.generator.segments);
    s.generator.horizon_s = horizon;
    return;
  }
  if (type != "schedule") throw ConfigError(f.path + ".type: expected \"generated\" or \"schedule\"");
  sim::DemandSchedule d;
  d.horizon_s = horizon;
  if (f.has("rates")) {
    const Fields rates = f.child("rates");
    for (const auto& [key, value] : rates.obj.items()) {
      const std::string where = rates.path + "." + key;
      const std::size_t m = movement_key(key, rates.path);
      if (value.is_number()) {
        d.rates[m] = {sim::RateSegment{0.0, value.get<double>()}};
      } else if (value.is_array()) {
        for (const auto& seg : value) {
          if (!seg.is_array() || seg.size() != 2 || !seg[0].is_number() || !seg[1].is_number()) {
            throw ConfigError(where + ": segments must be [start_s, rate_vps] pairs");
          }
          d.rates[m].push_back(sim::RateSegment{seg[0].get<double>(), seg[1].get<double>()});
        }
      } else {
        throw ConfigError(where + ": expected a rate or a list of [start_s, rate_vps]");
      }
    }
  }
  if (f.has("fixed_arrivals")) {
    const Fields fixed = f.child("fixed_arrivals");
    for (const auto& [key, value] : fixed.obj.items()) {
      const std::size_t m = movement_key(key, fixed.path);
      if (!value.is_array()) throw ConfigError(fixed.path + "." + key + ": expected a list of arrival times");
      for (const auto& t : value) {
        if (!t.is_number()) throw ConfigError(fixed.path + "." + key + ": arrival times must be numbers");
        d.fixed_arrivals[m].push_back(t.get<double>());
      }
    }
  }
  try {
    sim::validate(s.config, d);
  } catch (const ConfigError& e) {
    throw ConfigError(f.path + ": " + e.what());
  }
  s.demand = std::move(d);
}

inline std::vector<std::uint64_t> seed_list(const Fields& f, const char* key) {
  const json& v = f.at(key);
  if (!v.is_array()) throw ConfigError(f.path + "." + key + ": expected an array of seeds");
  std::vector<std::uint64_t> out;
  for (const auto& s : v) {
    if (!s.is_number_unsigned()) throw ConfigError(f.path + "." + key + ": seeds must be non-negative integers");
    out.push_back(s.get<std::uint64_t>());
  }
  return out;
}

}  // namespace detail

/// Builds a scenario from a parsed document (see scenarios/ for examples).
inline ScenarioSpec scenario_from_json(const json& doc, const std::string& origin = "scenario") {
  if (!doc.is_object()) throw ConfigError(origin + ": top level must be an object");
  const detail::Fields f{doc, origin};
  ScenarioSpec spec;
  spec.seed = f.seed("seed");
  const double horizon = f.number("horizon_s", 3000.0);
  if (!(horizon > 0.0)) throw ConfigError(origin + ".horizon_s: must be > 0");
  auto& s = spec.scenario;
  if (f.has("preset")) {
    if (f.has("intersection")) throw ConfigError(origin + ": give either preset or intersection, not both");
    try {
      s.config = sim::preset(f.text("preset"));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ".preset: " + e.what());
    }
  } else {
    s.config = detail::parse_intersection(f.child("intersection"));
  }
  if (f.has("name")) s.config.name = f.text("name");
  s.generator.horizon_s = horizon;
  if (f.has("demand")) {
    detail::parse_demand(f.child("demand"), s, horizon);
  }
  if (f.has("train_routes") || f.has("eval_routes")) {
    s.train_routes = detail::seed_list(f, "train_routes");
    s.eval_routes = detail::seed_list(f, "eval_routes");
  } else {
    const auto routes = static_cast<std::size_t>(f.has("routes") ? f.integer("routes") : 8);
    if (routes < 2) throw ConfigError(origin + ".routes: need at least 2");
    const std::size_t n_eval = std::max<std::size_t>(1, routes / 4);
    spec.pool_base = derive_seed(spec.seed, fnv1a64(s.config.name));
    auto pools = sim::make_route_pools(*spec.pool_base, routes - n_eval, n_eval);
    s.train_routes = std::move(pools.train);
    s.eval_routes = std::move(pools.eval);
  }
  if (f.has("controller")) spec.controller = ControllerSpec::parse(f.text("controller"));
  sim::validate(s);
  return spec;
}

inline ScenarioSpec load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("scenario: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return scenario_from_json(doc, path.filename().string());
}

/// A path to a scenario file, or a preset name resolved with `seed`.
inline ScenarioSpec resolve_scenario(const std::string& ref, std::uint64_t seed, std::size_t routes = 8) {
  if (std::filesystem::exists(ref)) return load_scenario(ref);
  const auto names = sim::preset_names();
  if (std::find(names.begin(), names.end(), ref) == names.end()) {
    throw ConfigError("scenario '" + ref + "': neither a file nor a preset (INT-1..INT-11)");
  }
  ScenarioSpec spec;
  spec.seed = seed;
  spec.scenario = sim::preset_scenario(ref, seed, routes);
  spec.pool_base = derive_seed(seed, fnv1a64(ref));
  return spec;
}

/// Canonical document of a resolved scenario; its hash is the fingerprint.
inline json scenario_to_json(const sim::Scenario& s) {
  json j;
  const auto& c = s.config;
  j["name"] = c.name;
  j["roads"] = c.roads;
  j["road_lanes"] = c.road_lanes;
  std::vector<int> lanes(c.lanes.begin(), c.lanes.end());
  j["lanes"] = lanes;
  json phases = json::array();
  for (const auto& p : c.phases) phases.push_back(sim::mask_to_string(p.green));
  j["phases"] = phases;
  j["timing"] = {{"min_green_s", c.min_green_s},
                 {"yellow_s", c.yellow_s},
                 {"action_interval_s", c.action_interval_s},
                 {"detection_range_m", c.detection_range_m},
                 {"saturation_flow_vps", c.saturation_flow_vps},
                 {"vehicle_length_m", c.vehicle_length_m}};
  if (s.demand) {
    json rates = json::object();
    json fixed = json::object();
    for (std::size_t i = 0; i < sim::kMovements; ++i) {
      json segs = json::array();
      for (const auto& seg : s.demand->rates[i]) segs.push_back({seg.start_s, seg.rate_vps});
      if (!segs.empty()) rates[std::string(sim::movement_name(i))] = segs;
      if (!s.demand->fixed_arrivals[i].empty()) fixed[std::string(sim::movement_name(i))] = s.demand->fixed_arrivals[i];
    }
    j["demand"] = {{"type", "schedule"}, {"horizon_s", s.demand->horizon_s}, {"rates", rates}, {"fixed_arrivals", fixed}};
  } else {
    j["demand"] = {{"type", "generated"},
                   {"min_rate_per_lane", s.generator.min_rate_per_lane},
                   {"max_rate_per_lane", s.generator.max_rate_per_lane},
                   {"segments", s.generator.segments},
                   {"horizon_s", s.generator.horizon_s}};
  }
  j["train_routes"] = s.train_routes;
  j["eval_routes"] = s.eval_routes;
  return j;
}

inline std::string scenario_fingerprint(const sim::Scenario& s) { return hex64(fnv1a64(scenario_to_json(s).dump())); }

}  // namespace unitsa::harness
