#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "unitsa/common.hpp"
#include "unitsa/ppo/agent.hpp"
#include "unitsa/ppo/trainer.hpp"

namespace unitsa::harness {

using nlohmann::json;

struct EpisodeRecord {
  std::uint64_t route = 0;
  std::optional<double> avg_waiting_time;
  double episode_reward = 0.0;
  std::size_t steps = 0;
};

struct ScenarioResult {
  std::string name;
  std::string config_fingerprint;
  std::vector<EpisodeRecord> episodes;
  std::optional<double> avg_waiting_time;
  /// Half-width of a normal 95% interval over per-episode waiting times.
  std::optional<double> ci95;
  double episode_reward = 0.0;
  std::size_t steps = 0;
};

/// Evaluation of one method over a scenario set. Wall time is kept out of
/// the report (see write_report) so that reruns compare byte for byte.
struct RunReport {
  std::string method;
  std::string source;
  std::uint64_t seed = 0;
  std::vector<ScenarioResult> scenarios;
};

inline ScenarioResult make_result(const std::string& name, const std::string& fingerprint,
                                  const std::vector<std::uint64_t>& routes, const ppo::EvaluationSummary& summary) {
  ScenarioResult r;
  r.name = name;
  r.config_fingerprint = fingerprint;
  std::vector<double> waits;
  for (std::size_t i = 0; i < summary.episodes.size(); ++i) {
    const auto& e = summary.episodes[i];
    r.episodes.push_back(EpisodeRecord{routes.at(i), e.avg_waiting_time, e.total_raw_reward, e.steps});
    r.steps += e.steps;
    if (e.avg_waiting_time) waits.push_back(*e.avg_waiting_time);
  }
  r.episode_reward = summary.mean_episode_reward;
  r.avg_waiting_time = summary.mean_waiting_time;
  if (waits.size() >= 2) {
    double mean = 0.0;
    for (double w : waits) mean += w;
    mean /= static_cast<double>(waits.size());
    double ss = 0.0;
    for (double w : waits) ss += (w - mean) * (w - mean);
    const double sd = std::sqrt(ss / static_cast<double>(waits.size() - 1));
    r.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(waits.size()));
  }
  return r;
}

namespace detail {

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace detail

inline json to_json(const RunReport& r) {
  json j;
  j["kind"] = "unitsa-report";
  j["method"] = r.method;
  j["source"] = r.source;
  j["seed"] = r.seed;
  json scenarios = json::array();
  for (const auto& s : r.scenarios) {
    json sj;
    sj["name"] = s.name;
    sj["config_fingerprint"] = s.config_fingerprint;
    sj["avg_waiting_time"] = detail::optional_number(s.avg_waiting_time);
    sj["ci95"] = detail::optional_number(s.ci95);
    sj["episode_reward"] = s.episode_reward;
    sj["steps"] = s.steps;
    json eps = json::array();
    for (const auto& e : s.episodes) {
      eps.push_back({{"route", e.route},
                     {"avg_waiting_time", detail::optional_number(e.avg_waiting_time)},
                     {"episode_reward", e.episode_reward},
                     {"steps", e.steps}});
    }
    sj["episodes"] = eps;
    scenarios.push_back(sj);
  }
  j["scenarios"] = scenarios;
  return j;
}

inline RunReport report_from_json(const json& j) {
  try {
    if (j.at("kind").get<std::string>() != "unitsa-report") throw FormatError("report: wrong kind");
    RunReport r;
    r.method = j.at("method").get<std::string>();
    r.source = j.at("source").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& sj : j.at("scenarios")) {
      ScenarioResult s;
      s.name = sj.at("name").get<std::string>();
      s.config_fingerprint = sj.at("config_fingerprint").get<std::string>();
      s.avg_waiting_time = detail::read_optional(sj, "avg_waiting_time");
      s.ci95 = detail::read_optional(sj, "ci95");
      s.episode_reward = sj.at("episode_reward").get<double>();
      s.steps = sj.at("steps").get<std::size_t>();
      for (const auto& ej : sj.at("episodes")) {
        s.episodes.push_back(EpisodeRecord{ej.at("route").get<std::uint64_t>(), detail::read_optional(ej, "avg_waiting_time"),
                                           ej.at("episode_reward").get<double>(), ej.at("steps").get<std::size_t>()});
      }
      r.scenarios.push_back(std::move(s));
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes the report and, when given, a `<name>.timing.json` sidecar with
/// the wall time.
inline void write_report(const std::filesystem::path& path, const RunReport& r,
                         std::optional<double> wall_time_s = std::nullopt) {
  write_text(path, to_json(r).dump(2) + "\n");
  if (wall_time_s) {
    auto timing = path;
    timing.replace_extension(".timing.json");
    write_text(timing, json{{"wall_time_s", *wall_time_s}}.dump(2) + "\n");
  }
}

inline RunReport read_report(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

/// Methods x scenarios table of average waiting time; the lowest value in
/// each column carries a trailing '*'. Every report must cover the same
/// scenarios (names and fingerprints) in the same order.
inline std::string compare_reports(const std::vector<RunReport>& reports) {
  if (reports.size() < 2) throw ConfigError("compare: need at least 2 reports");
  const auto& ref = reports.front().scenarios;
  for (const auto& r : reports) {
    bool same = r.scenarios.size() == ref.size();
    for (std::size_t c = 0; same && c < ref.size(); ++c) {
      same = r.scenarios[c].name == ref[c].name && r.scenarios[c].config_fingerprint == ref[c].config_fingerprint;
    }
    if (!same) throw ConfigError("compare: report '" + r.method + "' covers different scenarios than '" + reports.front().method + "'");
  }
  std::vector<std::optional<double>> best(ref.size());
  for (const auto& r : reports) {
    for (std::size_t c = 0; c < ref.size(); ++c) {
      const auto& v = r.scenarios[c].avg_waiting_time;
      if (v && (!best[c] || *v < *best[c])) best[c] = v;
    }
  }
  std::ostringstream out;
  out << "method";
  for (const auto& s : ref) out << ',' << s.name;
  out << '\n';
  for (const auto& r : reports) {
    out << r.method;
    for (std::size_t c = 0; c < ref.size(); ++c) {
      const auto& v = r.scenarios[c].avg_waiting_time;
      out << ',';
      if (!v) {
        out << "NA";
        continue;
      }
      out << ppo::format_real(*v);
      if (*v == *best[c]) out << '*';
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace unitsa::harness
