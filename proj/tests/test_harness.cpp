#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "unitsa/harness/commands.hpp"

using namespace unitsa;
using namespace unitsa::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("unitsa_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string error_of(const json& doc) {
  try {
    scenario_from_json(doc, "s.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

json custom_doc() {
  return json::parse(R"({
    "seed": 3,
    "horizon_s": 600,
    "intersection": {
      "name": "T-junction",
      "roads": 3,
      "road_lanes": [2, 3, 3],
      "phases": [["E", "W"], ["EL"], ["SL"]]
    },
    "demand": {"type": "schedule", "rates": {"E": 0.2, "W": [[0, 0.1], [300, 0.3]], "SL": 0.05}},
    "train_routes": [1, 2],
    "eval_routes": [3]
  })");
}

}  // namespace

TEST(ScenarioJson, CustomIntersection) {
  const auto spec = scenario_from_json(custom_doc());
  const auto& s = spec.scenario;
  EXPECT_EQ(s.config.name, "T-junction");
  EXPECT_EQ(s.config.num_phases(), 3u);
  ASSERT_TRUE(s.demand.has_value());
  EXPECT_EQ(s.demand->rates[sim::index(sim::MovementId::W)].size(), 2u);
  EXPECT_EQ(s.eval_routes, (std::vector<std::uint64_t>{3}));
  // Fixed schedules still vary with the route through the arrival seed.
  EXPECT_NE(sim::generate_arrivals(s.route(1), 2), sim::generate_arrivals(s.route(2), 2));
  EXPECT_EQ(scenario_fingerprint(s), scenario_fingerprint(scenario_from_json(custom_doc()).scenario));
}

TEST(ScenarioJson, ErrorsNameTheField) {
  auto d = custom_doc();
  d["intersection"]["phases"][1][0] = "XL";
  EXPECT_NE(error_of(d).find("s.json.intersection.phases[1]"), std::string::npos) << error_of(d);

  d = custom_doc();
  d.erase("seed");
  EXPECT_NE(error_of(d).find("seed"), std::string::npos);

  d = custom_doc();
  d["demand"]["rates"]["N"] = 0.1;  // no north road at this junction
  EXPECT_NE(error_of(d).find("s.json.demand"), std::string::npos) << error_of(d);

  d = custom_doc();
  d["intersection"]["road_lanes"][0] = "two";
  EXPECT_NE(error_of(d).find("road_lanes[0]"), std::string::npos);

  d = custom_doc();
  d["preset"] = "INT-2";
  EXPECT_NE(error_of(d).find("not both"), std::string::npos);

  d = json{{"seed", 1}, {"preset", "INT-99"}};
  EXPECT_NE(error_of(d).find("s.json.preset"), std::string::npos);
}

TEST(ScenarioJson, ParseErrorHasPosition) {
  const auto dir = scratch_dir("parse");
  std::ofstream(dir / "bad.json") << "{\n  \"seed\": 1,\n  \"preset\" \"INT-1\"\n}\n";
  try {
    load_scenario(dir / "bad.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(ScenarioJson, PresetMatchesResolve) {
  const auto a = scenario_from_json(json{{"seed", 4}, {"preset", "INT-5"}});
  const auto b = resolve_scenario("INT-5", 4);
  EXPECT_EQ(scenario_fingerprint(a.scenario), scenario_fingerprint(b.scenario));
  EXPECT_THROW(resolve_scenario("INT-0", 4), ConfigError);
}

TEST(ScenarioJson, EnsureEvalRoutesKeepsPrefix) {
  auto spec = resolve_scenario("INT-2", 8);
  const auto train = spec.scenario.train_routes;
  const auto eval = spec.scenario.eval_routes;
  ensure_eval_routes(spec, 10);
  EXPECT_EQ(spec.scenario.train_routes, train);
  EXPECT_EQ(spec.scenario.eval_routes.size(), 10u);
  EXPECT_TRUE(std::equal(eval.begin(), eval.end(), spec.scenario.eval_routes.begin()));
  auto fixed = scenario_from_json(custom_doc());
  EXPECT_THROW(ensure_eval_routes(fixed, 5), ConfigError);
}

TEST(Controllers, SpecParsing) {
  EXPECT_EQ(ControllerSpec::parse("fixtime").parameter, 30.0);
  EXPECT_EQ(ControllerSpec::parse("fixtime:40").label(), "Fix-40");
  EXPECT_EQ(ControllerSpec::parse("sotl:12.5").parameter, 12.5);
  EXPECT_THROW(ControllerSpec::parse("max-pressure"), ConfigError);
  EXPECT_THROW(ControllerSpec::parse("sotl:abc"), ConfigError);
}

TEST(Report, RoundTripAndSidecar) {
  EvaluateOptions opts;
  opts.baseline = "fixtime:30";
  opts.scenarios = {"INT-1"};
  opts.seed = 2;
  opts.episodes = 3;
  const auto r = cmd_evaluate(opts);
  ASSERT_EQ(r.scenarios.size(), 1u);
  EXPECT_EQ(r.scenarios[0].episodes.size(), 3u);
  EXPECT_TRUE(r.scenarios[0].ci95.has_value());
  const auto dir = scratch_dir("report");
  write_report(dir / "fix.json", r, 1.5);
  EXPECT_TRUE(fs::exists(dir / "fix.timing.json"));
  EXPECT_EQ(read_text(dir / "fix.json").find("wall"), std::string::npos);
  const auto back = read_report(dir / "fix.json");
  EXPECT_EQ(to_json(back), to_json(r));
  // Same seed, same report, byte for byte.
  EXPECT_EQ(to_json(cmd_evaluate(opts)).dump(), to_json(r).dump());
}

TEST(Report, ZeroDemandHasNoWaitingTime) {
  const auto dir = scratch_dir("empty");
  std::ofstream(dir / "empty.json") << R"({"seed": 1, "preset": "INT-1", "horizon_s": 100,
    "demand": {"type": "schedule"}, "train_routes": [1], "eval_routes": [2]})";
  EvaluateOptions opts;
  opts.baseline = "sotl";
  opts.scenarios = {(dir / "empty.json").string()};
  const auto r = cmd_evaluate(opts);
  EXPECT_FALSE(r.scenarios[0].avg_waiting_time.has_value());
  EXPECT_TRUE(to_json(r)["scenarios"][0]["avg_waiting_time"].is_null());
}

TEST(Compare, FlagsColumnMinimum) {
  EvaluateOptions opts;
  opts.scenarios = {"INT-1", "INT-6"};
  opts.seed = 5;
  opts.episodes = 2;
  opts.baseline = "fixtime:30";
  const auto f30 = cmd_evaluate(opts);
  opts.baseline = "fixtime:40";
  const auto f40 = cmd_evaluate(opts);
  opts.baseline = "webster";
  const auto web = cmd_evaluate(opts);
  const std::string table = compare_reports({f30, f40, web});
  std::istringstream in(table);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "method,INT-1,INT-6");
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  ASSERT_EQ(rows.size(), 3u);
  const std::vector<const RunReport*> reps = {&f30, &f40, &web};
  for (std::size_t c = 0; c < 2; ++c) {
    double best = 1e300;
    for (const auto* r : reps) best = std::min(best, *r->scenarios[c].avg_waiting_time);
    for (std::size_t m = 0; m < 3; ++m) {
      const bool flagged = rows[m][c + 1].ends_with("*");
      EXPECT_EQ(flagged, *reps[m]->scenarios[c].avg_waiting_time == best);
    }
  }
}

TEST(Compare, RejectsMismatchedScenarios) {
  EvaluateOptions opts;
  opts.baseline = "fixtime:30";
  opts.episodes = 1;
  opts.scenarios = {"INT-1"};
  const auto a = cmd_evaluate(opts);
  opts.scenarios = {"INT-2"};
  const auto b = cmd_evaluate(opts);
  EXPECT_THROW(compare_reports({a, b}), ConfigError);
  EXPECT_THROW(compare_reports({a}), ConfigError);
  opts.scenarios = {"INT-1"};
  opts.seed = 99;  // same name, different routes
  EXPECT_THROW(compare_reports({a, cmd_evaluate(opts)}), ConfigError);
}

TEST(Evaluate, ArgumentChecks) {
  EvaluateOptions opts;
  opts.scenarios = {"INT-1"};
  EXPECT_THROW(cmd_evaluate(opts), ConfigError);  // preset names no controller
  opts.baseline = "fixtime";
  opts.checkpoint = "x.ckpt";
  EXPECT_THROW(cmd_evaluate(opts), ConfigError);
}

TEST(Evaluate, ControllerFromScenarioFile) {
  const auto dir = scratch_dir("ctl");
  std::ofstream(dir / "a.json") << R"({"seed": 1, "preset": "INT-2", "controller": "fixtime:40"})";
  std::ofstream(dir / "b.json") << R"({"seed": 1, "preset": "INT-5", "controller": "sotl"})";
  EvaluateOptions opts;
  opts.episodes = 1;
  opts.scenarios = {(dir / "a.json").string()};
  const auto r = cmd_evaluate(opts);
  EXPECT_EQ(r.method, "Fix-40");
  opts.baseline = "fixtime:40";
  EXPECT_EQ(to_json(cmd_evaluate(opts))["scenarios"], to_json(r)["scenarios"]);
  opts.baseline.reset();
  opts.scenarios.push_back((dir / "b.json").string());
  EXPECT_THROW(cmd_evaluate(opts), ConfigError);
}

TEST(Cli, TrainEvaluateAndErrors) {
  const auto dir = scratch_dir("cli");
  const std::string cli = UNITSA_CLI_PATH;
  const std::string run = dir.string();
  auto sh = [](const std::string& cmd) { return std::system((cmd + " >/dev/null 2>&1").c_str()); };
  ASSERT_EQ(sh(cli + " train -s INT-1 --seed 1 --steps 64 --buffer 32 --envs 2 --minibatch 16 --epochs 1 --eval-every 0 -o " +
               run + "/a"), 0);
  ASSERT_EQ(sh(cli + " train -s INT-1 --seed 1 --steps 64 --buffer 32 --envs 2 --minibatch 16 --epochs 1 --eval-every 0 -o " +
               run + "/b"), 0);
  EXPECT_EQ(read_text(dir / "a/policy.ckpt"), read_text(dir / "b/policy.ckpt"));
  EXPECT_EQ(read_text(dir / "a/curve.csv"), read_text(dir / "b/curve.csv"));
  EXPECT_EQ(sh(cli + " evaluate -c " + run + "/a/policy.ckpt -s INT-1 --seed 1 -n 1 -o " + run + "/r.json"), 0);
  EXPECT_EQ(sh(cli + " evaluate -b fixtime:30 -s INT-1 --seed 1 -n 1 -o " + run + "/f.json"), 0);
  EXPECT_EQ(sh(cli + " compare " + run + "/r.json " + run + "/f.json -o " + run + "/t.csv"), 0);
  EXPECT_NE(read_text(dir / "t.csv").find("UniTSA(rnn)"), std::string::npos);
  // Wrong extractor, bad scenario, missing checkpoint: clean non-zero exits.
  EXPECT_NE(sh(cli + " evaluate -c " + run + "/a/policy.ckpt --extractor cnn -s INT-1 --seed 1 -o " + run + "/x.json"), 0);
  EXPECT_NE(sh(cli + " evaluate -b fixtime -s INT-42 --seed 1 -o " + run + "/x.json"), 0);
  EXPECT_NE(sh(cli + " finetune -c " + run + "/missing.ckpt -s INT-9 --seed 1 -o " + run + "/ft"), 0);
}
