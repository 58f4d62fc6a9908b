#pragma once

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "unitsa/harness/report.hpp"
#include "unitsa/harness/scenario_io.hpp"
#include "unitsa/lora/lora.hpp"
#include "unitsa/nn/policy_io.hpp"
#include "unitsa/ppo/trainer.hpp"

namespace unitsa::harness {

namespace fs = std::filesystem;

inline double parse_real(const std::string& text, const std::string& what) {
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc{} || r.ptr != text.data() + text.size()) throw FormatError(what + ": not a number: '" + text + "'");
  return v;
}

/// Policy checkpoint plus the reward normalizer used to train it.
inline nn::Archive policy_checkpoint(const nn::Policy& policy, const encoder::RewardNormalizer& normalizer,
                                     std::map<std::string, std::string> extra = {}) {
  extra["reward_mean"] = ppo::format_real(normalizer.mean());
  extra["reward_stddev"] = ppo::format_real(normalizer.stddev());
  extra["reward_epsilon"] = ppo::format_real(normalizer.epsilon());
  return nn::to_archive(policy, extra);
}

struct LoadedPolicy {
  nn::Policy policy;
  encoder::RewardNormalizer normalizer;
  nn::Archive archive;
};

inline LoadedPolicy load_policy(const fs::path& path) {
  nn::Archive a = nn::Archive::load(path);
  nn::Policy policy = nn::policy_from_archive<double>(a);
  auto norm = encoder::RewardNormalizer::frozen(parse_real(a.meta("reward_mean"), "reward_mean"),
                                                parse_real(a.meta("reward_stddev"), "reward_stddev"),
                                                parse_real(a.meta("reward_epsilon"), "reward_epsilon"));
  return LoadedPolicy{std::move(policy), norm, std::move(a)};
}

inline void write_curve(const fs::path& path, const std::vector<ppo::CurvePoint>& curve) {
  std::ostringstream out;
  ppo::write_curve_header(out);
  for (const auto& p : curve) ppo::write_curve_row(out, p);
  write_text(path, out.str());
}

inline json ppo_config_json(const ppo::PPOConfig& c) {
  const auto& b = c.augment_bounds;
  return json{{"learning_rate", c.learning_rate},
              {"buffer_size", c.buffer_size},
              {"clip_epsilon", c.clip_epsilon},
              {"gamma", c.gamma},
              {"value_coef", c.value_coef},
              {"parallel_envs", c.parallel_envs},
              {"total_steps", c.total_steps},
              {"epochs", c.epochs},
              {"minibatch_size", c.minibatch_size},
              {"entropy_coef", c.entropy_coef},
              {"max_grad_norm", c.max_grad_norm},
              {"normalize_advantages", c.normalize_advantages},
              {"reward_warmup", c.reward_warmup},
              {"augmentation", c.augmentation},
              {"augment_at_collection", c.augment_at_collection},
              {"augment_probability", b.apply_probability},
              {"augment_transforms",
               {{"shuffle", b.enabled[0]}, {"lane_change", b.enabled[1]}, {"flow_scale", b.enabled[2]},
                {"noise", b.enabled[3]}, {"mask", b.enabled[4]}}},
              {"seed", c.seed},
              {"eval_every", c.eval_every},
              {"eval_routes", c.eval_routes}};
}

struct TrainOptions {
  std::vector<std::string> scenarios;
  std::uint64_t seed = 0;
  std::size_t routes = 8;
  ppo::PPOConfig ppo;
  nn::PolicyConfig policy;
  fs::path out_dir;
};

struct TrainResult {
  fs::path checkpoint;
  fs::path curve;
  std::vector<ppo::CurvePoint> points;
  std::string fingerprint;
};

/// Writes policy.ckpt, curve.csv and config.json into out_dir.
inline TrainResult cmd_train(const TrainOptions& opts, std::ostream* log = nullptr) {
  if (opts.scenarios.empty()) throw ConfigError("train: at least one scenario is required");
  std::vector<sim::Scenario> scenarios;
  json snapshot;
  for (const auto& ref : opts.scenarios) {
    auto spec = resolve_scenario(ref, opts.seed, opts.routes);
    snapshot["scenarios"].push_back(scenario_to_json(spec.scenario));
    scenarios.push_back(std::move(spec.scenario));
  }
  ppo::PPOConfig cfg = opts.ppo;
  cfg.seed = opts.seed;
  snapshot["ppo"] = ppo_config_json(cfg);
  snapshot["policy"] = {{"extractor", std::string(nn::to_string(opts.policy.extractor.kind))},
                        {"head_hidden", opts.policy.head_hidden}};
  snapshot["seed"] = opts.seed;

  nn::Policy policy(opts.policy, derive_seed(opts.seed, 7));
  ppo::Trainer trainer(policy, scenarios, cfg);
  trainer.run([&](const ppo::CurvePoint& p) {
    if (!log) return;
    *log << "step " << p.step << " mean_step_reward " << p.mean_step_reward;
    if (p.eval_waiting_time) *log << " eval_wait " << *p.eval_waiting_time;
    *log << '\n';
  });

  fs::create_directories(opts.out_dir);
  TrainResult r;
  r.checkpoint = opts.out_dir / "policy.ckpt";
  r.curve = opts.out_dir / "curve.csv";
  auto archive = policy_checkpoint(policy, trainer.normalizer(),
                                   {{"seed", std::to_string(opts.seed)}, {"steps", std::to_string(trainer.steps())}});
  archive.save(r.checkpoint);
  r.fingerprint = archive.fingerprint();
  write_curve(r.curve, trainer.curve());
  write_text(opts.out_dir / "config.json", snapshot.dump(2) + "\n");
  r.points = trainer.curve();
  return r;
}

struct EvaluateOptions {
  std::optional<fs::path> checkpoint;
  std::optional<std::string> baseline;
  /// Rejects a checkpoint whose extractor differs from this one.
  std::optional<nn::ExtractorKind> expect_extractor;
  std::vector<std::string> scenarios;
  std::uint64_t seed = 0;
  std::size_t routes = 8;
  /// Episodes per scenario (0 = every eval route).
  std::size_t episodes = 0;
};

/// With neither a checkpoint nor a baseline, the controller named in the
/// scenario files is used; every file must then name the same one.
inline RunReport cmd_evaluate(const EvaluateOptions& opts) {
  if (opts.checkpoint && opts.baseline) throw ConfigError("evaluate: give a checkpoint or a baseline, not both");
  if (opts.scenarios.empty()) throw ConfigError("evaluate: at least one scenario is required");
  std::optional<std::string> baseline = opts.baseline;
  if (!opts.checkpoint && !baseline) {
    for (const auto& ref : opts.scenarios) {
      const auto spec = resolve_scenario(ref, opts.seed, opts.routes);
      if (!spec.controller) {
        throw ConfigError("evaluate: no checkpoint or baseline given and scenario '" + ref + "' names no controller");
      }
      const std::string text = spec.controller->type + ":" + ppo::format_real(spec.controller->parameter);
      if (baseline && *baseline != text) {
        throw ConfigError("evaluate: scenario files name different controllers (" + *baseline + ", " + text + ")");
      }
      baseline = text;
    }
  }
  RunReport report;
  report.seed = opts.seed;
  std::optional<LoadedPolicy> loaded;
  std::unique_ptr<baselines::Controller> controller;
  if (opts.checkpoint) {
    loaded = load_policy(*opts.checkpoint);
    const auto kind = loaded->policy.config().extractor.kind;
    if (opts.expect_extractor && *opts.expect_extractor != kind) {
      throw ConfigError("evaluate: checkpoint uses the " + std::string(nn::to_string(kind)) + " extractor, not " +
                        std::string(nn::to_string(*opts.expect_extractor)));
    }
    report.method = "UniTSA(" + std::string(nn::to_string(kind)) + ")";
    report.source = "checkpoint:" + loaded->archive.fingerprint();
    controller = std::make_unique<ppo::AgentController>(loaded->policy, report.method);
  } else {
    const auto spec = ControllerSpec::parse(*baseline);
    report.method = spec.label();
    report.source = "baseline:" + *baseline;
    controller = spec.make();
  }
  for (const auto& ref : opts.scenarios) {
    auto spec = resolve_scenario(ref, opts.seed, opts.routes);
    if (opts.episodes > 0) ensure_eval_routes(spec, opts.episodes);
    auto routes = spec.scenario.eval_routes;
    if (opts.episodes > 0) routes.resize(opts.episodes);
    const auto summary = ppo::evaluate(*controller, spec.scenario, routes);
    report.scenarios.push_back(
        make_result(spec.scenario.config.name, scenario_fingerprint(spec.scenario), routes, summary));
  }
  return report;
}

struct FinetuneOptions {
  fs::path base_checkpoint;
  std::string scenario;
  std::uint64_t seed = 0;
  std::size_t routes = 8;
  ppo::PPOConfig ppo;
  lora::LoraConfig lora;
  /// Also train the same architecture from scratch with matched seeds.
  bool scratch = false;
  fs::path out_dir;
};

struct FinetuneRunResult {
  std::vector<ppo::CurvePoint> finetune_curve;
  std::optional<std::vector<ppo::CurvePoint>> scratch_curve;
  fs::path adapter;
};

/// Writes adapter.ckpt, finetune_curve.csv and, on request,
/// scratch_curve.csv + scratch_policy.ckpt. Both runs evaluate on the same
/// eval routes.
inline FinetuneRunResult cmd_finetune(const FinetuneOptions& opts) {
  auto base = load_policy(opts.base_checkpoint);
  auto spec = resolve_scenario(opts.scenario, opts.seed, opts.routes);
  ppo::PPOConfig cfg = opts.ppo;
  cfg.seed = opts.seed;
  lora::LoraConfig lcfg = opts.lora;
  lcfg.seed = derive_seed(opts.seed, 3);

  nn::Policy adapted = base.policy;
  lora::inject(adapted, lcfg);
  auto ft = lora::finetune(adapted, spec.scenario, cfg, base.normalizer);

  fs::create_directories(opts.out_dir);
  FinetuneRunResult result;
  result.adapter = opts.out_dir / "adapter.ckpt";
  lora::adapter_archive(adapted).save(result.adapter);
  result.finetune_curve = ft.curve;
  write_curve(opts.out_dir / "finetune_curve.csv", ft.curve);

  if (opts.scratch) {
    nn::Policy scratch(base.policy.config(), derive_seed(opts.seed, 7));
    ppo::Trainer trainer(scratch, {spec.scenario}, cfg);
    trainer.run();
    result.scratch_curve = trainer.curve();
    write_curve(opts.out_dir / "scratch_curve.csv", trainer.curve());
    policy_checkpoint(scratch, trainer.normalizer(), {{"seed", std::to_string(opts.seed)}})
        .save(opts.out_dir / "scratch_policy.ckpt");
  }
  return result;
}

inline std::string cmd_compare(const std::vector<fs::path>& reports) {
  std::vector<RunReport> loaded;
  for (const auto& p : reports) loaded.push_back(read_report(p));
  return compare_reports(loaded);
}

}  // namespace unitsa::harness
