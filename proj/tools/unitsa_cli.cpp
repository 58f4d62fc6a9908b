// Command-line front end: train, evaluate, finetune, compare.

#include <chrono>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "unitsa/harness/commands.hpp"

namespace {

using namespace unitsa;

struct AugmentFlags {
  bool on = false;
  bool at_collection = false;
  double probability = 0.5;
  std::vector<std::string> disable;

  void apply(ppo::PPOConfig& cfg) const {
    cfg.augmentation = on;
    cfg.augment_at_collection = at_collection;
    cfg.augment_bounds.apply_probability = probability;
    const std::vector<std::string> names = {"shuffle", "lane_change", "flow_scale", "noise", "mask"};
    for (const auto& d : disable) {
      auto it = std::find(names.begin(), names.end(), d);
      if (it == names.end()) throw ConfigError("--no-transform: unknown transform '" + d + "'");
      cfg.augment_bounds.enabled[static_cast<std::size_t>(it - names.begin())] = false;
    }
  }
};

void add_ppo_flags(CLI::App* cmd, ppo::PPOConfig& cfg) {
  cmd->add_option("--steps", cfg.total_steps, "Total environment steps")->capture_default_str();
  cmd->add_option("--envs", cfg.parallel_envs, "Parallel environments")->capture_default_str();
  cmd->add_option("--buffer", cfg.buffer_size, "Transitions per update")->capture_default_str();
  cmd->add_option("--lr", cfg.learning_rate, "Learning rate")->capture_default_str();
  cmd->add_option("--epochs", cfg.epochs, "Epochs per update")->capture_default_str();
  cmd->add_option("--minibatch", cfg.minibatch_size, "Minibatch size")->capture_default_str();
  cmd->add_option("--entropy-coef", cfg.entropy_coef, "Entropy bonus weight")->capture_default_str();
  cmd->add_option("--max-grad-norm", cfg.max_grad_norm, "Gradient clip (0 = off)")->capture_default_str();
  cmd->add_flag("--normalize-advantages", cfg.normalize_advantages, "Standardize advantages per update");
  cmd->add_option("--eval-every", cfg.eval_every, "Greedy evaluation every N updates (0 = off)")->capture_default_str();
}

void add_augment_flags(CLI::App* cmd, AugmentFlags& aug) {
  cmd->add_flag("--augment,!--no-augment", aug.on, "Traffic state augmentation");
  cmd->add_flag("--augment-at-collection", aug.at_collection, "Augment when acting instead of per update");
  cmd->add_option("--augment-p", aug.probability, "Per-transform probability")->capture_default_str();
  cmd->add_option("--no-transform", aug.disable, "Disable a transform (shuffle|lane_change|flow_scale|noise|mask)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Universal traffic signal control: train, evaluate, fine-tune and compare"};
  app.require_subcommand(1);

  harness::TrainOptions train;
  AugmentFlags train_aug;
  std::string extractor = "rnn";
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train", "Train a policy on one or more scenarios");
  train_cmd->add_option("-s,--scenario", train.scenarios, "Scenario file or preset name (repeatable)")->required();
  train_cmd->add_option("--seed", train.seed, "Seed for routes, weights and sampling")->required();
  train_cmd->add_option("--routes", train.routes, "Routes per preset (75/25 train/eval)")->capture_default_str();
  train_cmd->add_option("--extractor", extractor, "cnn|rnn|transformer")->capture_default_str();
  train_cmd->add_option("-o,--out", train_out, "Output directory")->required();
  add_ppo_flags(train_cmd, train.ppo);
  add_augment_flags(train_cmd, train_aug);

  harness::EvaluateOptions eval;
  std::string eval_checkpoint, eval_baseline, eval_extractor, eval_out;
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint or a baseline");
  eval_cmd->add_option("-c,--checkpoint", eval_checkpoint, "Policy checkpoint");
  eval_cmd->add_option("-b,--baseline", eval_baseline, "fixtime[:s] | webster[:window_s] | sotl[:theta] (default: the scenario file's controller)");
  eval_cmd->add_option("--extractor", eval_extractor, "Expected extractor of the checkpoint");
  eval_cmd->add_option("-s,--scenario", eval.scenarios, "Scenario file or preset name (repeatable)")->required();
  eval_cmd->add_option("--seed", eval.seed, "Seed used to resolve presets")->required();
  eval_cmd->add_option("--routes", eval.routes, "Routes per preset")->capture_default_str();
  eval_cmd->add_option("-n,--episodes", eval.episodes, "Episodes per scenario (0 = all eval routes)")->capture_default_str();
  eval_cmd->add_option("-o,--out", eval_out, "Report path (JSON)")->required();

  harness::FinetuneOptions ft;
  std::string ft_base, ft_out;
  auto* ft_cmd = app.add_subcommand("finetune", "LoRA fine-tune a checkpoint on one scenario");
  ft_cmd->add_option("-c,--checkpoint", ft_base, "Base policy checkpoint")->required();
  ft_cmd->add_option("-s,--scenario", ft.scenario, "Scenario file or preset name")->required();
  ft_cmd->add_option("--seed", ft.seed, "Seed")->required();
  ft_cmd->add_option("--routes", ft.routes, "Routes per preset")->capture_default_str();
  ft_cmd->add_option("--rank", ft.lora.rank, "Adapter rank")->capture_default_str();
  ft_cmd->add_option("--alpha", ft.lora.alpha, "Adapter scale")->capture_default_str();
  ft_cmd->add_option("--targets", ft.lora.targets, "Dense layers to adapt")->capture_default_str();
  ft_cmd->add_flag("--scratch", ft.scratch, "Also run a from-scratch control with matched seeds");
  ft_cmd->add_option("-o,--out", ft_out, "Output directory")->required();
  AugmentFlags ft_aug;
  ft.ppo.total_steps = 100000;
  add_ppo_flags(ft_cmd, ft.ppo);
  add_augment_flags(ft_cmd, ft_aug);

  std::vector<std::string> cmp_reports;
  std::string cmp_out;
  auto* cmp_cmd = app.add_subcommand("compare", "Tabulate reports (lowest waiting time per column flagged with *)");
  cmp_cmd->add_option("reports", cmp_reports, "Report files")->required()->expected(2, -1);
  cmp_cmd->add_option("-o,--out", cmp_out, "Write the table here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      train.policy.extractor.kind = nn::parse_extractor(extractor);
      train.out_dir = train_out;
      train_aug.apply(train.ppo);
      const auto r = harness::cmd_train(train, &std::cerr);
      std::cout << "checkpoint " << r.checkpoint.string() << " fingerprint " << r.fingerprint << '\n';
    } else if (eval_cmd->parsed()) {
      if (!eval_checkpoint.empty()) eval.checkpoint = eval_checkpoint;
      if (!eval_baseline.empty()) eval.baseline = eval_baseline;
      if (!eval_extractor.empty()) eval.expect_extractor = nn::parse_extractor(eval_extractor);
      const auto t0 = std::chrono::steady_clock::now();
      const auto report = harness::cmd_evaluate(eval);
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      harness::write_report(eval_out, report, wall);
      for (const auto& s : report.scenarios) {
        std::cout << report.method << ' ' << s.name << " avg_waiting_time "
                  << (s.avg_waiting_time ? ppo::format_real(*s.avg_waiting_time) : "NA") << '\n';
      }
    } else if (ft_cmd->parsed()) {
      ft.base_checkpoint = ft_base;
      ft.out_dir = ft_out;
      ft_aug.apply(ft.ppo);
      const auto r = harness::cmd_finetune(ft);
      std::cout << "adapter " << r.adapter.string() << '\n';
    } else if (cmp_cmd->parsed()) {
      std::vector<std::filesystem::path> paths(cmp_reports.begin(), cmp_reports.end());
      const std::string table = harness::cmd_compare(paths);
      if (cmp_out.empty()) {
        std::cout << table;
      } else {
        harness::write_text(cmp_out, table);
      }
    }
  } catch (const unitsa::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
