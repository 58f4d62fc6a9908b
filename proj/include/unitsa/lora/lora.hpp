#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "unitsa/common.hpp"
#include "unitsa/encoder/state.hpp"
#include "unitsa/nn/checkpoint.hpp"
#include "unitsa/nn/policy.hpp"
#include "unitsa/nn/policy_io.hpp"
#include "unitsa/ppo/trainer.hpp"
#include "unitsa/rng.hpp"

namespace unitsa::lora {

using nn::Policy;

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 1.0;
  double init_stddev = 0.02;
  std::vector<std::string> targets = {"actor.fc1", "actor.fc2", "critic.fc1", "critic.fc2"};
  std::uint64_t seed = 0;

  void validate() const {
    if (rank == 0) throw ConfigError("lora: rank must be >= 1");
    if (!(alpha > 0.0)) throw ConfigError("lora: alpha must be > 0");
    if (init_stddev < 0.0) throw ConfigError("lora: init_stddev must be >= 0");
    if (targets.empty()) throw ConfigError("lora: no target layers");
  }
};

inline bool is_adapter_tensor(const std::string& name) {
  return name.ends_with(".lora_a") || name.ends_with(".lora_b");
}

/// Fingerprint of the non-adapter tensors, i.e. of the base model.
inline std::string base_fingerprint(const Policy& policy) {
  nn::Archive a;
  a.tensors = nn::export_tensors(policy.parameters(), [](const std::string& n) { return !is_adapter_tensor(n); });
  return a.fingerprint();
}

/// Attaches z += (alpha / r) A B^T x to every target layer, with A zero and
/// B ~ N(0, init_stddev^2), then freezes everything except the adapters.
inline void inject(Policy& policy, const LoraConfig& config) {
  config.validate();
  std::vector<nn::Dense*> layers;
  for (const auto& name : config.targets) {
    nn::Dense& d = policy.head_layer(name);
    if (d.lora) throw ConfigError("lora: layer '" + name + "' already has an adapter");
    for (auto* seen : layers) {
      if (seen == &d) throw ConfigError("lora: layer '" + name + "' listed twice");
    }
    layers.push_back(&d);
  }
  auto& store = policy.parameters();
  store.set_trainable(false);
  Rng rng(derive_seed(config.seed, 0x4c6f5241ULL));
  for (nn::Dense* d : layers) {
    nn::LoraSlot slot;
    slot.rank = config.rank;
    slot.alpha = config.alpha;
    slot.a = store.add(d->name + ".lora_a", {d->out, config.rank});
    slot.b = store.add(d->name + ".lora_b", {d->in, config.rank});
    for (auto& v : store[slot.b].value.values) v = rng.normal(0.0, config.init_stddev);
    d->lora = slot;
  }
  for (auto& e : store) e.trainable = is_adapter_tensor(e.name);
}

inline bool has_adapters(const Policy& policy) {
  for (std::size_t i = 0; i < Policy::kHeadLayers.size(); ++i) {
    if (policy.head_layer(i).lora) return true;
  }
  return false;
}

/// Delta (alpha / r) A B^T of one adapted layer, stored [out][in].
inline std::vector<double> adapter_delta(const Policy& policy, std::size_t head) {
  const nn::Dense& d = policy.head_layer(head);
  if (!d.lora) throw StateError("lora: layer '" + d.name + "' has no adapter");
  const auto& store = policy.parameters();
  const auto& a = store[d.lora->a].value;
  const auto& b = store[d.lora->b].value;
  const std::size_t r = d.lora->rank;
  const double s = d.lora->scale();
  std::vector<double> delta(d.out * d.in, 0.0);
  for (std::size_t o = 0; o < d.out; ++o) {
    for (std::size_t i = 0; i < d.in; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < r; ++k) acc += a[o * r + k] * b[i * r + k];
      delta[o * d.in + i] = s * acc;
    }
  }
  return delta;
}

/// Plain policy with W' = W + (alpha / r) A B^T folded into each adapted layer.
inline Policy merge(const Policy& adapted) {
  if (!has_adapters(adapted)) throw StateError("lora: merge called on a policy without adapters");
  Policy merged(adapted.config());
  auto entries = nn::export_tensors(adapted.parameters(), [](const std::string& n) { return !is_adapter_tensor(n); });
  for (std::size_t h = 0; h < Policy::kHeadLayers.size(); ++h) {
    const nn::Dense& d = adapted.head_layer(h);
    if (!d.lora) continue;
    const auto delta = adapter_delta(adapted, h);
    for (auto& e : entries) {
      if (e.name != d.name + ".weight") continue;
      for (std::size_t k = 0; k < delta.size(); ++k) e.values[k] += delta[k];
    }
  }
  nn::import_tensors(merged.parameters(), entries);
  return merged;
}

inline std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

inline std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Adapter tensors only, tagged with the fingerprint of the base they fit.
inline nn::Archive adapter_archive(const Policy& adapted) {
  if (!has_adapters(adapted)) throw StateError("lora: policy has no adapters");
  nn::Archive a;
  std::vector<std::string> targets;
  const nn::Dense* first = nullptr;
  for (std::size_t h = 0; h < Policy::kHeadLayers.size(); ++h) {
    const nn::Dense& d = adapted.head_layer(h);
    if (!d.lora) continue;
    targets.push_back(d.name);
    if (!first) first = &d;
  }
  a.metadata["kind"] = "lora-adapter";
  a.metadata["base_fingerprint"] = base_fingerprint(adapted);
  a.metadata["rank"] = std::to_string(first->lora->rank);
  a.metadata["alpha"] = ppo::format_real(first->lora->alpha);
  a.metadata["targets"] = join(targets);
  a.tensors = nn::export_tensors(adapted.parameters(), [](const std::string& n) { return is_adapter_tensor(n); });
  return a;
}

/// Injects adapters described by `archive` into `base` and loads their
/// values. Rejects an archive made for a different base model.
inline void load_adapters(Policy& base, const nn::Archive& archive) {
  if (archive.meta("kind") != "lora-adapter") throw FormatError("lora: not an adapter checkpoint");
  const std::string expected = archive.meta("base_fingerprint");
  const std::string actual = base_fingerprint(base);
  if (expected != actual) {
    throw FormatError("lora: adapter was trained on base " + expected + " but this base is " + actual);
  }
  LoraConfig config;
  try {
    config.rank = static_cast<std::size_t>(std::stoull(archive.meta("rank")));
    config.alpha = std::stod(archive.meta("alpha"));
  } catch (const std::logic_error&) {
    throw FormatError("lora: bad rank/alpha metadata");
  }
  config.targets = split(archive.meta("targets"));
  config.init_stddev = 0.0;
  inject(base, config);
  nn::import_tensors(base.parameters(), archive.tensors);
}

struct FinetuneResult {
  std::vector<ppo::CurvePoint> curve;
  encoder::RewardNormalizer normalizer;
  std::size_t steps = 0;
};

/// PPO on `scenario` with only the adapters trainable. The reward
/// normalizer defaults to a fresh one; pass the pretraining one to reuse it.
inline FinetuneResult finetune(Policy& adapted, const sim::Scenario& scenario, const ppo::PPOConfig& config,
                               std::optional<encoder::RewardNormalizer> normalizer = std::nullopt,
                               const std::function<void(const ppo::CurvePoint&)>& on_update = {}) {
  if (!has_adapters(adapted)) throw StateError("lora: finetune requires injected adapters");
  for (const auto& e : adapted.parameters()) {
    if (e.trainable != is_adapter_tensor(e.name)) {
      throw StateError("lora: tensor '" + e.name + "' has the wrong trainable flag for fine-tuning");
    }
  }
  ppo::Trainer trainer(adapted, {scenario}, config, normalizer);
  trainer.run(on_update);
  return FinetuneResult{trainer.curve(), trainer.normalizer(), trainer.steps()};
}

}  // namespace unitsa::lora
