#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "unitsa/nn/checkpoint.hpp"
#include "unitsa/nn/policy.hpp"

namespace unitsa::nn {

/// Policy weights plus the architecture needed to rebuild them. Extra
/// metadata (reward normalizer, provenance) rides along in `extra`.
template <typename T>
Archive to_archive(const ActorCritic<T>& policy, const std::map<std::string, std::string>& extra = {}) {
  Archive a;
  a.metadata = extra;
  const auto& c = policy.config();
  a.metadata["kind"] = "policy";
  a.metadata["extractor"] = std::string(to_string(c.extractor.kind));
  a.metadata["conv1_channels"] = std::to_string(c.extractor.conv1_channels);
  a.metadata["conv2_channels"] = std::to_string(c.extractor.conv2_channels);
  a.metadata["rnn_hidden"] = std::to_string(c.extractor.rnn_hidden);
  a.metadata["attention_dim"] = std::to_string(c.extractor.attention_dim);
  a.metadata["feature_dim"] = std::to_string(c.extractor.feature_dim);
  a.metadata["head_hidden"] = std::to_string(c.head_hidden);
  a.tensors = export_tensors(policy.parameters());
  return a;
}

inline PolicyConfig policy_config_from(const Archive& a) {
  if (a.meta("kind") != "policy") throw FormatError("checkpoint: not a policy checkpoint (kind=" + a.meta("kind") + ")");
  auto num = [&](const char* key) {
    try {
      return static_cast<std::size_t>(std::stoull(a.meta(key)));
    } catch (const std::logic_error&) {
      throw FormatError(std::string("checkpoint: metadata '") + key + "' is not a number");
    }
  };
  PolicyConfig c;
  c.extractor.kind = parse_extractor(a.meta("extractor"));
  c.extractor.conv1_channels = num("conv1_channels");
  c.extractor.conv2_channels = num("conv2_channels");
  c.extractor.rnn_hidden = num("rnn_hidden");
  c.extractor.attention_dim = num("attention_dim");
  c.extractor.feature_dim = num("feature_dim");
  c.head_hidden = num("head_hidden");
  return c;
}

template <typename T>
ActorCritic<T> policy_from_archive(const Archive& a) {
  ActorCritic<T> policy(policy_config_from(a));
  if (a.tensors.size() != policy.parameters().size()) {
    throw FormatError("checkpoint: expected " + std::to_string(policy.parameters().size()) + " tensors, found " +
                      std::to_string(a.tensors.size()));
  }
  import_tensors(policy.parameters(), a.tensors);
  return policy;
}

}  // namespace unitsa::nn
