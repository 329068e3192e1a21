// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "spikemba/model/config.hpp"
#include "spikemba/objectives/losses.hpp"
#include "spikemba/train/adam.hpp"

namespace spikemba::train {

/// Everything a training run needs besides data. Serialized as one flat JSON object; see
/// `to_json` for the key list. Model keys carry no prefix, LIF keys start with "lif_".
struct RunConfig {
  model::ModelConfig model;
  objectives::LossWeights weights;
  objectives::ContrastiveOptions contrastive;
  AdamConfig adam;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  /// Epochs without a new best validation R1@0.5 before stopping; 0 disables early stopping.
  std::size_t patience = 4;
  /// Global gradient-norm clip; 0 disables.
  double max_grad_norm = 0.0;
  /// Wall-clock cap on training in seconds. After each epoch, training stops if one more
  /// epoch of the same length would exceed it; 0 disables.
  double time_budget_s = 0.0;
  /// Fraction of the training file held out for validation when no separate file is given.
  double val_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Starts from `base` and applies the keys present in j. Unknown keys and wrong types
/// throw ParseError.
RunConfig run_config_from_json(const nlohmann::json& j, const RunConfig& base = {});
RunConfig load_run_config(const std::filesystem::path& path);
/// Applies one "key=value" override; the value is parsed as JSON, falling back to a string.
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace spikemba::train
