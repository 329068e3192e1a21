// SPDX-License-Identifier: Apache-2.0
#include "spikemba/train/run_config.hpp"

#include <fstream>

#include "spikemba/core/errors.hpp"
#include "spikemba/model/checkpoint.hpp"

namespace spikemba::train {

void RunConfig::validate() const {
  model.validate();
  weights.validate();
  adam.validate();
  if (batch_size == 0) throw DomainError("batch_size must be positive");
  if (epochs == 0) throw DomainError("epochs must be positive");
  if (!(contrastive.temperature > 0)) throw DomainError("contrastive temperature must be positive");
  if (!(max_grad_norm >= 0) || !(time_budget_s >= 0)) throw DomainError("max_grad_norm and time_budget_s must be >= 0");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw DomainError("val_fraction must lie in [0, 1)");
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j = model::config_to_json(c.model);
  j["alpha_c"] = c.weights.contrastive;
  j["alpha_s"] = c.weights.proposal;
  j["alpha_e"] = c.weights.entropy;
  j["temperature"] = c.weights.temperature;
  j["entropy_temperature"] = c.weights.entropy_temperature;
  j["contrastive_form"] = c.contrastive.form == objectives::ContrastiveForm::AsPrinted ? "as_printed" : "infonce";
  j["contrastive_clamp"] = c.contrastive.clamp_eps;
  j["lr"] = c.adam.lr;
  j["adam_beta1"] = c.adam.beta1;
  j["adam_beta2"] = c.adam.beta2;
  j["adam_eps"] = c.adam.eps;
  j["weight_decay"] = c.adam.weight_decay;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["patience"] = c.patience;
  j["max_grad_norm"] = c.max_grad_norm;
  j["time_budget_s"] = c.time_budget_s;
  j["val_fraction"] = c.val_fraction;
  j["seed"] = c.seed;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j, const RunConfig& base) {
  if (!j.is_object()) throw ParseError("run config: expected a flat JSON object", 0);
  RunConfig c = base;
  const auto model_keys = model::config_to_json(c.model);
  nlohmann::json model_part = nlohmann::json::object();
  for (const auto& [key, v] : j.items()) {
    if (model_keys.contains(key)) {
      model_part[key] = v;
      continue;
    }
    auto real = [&] {
      if (!v.is_number()) throw ParseError("run config: '" + key + "' must be a number", 0);
      return v.get<double>();
    };
    auto count = [&]() -> std::uint64_t {
      if (!v.is_number_unsigned()) throw ParseError("run config: '" + key + "' must be a non-negative integer", 0);
      return v.get<std::uint64_t>();
    };
    if (key == "alpha_c") c.weights.contrastive = real();
    else if (key == "alpha_s") c.weights.proposal = real();
    else if (key == "alpha_e") c.weights.entropy = real();
    else if (key == "temperature") c.contrastive.temperature = c.weights.temperature = real();
    else if (key == "entropy_temperature") c.weights.entropy_temperature = real();
    else if (key == "contrastive_clamp") c.contrastive.clamp_eps = real();
    else if (key == "lr") c.adam.lr = real();
    else if (key == "adam_beta1") c.adam.beta1 = real();
    else if (key == "adam_beta2") c.adam.beta2 = real();
    else if (key == "adam_eps") c.adam.eps = real();
    else if (key == "weight_decay") c.adam.weight_decay = real();
    else if (key == "batch_size") c.batch_size = count();
    else if (key == "epochs") c.epochs = count();
    else if (key == "patience") c.patience = count();
    else if (key == "max_grad_norm") c.max_grad_norm = real();
    else if (key == "time_budget_s") c.time_budget_s = real();
    else if (key == "val_fraction") c.val_fraction = real();
    else if (key == "seed") c.seed = count();
    else if (key == "contrastive_form") {
      const std::string form = v.is_string() ? v.get<std::string>() : "";
      if (form == "as_printed") c.contrastive.form = objectives::ContrastiveForm::AsPrinted;
      else if (form == "infonce") c.contrastive.form = objectives::ContrastiveForm::InfoNCE;
      else throw ParseError("run config: contrastive_form must be \"as_printed\" or \"infonce\"", 0);
    } else {
      throw ParseError("run config: unknown key '" + key + "'", 0);
    }
  }
  c.model = model::config_from_json(model_part, c.model);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ContractError("config file not found: " + path.string());
  try {
    return run_config_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what(), 0);
  }
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ParseError("override '" + assignment + "' is not key=value", 0);
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  cfg = run_config_from_json(nlohmann::json{{key, value}}, cfg);
}

}  // namespace spikemba::train
