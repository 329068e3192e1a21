// SPDX-License-Identifier: Apache-2.0
#include "spikemba/model/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "spikemba/core/errors.hpp"

namespace spikemba::model {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'K', 'M', 'B', 'A', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <class U>
void put(std::ostream& os, U v) {
  std::array<char, sizeof(U)> b;
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), b.size());
}

template <class U>
U get(std::istream& is) {
  std::array<unsigned char, sizeof(U)> b;
  if (!is.read(reinterpret_cast<char*>(b.data()), b.size())) throw ParseError("checkpoint: truncated file", 0);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

std::array<std::uint64_t, 9> dimension_record(const ModelConfig& c) {
  return {c.input_dim, c.channels, c.expand, c.mrm_inner, c.state, c.slots, c.layers, c.conv_width,
          c.use_ssd ? 1u : 0u};
}

}  // namespace

nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["input_dim"] = c.input_dim;
  j["channels"] = c.channels;
  j["expand"] = c.expand;
  j["mrm_inner"] = c.mrm_inner;
  j["state"] = c.state;
  j["slots"] = c.slots;
  j["layers"] = c.layers;
  j["conv_width"] = c.conv_width;
  j["use_ssd"] = c.use_ssd;
  j["cmr_residual"] = c.cmr_residual;
  j["proposal_gain"] = c.proposal_gain;
  j["lif_threshold"] = c.lif.threshold;
  j["lif_v_reset"] = c.lif.v_reset;
  j["lif_beta"] = c.lif.beta;
  j["lif_time_steps"] = c.lif.time_steps;
  j["lif_surrogate_window"] = c.lif.surrogate_window;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j, const ModelConfig& base) {
  if (!j.is_object()) throw ParseError("model config: expected a JSON object", 0);
  ModelConfig c = base;
  for (const auto& [key, v] : j.items()) {
    auto size = [&] {
      if (!v.is_number_unsigned()) throw ParseError("model config: '" + key + "' must be a non-negative integer", 0);
      return v.get<std::size_t>();
    };
    auto real = [&] {
      if (!v.is_number()) throw ParseError("model config: '" + key + "' must be a number", 0);
      return v.get<double>();
    };
    auto flag = [&] {
      if (!v.is_boolean()) throw ParseError("model config: '" + key + "' must be a boolean", 0);
      return v.get<bool>();
    };
    if (key == "input_dim") c.input_dim = size();
    else if (key == "channels") c.channels = size();
    else if (key == "expand") c.expand = size();
    else if (key == "mrm_inner") c.mrm_inner = size();
    else if (key == "state") c.state = size();
    else if (key == "slots") c.slots = size();
    else if (key == "layers") c.layers = size();
    else if (key == "conv_width") c.conv_width = size();
    else if (key == "use_ssd") c.use_ssd = flag();
    else if (key == "cmr_residual") c.cmr_residual = flag();
    else if (key == "proposal_gain") c.proposal_gain = real();
    else if (key == "lif_threshold") c.lif.threshold = real();
    else if (key == "lif_v_reset") c.lif.v_reset = real();
    else if (key == "lif_beta") c.lif.beta = real();
    else if (key == "lif_time_steps") c.lif.time_steps = size();
    else if (key == "lif_surrogate_window") c.lif.surrogate_window = real();
    else throw ParseError("model config: unknown key '" + key + "'", 0);
  }
  return c;
}

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  return p.replace_extension(".json");
}

void save_checkpoint(const std::filesystem::path& path, const SpikeMbaModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("checkpoint: cannot write " + path.string());
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kVersion);
  for (std::uint64_t d : dimension_record(model.config())) put<std::uint64_t>(os, d);
  const auto& params = model.params().all();
  put<std::uint64_t>(os, params.size());

  nlohmann::ordered_json manifest;
  manifest["format"] = "spikemba-checkpoint";
  manifest["version"] = kVersion;
  manifest["config"] = config_to_json(model.config());
  manifest["parameters"] = nlohmann::ordered_json::array();
  for (const auto& p : params) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put<std::uint64_t>(os, d);
    for (double v : p.value.values()) put<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    manifest["parameters"].push_back({{"name", p.name}, {"shape", p.value.shape()}, {"trainable", p.trainable}});
  }
  if (!os) throw ContractError("checkpoint: write failed for " + path.string());

  std::ofstream ms(manifest_path(path));
  if (!ms) throw ContractError("checkpoint: cannot write manifest for " + path.string());
  ms << manifest.dump(2) << '\n';
}

std::unique_ptr<SpikeMbaModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream ms(manifest_path(path));
  std::ifstream is(path, std::ios::binary);
  if (!is || !ms) throw ContractError("checkpoint: missing " + (is ? manifest_path(path) : path).string());

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(ms);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint manifest: ") + e.what(), 0);
  }
  if (!manifest.contains("config")) throw ParseError("checkpoint manifest: no config", 0);
  auto model = std::make_unique<SpikeMbaModel>(config_from_json(manifest["config"]), 0);

  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw ParseError("checkpoint: bad magic in " + path.string(), 0);
  if (const auto v = get<std::uint32_t>(is); v != kVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(v), 0);
  for (std::uint64_t d : dimension_record(model->config()))
    if (get<std::uint64_t>(is) != d) throw ParseError("checkpoint: dimension record disagrees with manifest", 0);
  auto& params = model->params().all();
  if (get<std::uint64_t>(is) != params.size()) throw ParseError("checkpoint: parameter count mismatch", 0);
  for (auto& p : params) {
    const auto rank = get<std::uint32_t>(is);
    core::Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(is);
    if (shape != p.value.shape())
      throw ParseError("checkpoint: shape " + core::shape_str(shape) + " for " + p.name + ", expected " +
                       core::shape_str(p.value.shape()), 0);
    for (double& v : p.value.values()) v = std::bit_cast<double>(get<std::uint64_t>(is));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw ParseError("checkpoint: trailing bytes", 0);
  return model;
}

}  // namespace spikemba::model
