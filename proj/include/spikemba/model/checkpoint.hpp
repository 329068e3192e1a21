// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>

#include "json.hpp"
#include "spikemba/model/model.hpp"

namespace spikemba::model {

nlohmann::ordered_json config_to_json(const ModelConfig& cfg);
/// Keys absent from j keep their value in `base`; unknown keys and wrong types throw ParseError.
ModelConfig config_from_json(const nlohmann::json& j, const ModelConfig& base = {});

/// Binary layout, all integers and floats little-endian:
///   "SPKMBACK" | u32 version | u64 x 9 dimension record | u64 parameter count
///   then per parameter: u32 rank | u64 dims[rank] | f64 values
/// The manifest (`manifest_path`) carries names, shapes and the full config.
void save_checkpoint(const std::filesystem::path& path, const SpikeMbaModel& model);

/// Rebuilds the model from the manifest and fills every parameter from the binary.
/// Throws ParseError on a malformed or mismatching file, and ContractError if absent.
std::unique_ptr<SpikeMbaModel> load_checkpoint(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);

}  // namespace spikemba::model
