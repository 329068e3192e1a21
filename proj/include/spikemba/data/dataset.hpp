// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "spikemba/core/array.hpp"
#include "spikemba/objectives/losses.hpp"

namespace spikemba::data {

using core::Array;
using objectives::MomentLabel;

/// One video/query pair with its labeled moments. Every moment satisfies
/// 0 <= begin <= end < N_v; clip_saliency has N_v entries in [0, 1].
struct GroundingSample {
  std::string sample_id;
  Array video;  // [N_v, C_in]
  Array query;  // [N_q, C_in]
  std::vector<MomentLabel> moments;
  std::vector<double> clip_saliency;

  std::size_t clips() const { return video.dim(0); }
  /// Throws DomainError naming the sample on any broken invariant.
  void validate() const;
  bool operator==(const GroundingSample&) const = default;
};

/// JSON-Lines, one sample per line:
///   {"sample_id", "video": [[...]], "query": [[...]], "moments": [{"b", "e"}], "clip_saliency": [...]}
/// A path ending in ".gz" is gzip-compressed. Doubles are written in shortest round-trip form,
/// so read(write(D)) == D exactly.
void write_dataset(const std::vector<GroundingSample>& samples, const std::filesystem::path& path);

/// Blank lines are skipped. A malformed or invalid line throws ParseError carrying its
/// 1-based line number; a missing file throws ContractError.
std::vector<GroundingSample> read_dataset(const std::filesystem::path& path);

std::string to_json_line(const GroundingSample& s);
GroundingSample from_json_line(const std::string& line, std::size_t line_number);

}  // namespace spikemba::data
