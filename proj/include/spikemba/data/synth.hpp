// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "spikemba/data/dataset.hpp"

namespace spikemba::data {

/// Synthetic grounding task. Each sample plants one segment of a target archetype in
/// background noise, adds `distractors` segments of other archetypes rescaled to the
/// target's norm, and derives the query tokens from the target archetype.
struct TaskSpec {
  std::size_t clips_min = 24, clips_max = 48;      // N_v
  std::size_t query_min = 4, query_max = 10;       // N_q
  std::size_t segment_min = 4, segment_max = 12;   // planted segment length in clips
  std::size_t input_dim = 32;                      // C_in
  std::size_t archetypes = 6;                      // K
  double noise = 0.3;                              // sigma
  std::size_t distractors = 2;
  std::uint64_t seed = 0;

  /// K >= 2, sigma >= 0, ordered ranges, and room for every segment in the shortest video.
  void validate() const;
};

nlohmann::ordered_json to_json(const TaskSpec& spec);
/// Missing keys keep their defaults; unknown keys or wrong types throw ParseError.
TaskSpec task_spec_from_json(const nlohmann::json& j);

/// K archetype vectors [K, C_in], drawn once per task from a unit Gaussian.
Array archetypes(const TaskSpec& spec);

/// Segment layout of one generated sample, in clip units (inclusive bounds).
struct Segment {
  std::size_t begin, end, archetype;
  bool target;
};

struct GeneratedSample {
  GroundingSample sample;
  std::vector<Segment> segments;
};

/// Sample i draws from SplitMix64::stream(seed, i + 1) and the archetypes from stream
/// (seed, 0), so every sample is reproducible on its own. count == 0 gives an empty list.
std::vector<GeneratedSample> generate_detailed(const TaskSpec& spec, std::size_t count, std::size_t first = 0);
std::vector<GroundingSample> generate(const TaskSpec& spec, std::size_t count, std::size_t first = 0);

}  // namespace spikemba::data
