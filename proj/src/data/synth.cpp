// SPDX-License-Identifier: Apache-2.0
#include "spikemba/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spikemba/core/errors.hpp"
#include "spikemba/core/random.hpp"

namespace spikemba::data {

void TaskSpec::validate() const {
  if (archetypes < 2) throw DomainError("TaskSpec: need at least 2 archetypes");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw DomainError("TaskSpec: noise must be >= 0");
  if (input_dim == 0) throw DomainError("TaskSpec: input_dim must be positive");
  if (clips_min == 0 || clips_min > clips_max) throw DomainError("TaskSpec: bad clip range");
  if (query_min == 0 || query_min > query_max) throw DomainError("TaskSpec: bad query range");
  if (segment_min == 0 || segment_min > segment_max) throw DomainError("TaskSpec: bad segment range");
  if ((distractors + 1) * segment_min > clips_min)
    throw DomainError("TaskSpec: " + std::to_string(distractors + 1) + " segments of " + std::to_string(segment_min) +
                      " clips do not fit in " + std::to_string(clips_min) + " clips");
}

nlohmann::ordered_json to_json(const TaskSpec& s) {
  return {{"clips_min", s.clips_min},     {"clips_max", s.clips_max},     {"query_min", s.query_min},
          {"query_max", s.query_max},     {"segment_min", s.segment_min}, {"segment_max", s.segment_max},
          {"input_dim", s.input_dim},     {"archetypes", s.archetypes},   {"noise", s.noise},
          {"distractors", s.distractors}, {"seed", s.seed}};
}

TaskSpec task_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("task spec: expected a JSON object", 0);
  TaskSpec s;
  for (const auto& [key, v] : j.items()) {
    auto count = [&]() -> std::uint64_t {
      if (!v.is_number_unsigned()) throw ParseError("task spec: '" + key + "' must be a non-negative integer", 0);
      return v.get<std::uint64_t>();
    };
    if (key == "clips_min") s.clips_min = count();
    else if (key == "clips_max") s.clips_max = count();
    else if (key == "query_min") s.query_min = count();
    else if (key == "query_max") s.query_max = count();
    else if (key == "segment_min") s.segment_min = count();
    else if (key == "segment_max") s.segment_max = count();
    else if (key == "input_dim") s.input_dim = count();
    else if (key == "archetypes") s.archetypes = count();
    else if (key == "distractors") s.distractors = count();
    else if (key == "seed") s.seed = count();
    else if (key == "noise") {
      if (!v.is_number()) throw ParseError("task spec: 'noise' must be a number", 0);
      s.noise = v.get<double>();
    } else {
      throw ParseError("task spec: unknown key '" + key + "'", 0);
    }
  }
  return s;
}

Array archetypes(const TaskSpec& spec) {
  auto rng = core::SplitMix64::stream(spec.seed, 0);
  Array a({spec.archetypes, spec.input_dim});
  for (double& v : a.values()) v = rng.normal();
  return a;
}

namespace {

double row_norm(const Array& a, std::size_t r) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) s += a.at(r, c) * a.at(r, c);
  return std::sqrt(s);
}

GeneratedSample generate_one(const TaskSpec& spec, const Array& arch, std::size_t index) {
  auto rng = core::SplitMix64::stream(spec.seed, index + 1);
  const std::size_t C = spec.input_dim;
  const std::size_t Nv = static_cast<std::size_t>(rng.between(spec.clips_min, spec.clips_max));
  const std::size_t Nq = static_cast<std::size_t>(rng.between(spec.query_min, spec.query_max));
  const std::size_t S = spec.distractors + 1;
  const std::size_t target_k = rng.below(spec.archetypes);
  const std::size_t target_slot = rng.below(S);

  // lengths capped at Nv / S so every layout fits; gaps are S sorted draws from [0, free]
  const std::size_t len_max = std::max(spec.segment_min, std::min(spec.segment_max, Nv / S));
  std::vector<std::size_t> lengths(S);
  std::size_t used = 0;
  for (auto& l : lengths) used += l = static_cast<std::size_t>(rng.between(spec.segment_min, len_max));
  std::vector<std::size_t> cuts(S);
  for (auto& c : cuts) c = static_cast<std::size_t>(rng.between(0, Nv - used));
  std::sort(cuts.begin(), cuts.end());

  GeneratedSample g;
  std::size_t offset = 0;
  for (std::size_t j = 0; j < S; ++j) {
    const std::size_t b = cuts[j] + offset;
    offset += lengths[j];
    const bool target = j == target_slot;
    const std::size_t k = target ? target_k : (target_k + 1 + rng.below(spec.archetypes - 1)) % spec.archetypes;
    g.segments.push_back({b, b + lengths[j] - 1, k, target});
  }

  GroundingSample& s = g.sample;
  s.sample_id = "synth-" + std::to_string(index);
  s.video = Array({Nv, C});
  for (double& v : s.video.values()) v = spec.noise * rng.normal();
  const double target_norm = row_norm(arch, target_k);
  for (const auto& seg : g.segments) {
    const double scale = target_norm / row_norm(arch, seg.archetype);
    for (std::size_t m = seg.begin; m <= seg.end; ++m)
      for (std::size_t c = 0; c < C; ++c) s.video.at(m, c) += scale * arch.at(seg.archetype, c);
  }
  s.query = Array({Nq, C});
  for (std::size_t r = 0; r < Nq; ++r)
    for (std::size_t c = 0; c < C; ++c) s.query.at(r, c) = arch.at(target_k, c) + spec.noise * rng.normal();

  const Segment& t = g.segments[target_slot];
  s.moments.push_back({t.begin, t.end});
  s.clip_saliency.assign(Nv, 0.0);
  const double center = 0.5 * static_cast<double>(t.begin + t.end);
  const double half = 0.5 * static_cast<double>(t.end - t.begin) + 0.5;
  for (std::size_t m = t.begin; m <= t.end; ++m)
    s.clip_saliency[m] = 1.0 - 0.5 * std::abs(static_cast<double>(m) - center) / half;
  return g;
}

}  // namespace

std::vector<GeneratedSample> generate_detailed(const TaskSpec& spec, std::size_t count, std::size_t first) {
  spec.validate();
  const Array arch = archetypes(spec);
  std::vector<GeneratedSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_one(spec, arch, first + i));
  return out;
}

std::vector<GroundingSample> generate(const TaskSpec& spec, std::size_t count, std::size_t first) {
  std::vector<GroundingSample> out;
  out.reserve(count);
  for (auto& g : generate_detailed(spec, count, first)) out.push_back(std::move(g.sample));
  return out;
}

}  // namespace spikemba::data
