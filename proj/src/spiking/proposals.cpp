// SPDX-License-Identifier: Apache-2.0
#include "spikemba/spiking/proposals.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "spikemba/core/errors.hpp"

namespace spikemba::spiking {

std::vector<MomentProposal> decode_proposals(const SpikeTrain& train, std::span<const double> saliency) {
  if (train.positions != saliency.size())
    throw DimensionError("decode_proposals: " + std::to_string(train.positions) + " spike columns vs " +
                         std::to_string(saliency.size()) + " saliency scores");
  std::vector<double> prefix(saliency.size() + 1, 0.0);
  for (std::size_t i = 0; i < saliency.size(); ++i) prefix[i + 1] = prefix[i] + saliency[i];

  std::map<std::pair<std::size_t, std::size_t>, MomentProposal> pooled;
  for (std::size_t t = 0; t < train.steps; ++t) {
    std::size_t m = 0;
    while (m < train.positions) {
      if (!train.at(t, m)) {
        ++m;
        continue;
      }
      const std::size_t b = m;
      while (m + 1 < train.positions && train.at(t, m + 1)) ++m;
      const std::size_t e = m;
      ++m;
      const double score = (prefix[e + 1] - prefix[b]) / static_cast<double>(e - b + 1);
      auto [it, inserted] = pooled.try_emplace({b, e}, MomentProposal{b, e, score, t});
      if (!inserted && score > it->second.score) it->second.score = score;
    }
  }
  std::vector<MomentProposal> out;
  out.reserve(pooled.size());
  for (auto& [key, p] : pooled) out.push_back(p);
  std::stable_sort(out.begin(), out.end(), [](const MomentProposal& a, const MomentProposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.length() != b.length()) return a.length() > b.length();
    return a.begin < b.begin;
  });
  return out;
}

SpikeTrain saliency_spikes(std::span<const double> saliency, const LIFConfig& cfg, double gain) {
  cfg.validate();
  const std::size_t M = saliency.size();
  SpikeTrain train(cfg.time_steps, M);
  if (M == 0) return train;
  const auto [lo_it, hi_it] = std::minmax_element(saliency.begin(), saliency.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  if (!(range > 0)) return train;
  core::Array current({M});
  for (std::size_t m = 0; m < M; ++m) current[m] = gain * (saliency[m] - lo) / range;
  const LIFTrace trace = lif_forward(encode_constant(current, cfg.time_steps), cfg);
  for (std::size_t i = 0; i < trace.spikes.size(); ++i) train.spikes[i] = trace.spikes[i] != 0.0;
  return train;
}

}  // namespace spikemba::spiking
