// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spikemba/spiking/lif.hpp"

namespace spikemba::spiking {

/// Candidate moment over clips [begin, end] (inclusive).
struct MomentProposal {
  std::size_t begin = 0;
  std::size_t end = 0;
  double score = 0.0;
  /// First SNN step whose spike row produced this interval.
  std::size_t source_step = 0;

  std::size_t length() const { return end - begin + 1; }
};

/// Maximal runs of consecutive spikes in every row become intervals. Each interval is
/// scored by the mean saliency over its clips; duplicates across steps keep the highest
/// score. Result is sorted by score (descending), then longer first, then by begin.
std::vector<MomentProposal> decode_proposals(const SpikeTrain& train, std::span<const double> saliency);

/// Drives one LIF neuron per clip with a constant current derived from the clip's
/// saliency: gain * (s - min s) / (max s - min s). The neuron with the top score therefore
/// sees `gain`, the bottom one 0. A flat saliency profile gives an all-zero train.
SpikeTrain saliency_spikes(std::span<const double> saliency, const LIFConfig& cfg, double gain);

}  // namespace spikemba::spiking
