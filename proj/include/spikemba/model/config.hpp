// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "spikemba/spiking/lif.hpp"

namespace spikemba::model {

struct ModelConfig {
  std::size_t input_dim = 32;   // c_in of video and query features
  std::size_t channels = 64;    // C
  std::size_t expand = 128;     // E, CMR inner width
  std::size_t mrm_inner = 128;  // P
  std::size_t state = 16;       // N
  std::size_t slots = 4;        // N_r
  std::size_t layers = 6;       // L
  std::size_t conv_width = 4;
  /// Spiking saliency detector in every layer and spike-decoded proposals. Off: the MRM
  /// gate reads the token stream itself and the only proposal is the top saliency clip.
  bool use_ssd = true;
  /// Adds T_vis to the CMR output. The block as written has no residual; with its final
  /// linear zero-initialized it would output zeros at init.
  bool cmr_residual = true;
  /// Peak current of the saliency-driven proposal neurons (min-max normalized saliency).
  double proposal_gain = 2.0;
  spiking::LIFConfig lif;

  void validate() const;
};

}  // namespace spikemba::model
