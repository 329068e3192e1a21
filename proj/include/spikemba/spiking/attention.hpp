// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include "spikemba/core/ops.hpp"
#include "spikemba/core/parameter.hpp"
#include "spikemba/core/random.hpp"
#include "spikemba/spiking/lif.hpp"

namespace spikemba::spiking {

/// G[t] = scale * (Q[t] K[t]^T) V[t] for every step t; Q, K, V are [T, M, d].
core::Var spike_attention_product(core::Var Q, core::Var K, core::Var V, double scale);

struct SpikingAttentionOutput {
  core::Var spikes;  // [T, M, C] output spike trains
  core::Var rate;    // [M, C] mean over the T steps
};

/// Spiking self-attention of the saliency detector:
///   Q = SNN(X Wq), K = SNN(X Wk), V = SNN(X Wv)
///   G = (Q K^T V) / sqrt(d)
///   S = SNN(BN(Linear(G)))
/// X enters every step unchanged. Batch-norm statistics are taken over the T*M rows of
/// one sequence.
class SpikingAttention {
 public:
  SpikingAttention(core::ParameterStore& store, const std::string& prefix, std::size_t channels,
                   std::size_t inner, core::SplitMix64& rng);

  SpikingAttentionOutput forward(core::Var x, const LIFConfig& cfg, bool training);

  std::size_t channels() const { return channels_; }
  std::size_t inner() const { return inner_; }

  core::Parameter& wq() { return *wq_; }
  core::Parameter& wk() { return *wk_; }
  core::Parameter& wv() { return *wv_; }

 private:
  std::size_t channels_;
  std::size_t inner_;
  core::Parameter* wq_;
  core::Parameter* wk_;
  core::Parameter* wv_;
  core::Parameter* w_out_;
  core::Parameter* b_out_;
  core::Parameter* bn_gamma_;
  core::Parameter* bn_beta_;
  core::BatchNormState bn_;
};

/// Kaiming-uniform [fan_in, fan_out] weight, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
core::Array kaiming_uniform(std::size_t fan_in, std::size_t fan_out, core::SplitMix64& rng);

}  // namespace spikemba::spiking
