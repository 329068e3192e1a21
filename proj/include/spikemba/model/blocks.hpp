// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "spikemba/model/config.hpp"
#include "spikemba/model/layers.hpp"

namespace spikemba::model {

/// Contextual reasoning block over a visual and a text token stream of equal length M:
/// for o in {vis, tex}: x_o = SiLU(conv(Norm(T_o) W_x)), y_o = SSM_o(x_o); both are gated
/// by SiLU(z) with z = Norm(T_vis) W_z and fused by a zero-initialized linear E -> C.
class CMRBlock {
 public:
  CMRBlock(core::ParameterStore& store, const std::string& name, const ModelConfig& cfg, core::SplitMix64& rng);

  /// [M, C] x [M, C] -> [M, C]
  Var forward(Var t_vis, Var t_tex) const;

 private:
  struct Stream {
    LayerNorm norm;
    Linear in;
    CausalConv conv;
    SelectiveSSM ssm;
  };
  static Stream make_stream(core::ParameterStore& store, const std::string& name, const ModelConfig& cfg,
                            core::SplitMix64& rng);
  Var run_stream(const Stream& s, Var tokens) const;

  bool residual_;
  Stream vis_;
  Stream tex_;
  Linear gate_;
  Linear out_;
};

/// Relevant-mamba block: x from Norm(T), gate z from Norm(S), one selective SSM of inner
/// width P, output Linear(y * SiLU(z)) + T. The output linear starts at zero.
class MRMBlock {
 public:
  MRMBlock(core::ParameterStore& store, const std::string& name, const ModelConfig& cfg, core::SplitMix64& rng,
           bool residual = true);

  Var forward(Var t, Var s) const;

  Linear& out() { return out_; }

 private:
  bool residual_;
  LayerNorm norm_t_;
  LayerNorm norm_s_;
  Linear in_x_;
  Linear in_z_;
  CausalConv conv_;
  SelectiveSSM ssm_;
  Linear out_;
};

}  // namespace spikemba::model
