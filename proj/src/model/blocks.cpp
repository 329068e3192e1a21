// SPDX-License-Identifier: Apache-2.0
#include "spikemba/model/blocks.hpp"

#include "spikemba/core/errors.hpp"

namespace spikemba::model {

CMRBlock::Stream CMRBlock::make_stream(core::ParameterStore& store, const std::string& name,
                                       const ModelConfig& cfg, core::SplitMix64& rng) {
  return Stream{LayerNorm(store, name + ".norm", cfg.channels),
                Linear(store, name + ".in", cfg.channels, cfg.expand, rng),
                CausalConv(store, name + ".conv", cfg.conv_width, cfg.expand, rng),
                SelectiveSSM(store, name + ".ssm", cfg.expand, cfg.state, rng)};
}

CMRBlock::CMRBlock(core::ParameterStore& store, const std::string& name, const ModelConfig& cfg,
                   core::SplitMix64& rng)
    : residual_(cfg.cmr_residual),
      vis_(make_stream(store, name + ".vis", cfg, rng)),
      tex_(make_stream(store, name + ".tex", cfg, rng)),
      gate_(store, name + ".gate", cfg.channels, cfg.expand, rng),
      out_(store, name + ".out", cfg.expand, cfg.channels, rng, Init::Zero) {}

Var CMRBlock::run_stream(const Stream& s, Var tokens) const {
  return s.ssm(core::silu(s.conv(s.in(s.norm(tokens)))));
}

Var CMRBlock::forward(Var t_vis, Var t_tex) const {
  if (t_vis.shape() != t_tex.shape())
    throw DimensionError("CMR: visual " + core::shape_str(t_vis.shape()) + " vs text " +
                         core::shape_str(t_tex.shape()) + " after alignment");
  Var gate = core::silu(gate_(vis_.norm(t_vis)));
  Var y = core::add(core::mul(run_stream(vis_, t_vis), gate), core::mul(run_stream(tex_, t_tex), gate));
  Var out = out_(y);
  return residual_ ? core::add(out, t_vis) : out;
}

MRMBlock::MRMBlock(core::ParameterStore& store, const std::string& name, const ModelConfig& cfg,
                   core::SplitMix64& rng, bool residual)
    : residual_(residual),
      norm_t_(store, name + ".norm_t", cfg.channels),
      norm_s_(store, name + ".norm_s", cfg.channels),
      in_x_(store, name + ".in_x", cfg.channels, cfg.mrm_inner, rng),
      in_z_(store, name + ".in_z", cfg.channels, cfg.mrm_inner, rng),
      conv_(store, name + ".conv", cfg.conv_width, cfg.mrm_inner, rng),
      ssm_(store, name + ".ssm", cfg.mrm_inner, cfg.state, rng),
      out_(store, name + ".out", cfg.mrm_inner, cfg.channels, rng, Init::Zero) {}

Var MRMBlock::forward(Var t, Var s) const {
  if (t.shape() != s.shape())
    throw DimensionError("MRM: tokens " + core::shape_str(t.shape()) + " vs spike stream " +
                         core::shape_str(s.shape()));
  Var x = core::silu(conv_(in_x_(norm_t_(t))));
  Var z = in_z_(norm_s_(s));
  Var out = out_(core::mul(ssm_(x), core::silu(z)));
  return residual_ ? core::add(out, t) : out;
}

}  // namespace spikemba::model
