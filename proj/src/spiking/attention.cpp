// SPDX-License-Identifier: Apache-2.0
#include "spikemba/spiking/attention.hpp"

#include <Eigen/Core>
#include <cmath>

#include "spikemba/core/errors.hpp"

namespace spikemba::spiking {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

}  // namespace

core::Array kaiming_uniform(std::size_t fan_in, std::size_t fan_out, core::SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  core::Array w({fan_in, fan_out});
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  return w;
}

core::Var spike_attention_product(core::Var Q, core::Var K, core::Var V, double scale) {
  using core::Tape;
  using core::Var;
  const core::Array& q = Q.value();
  if (q.rank() != 3 || K.shape() != q.shape() || V.shape() != q.shape())
    throw DimensionError("spike_attention_product: Q, K, V must share a [T, M, d] shape");
  const auto T = static_cast<Eigen::Index>(q.dim(0));
  const auto M = static_cast<Eigen::Index>(q.dim(1));
  const auto d = static_cast<Eigen::Index>(q.dim(2));
  core::Array g(q.shape());
  for (Eigen::Index t = 0; t < T; ++t) {
    const std::size_t off = static_cast<std::size_t>(t * M * d);
    MapC qt(q.data() + off, M, d), kt(K.value().data() + off, M, d), vt(V.value().data() + off, M, d);
    Map(g.data() + off, M, d).noalias() = scale * ((qt * kt.transpose()) * vt);
  }
  return Q.tape->record(
      "spike_attention_product", std::move(g), {Q, K, V}, [Q, K, V, scale, T, M, d](Tape& tp, Var self) {
        const core::Array& gg = tp.grad(self);
        core::Array* gq = tp.needs_grad(Q) ? &tp.grad(Q) : nullptr;
        core::Array* gk = tp.needs_grad(K) ? &tp.grad(K) : nullptr;
        core::Array* gv = tp.needs_grad(V) ? &tp.grad(V) : nullptr;
        for (Eigen::Index t = 0; t < T; ++t) {
          const std::size_t off = static_cast<std::size_t>(t * M * d);
          MapC qt(tp.value(Q).data() + off, M, d), kt(tp.value(K).data() + off, M, d),
              vt(tp.value(V).data() + off, M, d), gt(gg.data() + off, M, d);
          const RowMat p = qt * kt.transpose();                   // [M, M]
          const RowMat gp = scale * (gt * vt.transpose());         // dL/dP
          if (gq) Map(gq->data() + off, M, d).noalias() += gp * kt;
          if (gk) Map(gk->data() + off, M, d).noalias() += gp.transpose() * qt;
          if (gv) Map(gv->data() + off, M, d).noalias() += scale * (p.transpose() * gt);
        }
      });
}

SpikingAttention::SpikingAttention(core::ParameterStore& store, const std::string& prefix,
                                   std::size_t channels, std::size_t inner, core::SplitMix64& rng)
    : channels_(channels), inner_(inner) {
  wq_ = &store.add(prefix + ".wq", kaiming_uniform(channels, inner, rng));
  wk_ = &store.add(prefix + ".wk", kaiming_uniform(channels, inner, rng));
  wv_ = &store.add(prefix + ".wv", kaiming_uniform(channels, inner, rng));
  w_out_ = &store.add(prefix + ".w_out", kaiming_uniform(inner, channels, rng));
  b_out_ = &store.add(prefix + ".b_out", core::Array({channels}, 0.0));
  bn_gamma_ = &store.add(prefix + ".bn_gamma", core::Array({channels}, 1.0));
  bn_beta_ = &store.add(prefix + ".bn_beta", core::Array({channels}, 0.0));
  bn_.running_mean = &store.add(prefix + ".bn_running_mean", core::Array({channels}, 0.0), false);
  bn_.running_var = &store.add(prefix + ".bn_running_var", core::Array({channels}, 1.0), false);
}

SpikingAttentionOutput SpikingAttention::forward(core::Var x, const LIFConfig& cfg, bool training) {
  core::Tape& tape = *x.tape;
  if (x.value().rank() != 2 || x.value().cols() != channels_)
    throw DimensionError("SpikingAttention: expected [M, " + std::to_string(channels_) + "] input, got " +
                         core::shape_str(x.value().shape()));
  const std::size_t T = cfg.time_steps;
  const std::size_t M = x.value().dim(0);
  core::Var q = lif_constant(core::linear(x, tape.param(*wq_)), cfg);
  core::Var k = lif_constant(core::linear(x, tape.param(*wk_)), cfg);
  core::Var v = lif_constant(core::linear(x, tape.param(*wv_)), cfg);
  core::Var g = spike_attention_product(q, k, v, 1.0 / std::sqrt(static_cast<double>(inner_)));
  core::Var lin = core::linear(g, tape.param(*w_out_), tape.param(*b_out_));
  core::Var flat = core::reshape(lin, {T * M, channels_});
  core::Var bn = core::batch_norm(flat, tape.param(*bn_gamma_), tape.param(*bn_beta_), bn_, training);
  core::Var s = lif(core::reshape(bn, {T, M, channels_}), cfg);
  return {s, core::mean_leading(s)};
}

}  // namespace spikemba::spiking
