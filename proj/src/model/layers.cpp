// SPDX-License-Identifier: Apache-2.0
#include "spikemba/model/layers.hpp"

#include <cmath>

#include "spikemba/spiking/attention.hpp"
#include "spikemba/ssm/ssm.hpp"

namespace spikemba::model {

Linear::Linear(core::ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               core::SplitMix64& rng, Init init, bool bias)
    : in_(in), out_(out) {
  w_ = &store.add(name + ".w", init == Init::Zero ? Array({in, out}, 0.0) : spiking::kaiming_uniform(in, out, rng));
  if (bias) b_ = &store.add(name + ".b", Array({out}, 0.0));
}

Var Linear::operator()(Var x) const {
  core::Tape& t = *x.tape;
  return core::linear(x, t.param(*w_), b_ ? t.param(*b_) : Var{});
}

LayerNorm::LayerNorm(core::ParameterStore& store, const std::string& name, std::size_t channels) {
  gamma_ = &store.add(name + ".gamma", Array({channels}, 1.0));
  beta_ = &store.add(name + ".beta", Array({channels}, 0.0));
}

Var LayerNorm::operator()(Var x) const {
  core::Tape& t = *x.tape;
  return core::layer_norm(x, t.param(*gamma_), t.param(*beta_));
}

CausalConv::CausalConv(core::ParameterStore& store, const std::string& name, std::size_t width,
                       std::size_t channels, core::SplitMix64& rng)
    : width_(width) {
  kernel_ = &store.add(name + ".kernel", spiking::kaiming_uniform(width, channels, rng));
  const double bound = 1.0 / std::sqrt(static_cast<double>(width));
  Array b({channels});
  for (double& v : b.values()) v = rng.uniform(-bound, bound);
  bias_ = &store.add(name + ".bias", std::move(b));
}

Var CausalConv::operator()(Var x) const {
  core::Tape& t = *x.tape;
  Var k = t.param(*kernel_);
  const std::size_t M = x.value().dim(0);
  if (M < width_) k = core::slice_rows(k, 0, M);
  return core::add_row(core::conv1d(x, k), t.param(*bias_));
}

namespace {

Array dt_bias_init(std::size_t inner, core::SplitMix64& rng) {
  // delta log-uniform on [1e-3, 1e-1], stored through the inverse softplus
  Array b({inner});
  for (double& v : b.values()) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    v = dt + std::log(-std::expm1(-dt));
  }
  return b;
}

Array a_log_init(std::size_t inner, std::size_t state) {
  Array a({inner, state});
  for (std::size_t e = 0; e < inner; ++e)
    for (std::size_t n = 0; n < state; ++n) a.at(e, n) = std::log(static_cast<double>(n + 1));
  return a;
}

}  // namespace

SelectiveSSM::SelectiveSSM(core::ParameterStore& store, const std::string& name, std::size_t inner,
                           std::size_t state, core::SplitMix64& rng)
    : proj_b_(store, name + ".proj_b", inner, state, rng, Init::Kaiming, false),
      proj_c_(store, name + ".proj_c", inner, state, rng, Init::Kaiming, false),
      proj_dt_(store, name + ".proj_dt", inner, inner, rng, Init::Kaiming, false) {
  dt_bias_ = &store.add(name + ".dt_bias", dt_bias_init(inner, rng));
  a_log_ = &store.add(name + ".a_log", a_log_init(inner, state));
}

Var SelectiveSSM::operator()(Var x) const {
  core::Tape& t = *x.tape;
  Var delta = core::softplus(core::add_row(proj_dt_(x), t.param(*dt_bias_)));
  Var A = core::scale(core::exp(t.param(*a_log_)), -1.0);
  return ssm::selective_scan(x, delta, proj_b_(x), proj_c_(x), A);
}

Array sinusoidal_positions(std::size_t rows, std::size_t channels) {
  Array p({rows, channels});
  for (std::size_t m = 0; m < rows; ++m)
    for (std::size_t c = 0; c < channels; ++c) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (c / 2)) / static_cast<double>(channels));
      p.at(m, c) = c % 2 == 0 ? std::sin(m * freq) : std::cos(m * freq);
    }
  return p;
}

}  // namespace spikemba::model
