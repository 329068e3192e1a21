// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include "spikemba/core/ops.hpp"
#include "spikemba/core/parameter.hpp"
#include "spikemba/core/random.hpp"

namespace spikemba::model {

using core::Array;
using core::Var;

enum class Init { Kaiming, Zero };

/// y = x W + b with W[in, out]. Kaiming-uniform weights unless zero-initialized; the bias
/// starts at zero.
class Linear {
 public:
  Linear(core::ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
         core::SplitMix64& rng, Init init = Init::Kaiming, bool bias = true);

  Var operator()(Var x) const;
  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }
  core::Parameter& weight() const { return *w_; }

 private:
  std::size_t in_, out_;
  core::Parameter* w_;
  core::Parameter* b_ = nullptr;
};

class LayerNorm {
 public:
  LayerNorm(core::ParameterStore& store, const std::string& name, std::size_t channels);
  Var operator()(Var x) const;

 private:
  core::Parameter* gamma_;
  core::Parameter* beta_;
};

/// Depthwise causal convolution with bias. Sequences shorter than the kernel use only the
/// leading taps, which is the same as zero history.
class CausalConv {
 public:
  CausalConv(core::ParameterStore& store, const std::string& name, std::size_t width, std::size_t channels,
             core::SplitMix64& rng);
  Var operator()(Var x) const;

 private:
  std::size_t width_;
  core::Parameter* kernel_;
  core::Parameter* bias_;
};

/// Input-dependent SSM over x'[M, E]:
///   B = x' W_B, C = x' W_C                 [M, N]
///   delta = softplus(x' W_dt + dt_bias)    [M, E]
///   A = -exp(A_log)                        [E, N], A_log starts at log(n + 1)
///   y = selective_scan(x', delta, B, C, A)
class SelectiveSSM {
 public:
  SelectiveSSM(core::ParameterStore& store, const std::string& name, std::size_t inner, std::size_t state,
               core::SplitMix64& rng);
  Var operator()(Var x) const;

 private:
  Linear proj_b_;
  Linear proj_c_;
  Linear proj_dt_;
  core::Parameter* dt_bias_;
  core::Parameter* a_log_;
};

/// Fixed sinusoidal position table [rows, channels].
Array sinusoidal_positions(std::size_t rows, std::size_t channels);

}  // namespace spikemba::model
