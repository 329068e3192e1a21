// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spikemba/core/array.hpp"
#include "spikemba/core/tape.hpp"

namespace spikemba::ssm {

using core::Array;

/// Diagonal continuous-time system h' = A h + B x, y = C h. Vectors of length N.
struct ContinuousSSM {
  std::vector<double> A;
  std::vector<double> B;
  std::vector<double> C;

  std::size_t state_size() const { return A.size(); }
  /// Throws DimensionError on ragged vectors, DomainError unless every A entry is negative.
  void validate() const;
};

struct DiscretePair {
  std::vector<double> A_bar;
  std::vector<double> B_bar;
};

/// (exp(a*delta) - 1) / a, continued to delta at a = 0.
double zoh_input_gain(double a, double delta);

/// Zero-order hold: A_bar = exp(delta A), B_bar = (delta A)^-1 (exp(delta A) - I) delta B.
DiscretePair zoh_discretize(std::span<const double> A, std::span<const double> B, double delta);

/// Per-position discretized parameters, position-major [M x N].
struct DiscreteSSM {
  std::size_t positions = 0;
  std::size_t state = 0;
  std::vector<double> A_bar;
  std::vector<double> B_bar;
  std::vector<double> C;
  std::vector<double> delta;

  /// Same (A_bar, B_bar, C) at every position.
  bool time_invariant() const;

  static DiscreteSSM from_lti(const ContinuousSSM& sys, double delta, std::size_t positions);
};

/// Sequential recurrence h_m = A_bar_m h_{m-1} + B_bar_m x_m, y_m = C_m h_m with h_{-1} = 0,
/// applied independently to every column of x[M, E].
Array recurrent_scan(const DiscreteSSM& ssm, const Array& x);

/// Impulse response K[j] = C A_bar^j B_bar, one entry per position.
struct ConvKernel {
  std::vector<double> taps;
};

/// Builds the convolution kernel; throws ContractError if the parameters vary by position.
ConvKernel conv_kernel(const DiscreteSSM& ssm);

/// Causal convolution y[m] = sum_{j<=m} K[j] x[m-j] on each column of x ([M] or [M, E]).
/// The kernel length must equal M. This is the direct O(M^2) evaluation.
Array conv_scan(const ConvKernel& kernel, const Array& x);

/// Input-dependent scan: per position m and channel e, discretize with delta[m, e] against
/// A[e, :] (ZOH), then run the recurrence with B[m, :], C[m, :].
/// Shapes: x, delta [M, E]; B, C [M, N]; A [E, N]. Throws DomainError unless delta > 0.
Array selective_scan(const Array& x, const Array& delta, const Array& B, const Array& C,
                     const Array& A);

/// Differentiable selective scan. With gradients enabled the forward pass keeps the M*E*N
/// hidden states and discretization terms for the reverse pass.
core::Var selective_scan(core::Var x, core::Var delta, core::Var B, core::Var C, core::Var A);

}  // namespace spikemba::ssm
