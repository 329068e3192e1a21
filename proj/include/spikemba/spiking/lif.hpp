// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spikemba/core/array.hpp"
#include "spikemba/core/tape.hpp"

namespace spikemba::spiking {

using core::Array;

/// Leaky integrate-and-fire parameters:
///   U[t] = H[t-1] + X[t]
///   S[t] = Hea(U[t] - threshold)            (Hea(0) = 1)
///   H[t] = v_reset * S[t] + beta * U[t] * (1 - S[t]),   H[0] = 0
struct LIFConfig {
  double threshold = 1.0;
  double v_reset = 0.0;
  double beta = 0.5;
  std::size_t time_steps = 8;
  /// Half-width of the rectangular surrogate derivative.
  double surrogate_window = 0.5;

  void validate() const;
};

/// Binary T x M matrix: one row per SNN step, one column per sequence position.
struct SpikeTrain {
  std::size_t steps = 0;
  std::size_t positions = 0;
  std::vector<std::uint8_t> spikes;

  SpikeTrain() = default;
  SpikeTrain(std::size_t t, std::size_t m) : steps(t), positions(m), spikes(t * m, 0) {}

  std::uint8_t at(std::size_t t, std::size_t m) const { return spikes[t * positions + m]; }
  std::uint8_t& at(std::size_t t, std::size_t m) { return spikes[t * positions + m]; }
  std::size_t count() const;

  /// Converts a [T, M] array of 0/1 values.
  static SpikeTrain from_array(const Array& a);
};

struct LIFTrace {
  Array spikes;      // S, [T, ...]
  Array potential;   // U, [T, ...]
  Array membrane;    // H after each step, [T, ...]
};

/// Replicates x across T steps (constant-current encoding): [...] -> [T, ...].
Array encode_constant(const Array& x, std::size_t steps);

/// Runs the LIF recurrence on per-step input x[T, ...]; T must equal cfg.time_steps.
LIFTrace lif_forward(const Array& x, const LIFConfig& cfg);

/// Differentiable LIF layer on per-step input x[T, ...]. Backpropagates through time,
/// using the rectangular surrogate for dS/dU (the reset path included).
core::Var lif(core::Var x, const LIFConfig& cfg);
/// Same, with a constant current x[...] presented at every step. Output is [T, ...].
core::Var lif_constant(core::Var x, const LIFConfig& cfg);

/// Fraction of cfg.time_steps on which a single neuron driven by constant x fires.
double firing_rate(double x, const LIFConfig& cfg);

}  // namespace spikemba::spiking
