// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "spikemba/core/parameter.hpp"

namespace spikemba::train {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Coupled L2 decay: wd * theta is added to the gradient before the moment updates.
  double weight_decay = 1e-4;

  void validate() const;
};

/// Adam over the trainable parameters of a store, consuming Parameter::grad.
class Adam {
 public:
  Adam(core::ParameterStore& store, const AdamConfig& cfg);

  /// One update from the accumulated gradients; gradients are left untouched.
  void step();
  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Slot {
    core::Parameter* param;
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::vector<Slot> slots_;
  std::uint64_t t_ = 0;
};

/// Global L2 norm of the trainable gradients.
double grad_norm(const core::ParameterStore& store);
/// Scales trainable gradients so their global norm is at most max_norm; returns the norm
/// before scaling.
double clip_grad_norm(core::ParameterStore& store, double max_norm);

}  // namespace spikemba::train
