// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <string>

#include "spikemba/core/array.hpp"

namespace spikemba::core {

/// A named persistent array. Trainable parameters accumulate gradients from tapes into
/// `grad`; non-trainable ones are buffers (e.g. batch-norm running statistics).
struct Parameter {
  std::string name;
  Array value;
  Array grad;
  bool trainable = true;

  void zero_grad() { grad.fill(0.0); }
};

/// Owns parameters in declaration order. Addresses are stable for the store's lifetime.
class ParameterStore {
 public:
  Parameter& add(std::string name, Array value, bool trainable = true);

  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }
  Parameter* find(const std::string& name);
  std::size_t count_values(bool trainable_only = true) const;
  void zero_grad();

 private:
  std::deque<Parameter> params_;
};

}  // namespace spikemba::core
