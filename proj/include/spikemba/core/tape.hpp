// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spikemba/core/array.hpp"
#include "spikemba/core/parameter.hpp"

namespace spikemba::core {

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; only valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  bool valid() const { return tape != nullptr; }
  const Array& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Define-by-run reverse-mode recorder. Nodes are appended in execution order, so every
/// parent precedes its children; backward() walks the list once in reverse.
///
/// A tape and everything recorded on it belong to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array value);
  /// Differentiable leaf; its gradient is readable after backward().
  Var leaf(Array value);
  /// Leaf bound to a persistent parameter; recorded once per tape.
  Var param(Parameter& p);

  /// Appends an op result. `backward` reads grad(self) and accumulates into parents; it
  /// runs only when the result needs a gradient.
  Var record(const char* op, Array value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(const char* op, Array value, const std::vector<Var>& parents, BackwardFn backward);

  const Array& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient slot of v, allocated as zeros on first use.
  Array& grad(Var v);
  const Array* grad_if(Var v) const;
  bool needs_grad(Var v) const { return v.valid() && nodes_[v.id].requires_grad; }
  bool grad_enabled() const { return grad_enabled_; }

  /// Reverse pass from a scalar loss (seed 1).
  void backward(Var loss);
  /// Reverse pass from several outputs with explicit seeds.
  void backward(const std::vector<std::pair<Var, Array>>& seeds);

  /// Adds leaf gradients of bound parameters into Parameter::grad.
  void accumulate_param_grads();

  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_visits() const { return visits_; }

 private:
  struct Node {
    Array value;
    Array grad;
    bool requires_grad = false;
    const char* op = "";
    BackwardFn backward;
  };

  Var push(Node node);
  void check(Var v) const;
  void run_reverse(std::uint32_t last);

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::uint32_t> bound_;
  bool grad_enabled_;
  std::size_t visits_ = 0;
};

}  // namespace spikemba::core
