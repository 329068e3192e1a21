// SPDX-License-Identifier: Apache-2.0
#include "spikemba/core/tape.hpp"

#include <string>

#include "spikemba/core/errors.hpp"

namespace spikemba::core {

const Array& Var::value() const {
  if (!tape) throw ContractError("value() on an unbound Var");
  return tape->value(*this);
}

Parameter& ParameterStore::add(std::string name, Array value, bool trainable) {
  Parameter p;
  p.name = std::move(name);
  p.grad = Array(value.shape(), 0.0);
  p.value = std::move(value);
  p.trainable = trainable;
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::size_t ParameterStore::count_values(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable || !trainable_only) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::check(Var v) const {
  if (v.tape != this) throw ContractError("Var belongs to a different tape");
}

Var Tape::constant(Array value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  return push(std::move(n));
}

Var Tape::leaf(Array value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  n.op = "leaf";
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var{this, it->second};
  Node n;
  n.value = p.value;
  n.requires_grad = grad_enabled_ && p.trainable;
  n.op = "param";
  Var v = push(std::move(n));
  bound_.emplace(&p, v.id);
  return v;
}

Var Tape::record(const char* op, Array value, std::initializer_list<Var> parents,
                 BackwardFn backward) {
  return record(op, std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Tape::record(const char* op, Array value, const std::vector<Var>& parents,
                 BackwardFn backward) {
  if (!value.all_finite())
    throw NumericalError(std::string("non-finite value produced by ") + op + " " +
                         shape_str(value.shape()));
  Node n;
  n.value = std::move(value);
  n.op = op;
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (!p.valid()) continue;
      check(p);
      n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return push(std::move(n));
}

Array& Tape::grad(Var v) {
  check(v);
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad = Array(n.value.shape(), 0.0);
  return n.grad;
}

const Array* Tape::grad_if(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  return n.grad.empty() ? nullptr : &n.grad;
}

void Tape::backward(Var loss) {
  check(loss);
  if (value(loss).size() != 1)
    throw ContractError("backward() needs a scalar loss, got " + shape_str(value(loss).shape()));
  backward({{loss, Array(value(loss).shape(), 1.0)}});
}

void Tape::backward(const std::vector<std::pair<Var, Array>>& seeds) {
  std::uint32_t last = 0;
  for (const auto& [v, seed] : seeds) {
    check(v);
    if (seed.shape() != value(v).shape())
      throw DimensionError("seed shape " + shape_str(seed.shape()) + " vs value " +
                           shape_str(value(v).shape()));
    grad(v) += seed;
    last = std::max(last, v.id);
  }
  run_reverse(last);
}

void Tape::run_reverse(std::uint32_t last) {
  for (std::int64_t i = last; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    ++visits_;
    n.backward(*this, Var{this, static_cast<std::uint32_t>(i)});
  }
}

void Tape::accumulate_param_grads() {
  for (auto& [param, id] : bound_) {
    const Node& n = nodes_[id];
    if (param->trainable && !n.grad.empty()) param->grad += n.grad;
  }
}

}  // namespace spikemba::core
