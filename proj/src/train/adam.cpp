// SPDX-License-Identifier: Apache-2.0
#include "spikemba/train/adam.hpp"

#include <cmath>

#include "spikemba/core/errors.hpp"

namespace spikemba::train {

void AdamConfig::validate() const {
  if (!(lr > 0)) throw DomainError("Adam: learning rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw DomainError("Adam: betas must lie in [0, 1)");
  if (!(eps > 0)) throw DomainError("Adam: eps must be positive");
  if (!(weight_decay >= 0)) throw DomainError("Adam: weight decay must be >= 0");
}

Adam::Adam(core::ParameterStore& store, const AdamConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  for (auto& p : store.all())
    if (p.trainable) slots_.push_back({&p, std::vector<double>(p.value.size()), std::vector<double>(p.value.size())});
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double step = cfg_.lr / c1;
  for (auto& s : slots_) {
    double* w = s.param->value.data();
    const double* g = s.param->grad.data();
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      const double gi = g[i] + cfg_.weight_decay * w[i];
      s.m[i] = cfg_.beta1 * s.m[i] + (1 - cfg_.beta1) * gi;
      s.v[i] = cfg_.beta2 * s.v[i] + (1 - cfg_.beta2) * gi * gi;
      w[i] -= step * s.m[i] / (std::sqrt(s.v[i] / c2) + cfg_.eps);
    }
  }
}

double grad_norm(const core::ParameterStore& store) {
  double s = 0.0;
  for (const auto& p : store.all())
    if (p.trainable)
      for (double g : p.grad.values()) s += g * g;
  return std::sqrt(s);
}

double clip_grad_norm(core::ParameterStore& store, double max_norm) {
  const double norm = grad_norm(store);
  if (max_norm > 0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (auto& p : store.all())
      if (p.trainable)
        for (double& g : p.grad.values()) g *= k;
  }
  return norm;
}

}  // namespace spikemba::train
