// SPDX-License-Identifier: Apache-2.0
#include "spikemba/spiking/lif.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "spikemba/core/errors.hpp"

namespace spikemba::spiking {
namespace {

// One implementation for both input layouts: per-step [T, inner] or constant [inner].
void run_lif(const double* x, bool per_step, std::size_t T, std::size_t inner, const LIFConfig& cfg,
             double* spikes, double* potential, double* membrane) {
  std::vector<double> h(inner, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double* xt = per_step ? x + t * inner : x;
    for (std::size_t i = 0; i < inner; ++i) {
      const double u = h[i] + xt[i];
      const double s = u >= cfg.threshold ? 1.0 : 0.0;
      h[i] = cfg.v_reset * s + cfg.beta * u * (1.0 - s);
      spikes[t * inner + i] = s;
      if (potential) potential[t * inner + i] = u;
      if (membrane) membrane[t * inner + i] = h[i];
    }
  }
}

core::Var record_lif(core::Var x, const LIFConfig& cfg, bool per_step) {
  using core::Tape;
  using core::Var;
  cfg.validate();
  const Array& xv = x.value();
  const std::size_t T = cfg.time_steps;
  core::Shape out_shape;
  if (per_step) {
    if (xv.rank() < 2 || xv.dim(0) != T)
      throw DimensionError("lif: leading axis " + core::shape_str(xv.shape()) + " vs " +
                           std::to_string(T) + " time steps");
    out_shape = xv.shape();
  } else {
    out_shape = xv.shape();
    out_shape.insert(out_shape.begin(), T);
  }
  const std::size_t inner = per_step ? xv.size() / T : xv.size();
  Array s(out_shape);
  auto u = std::make_shared<Array>(out_shape);
  run_lif(xv.data(), per_step, T, inner, cfg, s.data(), u->data(), nullptr);
  return x.tape->record("lif", std::move(s), {x}, [x, cfg, per_step, u, T, inner](Tape& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Array& gs = t.grad(self);
    const Array& sv = t.value(self);
    Array& gx = t.grad(x);
    const double height = 1.0 / (2.0 * cfg.surrogate_window);
    std::vector<double> gh(inner, 0.0);  // dL/dH[t], flowing back from step t+1
    for (std::size_t ti = T; ti-- > 0;) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = ti * inner + i;
        const double uval = (*u)[k];
        const double sval = sv[k];
        const double surrogate = std::abs(uval - cfg.threshold) < cfg.surrogate_window ? height : 0.0;
        const double gs_total = gs[k] + gh[i] * (cfg.v_reset - cfg.beta * uval);
        const double gu = gs_total * surrogate + gh[i] * cfg.beta * (1.0 - sval);
        gx[per_step ? k : i] += gu;
        gh[i] = gu;
      }
    }
  });
}

}  // namespace

void LIFConfig::validate() const {
  if (!(threshold > 0)) throw DomainError("LIFConfig: threshold must be > 0");
  if (!(beta > 0 && beta <= 1)) throw DomainError("LIFConfig: beta must lie in (0, 1]");
  if (time_steps < 1) throw DomainError("LIFConfig: time_steps must be >= 1");
  if (!(surrogate_window > 0)) throw DomainError("LIFConfig: surrogate window must be > 0");
}

std::size_t SpikeTrain::count() const {
  std::size_t n = 0;
  for (auto s : spikes) n += s;
  return n;
}

SpikeTrain SpikeTrain::from_array(const Array& a) {
  if (a.rank() != 2) throw DimensionError("SpikeTrain: expects a [T, M] array");
  SpikeTrain train(a.dim(0), a.dim(1));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != 0.0 && a[i] != 1.0) throw DomainError("SpikeTrain: entries must be 0 or 1");
    train.spikes[i] = a[i] == 1.0 ? 1 : 0;
  }
  return train;
}

Array encode_constant(const Array& x, std::size_t steps) {
  core::Shape shape = x.shape();
  shape.insert(shape.begin(), steps);
  std::vector<double> data;
  data.reserve(x.size() * steps);
  for (std::size_t t = 0; t < steps; ++t) data.insert(data.end(), x.vec().begin(), x.vec().end());
  return Array(std::move(shape), std::move(data));
}

LIFTrace lif_forward(const Array& x, const LIFConfig& cfg) {
  cfg.validate();
  const std::size_t T = cfg.time_steps;
  if (x.rank() < 1 || x.dim(0) != T)
    throw DimensionError("lif_forward: input " + core::shape_str(x.shape()) + " does not have " +
                         std::to_string(T) + " time steps");
  LIFTrace trace{Array(x.shape()), Array(x.shape()), Array(x.shape())};
  run_lif(x.data(), true, T, x.size() / T, cfg, trace.spikes.data(), trace.potential.data(),
          trace.membrane.data());
  return trace;
}

core::Var lif(core::Var x, const LIFConfig& cfg) { return record_lif(x, cfg, true); }

core::Var lif_constant(core::Var x, const LIFConfig& cfg) { return record_lif(x, cfg, false); }

double firing_rate(double x, const LIFConfig& cfg) {
  cfg.validate();
  std::vector<double> s(cfg.time_steps);
  run_lif(&x, false, cfg.time_steps, 1, cfg, s.data(), nullptr, nullptr);
  double n = 0.0;
  for (double v : s) n += v;
  return n / static_cast<double>(cfg.time_steps);
}

}  // namespace spikemba::spiking
