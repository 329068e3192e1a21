// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <string>

#include "spikemba/core/errors.hpp"
#include "spikemba/ssm/ssm.hpp"

namespace spikemba::ssm {

void ContinuousSSM::validate() const {
  if (A.empty()) throw DimensionError("ContinuousSSM: state size must be >= 1");
  if (B.size() != A.size() || C.size() != A.size())
    throw DimensionError("ContinuousSSM: A, B, C must all have length " + std::to_string(A.size()));
  for (double a : A)
    if (!(a < 0)) throw DomainError("ContinuousSSM: diagonal of A must be strictly negative");
}

double zoh_input_gain(double a, double delta) {
  const double z = a * delta;
  if (std::abs(z) < 1e-12) return delta * (1.0 + 0.5 * z);
  return std::expm1(z) / a;
}

DiscretePair zoh_discretize(std::span<const double> A, std::span<const double> B, double delta) {
  if (!(delta > 0)) throw DomainError("zoh_discretize: timescale must be positive");
  if (A.size() != B.size()) throw DimensionError("zoh_discretize: A and B lengths differ");
  DiscretePair out;
  out.A_bar.resize(A.size());
  out.B_bar.resize(A.size());
  for (std::size_t n = 0; n < A.size(); ++n) {
    out.A_bar[n] = std::exp(delta * A[n]);
    out.B_bar[n] = zoh_input_gain(A[n], delta) * B[n];
  }
  return out;
}

bool DiscreteSSM::time_invariant() const {
  for (std::size_t m = 1; m < positions; ++m)
    for (std::size_t n = 0; n < state; ++n) {
      const std::size_t i = m * state + n;
      if (A_bar[i] != A_bar[n] || B_bar[i] != B_bar[n] || C[i] != C[n]) return false;
    }
  return true;
}

DiscreteSSM DiscreteSSM::from_lti(const ContinuousSSM& sys, double delta, std::size_t positions) {
  sys.validate();
  if (positions == 0) throw DimensionError("DiscreteSSM: positions must be >= 1");
  const auto d = zoh_discretize(sys.A, sys.B, delta);
  DiscreteSSM out;
  out.positions = positions;
  out.state = sys.state_size();
  for (std::size_t m = 0; m < positions; ++m) {
    out.A_bar.insert(out.A_bar.end(), d.A_bar.begin(), d.A_bar.end());
    out.B_bar.insert(out.B_bar.end(), d.B_bar.begin(), d.B_bar.end());
    out.C.insert(out.C.end(), sys.C.begin(), sys.C.end());
  }
  out.delta.assign(positions, delta);
  return out;
}

}  // namespace spikemba::ssm
