// SPDX-License-Identifier: Apache-2.0
#include <string>

#include "spikemba/core/errors.hpp"
#include "spikemba/ssm/ssm.hpp"

namespace spikemba::ssm {

Array recurrent_scan(const DiscreteSSM& ssm, const Array& x) {
  const std::size_t M = x.rank() == 0 ? 0 : x.dim(0);
  const std::size_t E = x.rank() >= 2 ? x.cols() : 1;
  const std::size_t N = ssm.state;
  if (M != ssm.positions || ssm.A_bar.size() != M * N || ssm.B_bar.size() != M * N ||
      ssm.C.size() != M * N)
    throw DimensionError("recurrent_scan: input has " + std::to_string(M) +
                         " positions, parameters have " + std::to_string(ssm.positions));
  Array y(x.shape());
  std::vector<double> h(E * N, 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    const double* a = ssm.A_bar.data() + m * N;
    const double* b = ssm.B_bar.data() + m * N;
    const double* c = ssm.C.data() + m * N;
    for (std::size_t e = 0; e < E; ++e) {
      double* he = h.data() + e * N;
      const double xv = x[m * E + e];
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        he[n] = a[n] * he[n] + b[n] * xv;
        acc += c[n] * he[n];
      }
      y[m * E + e] = acc;
    }
  }
  return y;
}

ConvKernel conv_kernel(const DiscreteSSM& ssm) {
  if (!ssm.time_invariant())
    throw ContractError("conv_kernel: the convolution form needs position-independent parameters");
  const std::size_t N = ssm.state;
  ConvKernel k;
  k.taps.resize(ssm.positions);
  std::vector<double> power(N, 1.0);  // A_bar^j
  for (std::size_t j = 0; j < ssm.positions; ++j) {
    double acc = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      acc += ssm.C[n] * power[n] * ssm.B_bar[n];
      power[n] *= ssm.A_bar[n];
    }
    k.taps[j] = acc;
  }
  return k;
}

Array conv_scan(const ConvKernel& kernel, const Array& x) {
  const std::size_t M = x.rank() == 0 ? 0 : x.dim(0);
  const std::size_t E = x.rank() >= 2 ? x.cols() : 1;
  if (kernel.taps.size() != M)
    throw DimensionError("conv_scan: kernel length " + std::to_string(kernel.taps.size()) +
                         " vs sequence length " + std::to_string(M));
  Array y(x.shape());
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t j = 0; j <= m; ++j) {
      const double k = kernel.taps[j];
      const double* xr = x.data() + (m - j) * E;
      double* yr = y.data() + m * E;
      for (std::size_t e = 0; e < E; ++e) yr[e] += k * xr[e];
    }
  return y;
}

}  // namespace spikemba::ssm
