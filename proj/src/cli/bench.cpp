// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "spikemba/cli/commands.hpp"
#include "spikemba/core/errors.hpp"
#include "spikemba/core/random.hpp"
#include "spikemba/spiking/lif.hpp"
#include "spikemba/ssm/ssm.hpp"

namespace spikemba::cli {

namespace {

using core::Array;

Array uniform(core::Shape shape, core::SplitMix64& rng, double lo, double hi) {
  Array a(std::move(shape));
  for (double& v : a.values()) v = rng.uniform(lo, hi);
  return a;
}

template <class F>
double best_time(F&& f, std::size_t repeats) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

// Keeps the optimizer from discarding a benchmarked result.
volatile double g_sink = 0.0;

}  // namespace

std::vector<BenchRow> bench_kernel(const std::string& kernel, std::span<const std::size_t> sizes,
                                   std::size_t repeats) {
  if (kernel != "scan" && kernel != "conv" && kernel != "lif")
    throw ContractError("unknown kernel '" + kernel + "' (expected scan, conv or lif)");
  std::vector<BenchRow> rows;
  for (const std::size_t M : sizes) {
    if (M == 0) throw DomainError("benchmark sizes must be positive");
    auto rng = core::SplitMix64::stream(0xbe7c4, M);
    double seconds = 0.0;
    if (kernel == "scan") {
      constexpr std::size_t E = 16, N = 16;
      const Array x = uniform({M, E}, rng, -1, 1), delta = uniform({M, E}, rng, 0.01, 0.2);
      const Array B = uniform({M, N}, rng, -1, 1), C = uniform({M, N}, rng, -1, 1);
      const Array A = uniform({E, N}, rng, -2, -0.1);
      seconds = best_time([&] { g_sink = ssm::selective_scan(x, delta, B, C, A)[0]; }, repeats);
    } else if (kernel == "conv") {
      constexpr std::size_t E = 4, N = 8;
      ssm::ContinuousSSM sys;
      for (std::size_t n = 0; n < N; ++n) {
        sys.A.push_back(rng.uniform(-2, -0.1));
        sys.B.push_back(rng.uniform(-1, 1));
        sys.C.push_back(rng.uniform(-1, 1));
      }
      const auto k = ssm::conv_kernel(ssm::DiscreteSSM::from_lti(sys, 0.05, M));
      const Array x = uniform({M, E}, rng, -1, 1);
      seconds = best_time([&] { g_sink = ssm::conv_scan(k, x)[0]; }, repeats);
    } else {
      spiking::LIFConfig cfg;
      cfg.time_steps = 8;
      const Array x = spiking::encode_constant(uniform({M}, rng, 0, 2), cfg.time_steps);
      seconds = best_time([&] { g_sink = spiking::lif_forward(x, cfg).spikes[0]; }, repeats);
    }
    rows.push_back({M, seconds});
  }
  return rows;
}

double loglog_exponent(std::span<const BenchRow> rows) {
  if (rows.size() < 2) throw DomainError("loglog_exponent: need at least two sizes");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& r : rows) {
    if (!(r.seconds > 0)) throw DomainError("loglog_exponent: non-positive timing");
    const double lx = std::log(static_cast<double>(r.size)), ly = std::log(r.seconds);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = static_cast<double>(rows.size());
  const double den = n * sxx - sx * sx;
  if (den <= 0) throw DomainError("loglog_exponent: sizes must differ");
  return (n * sxy - sx * sy) / den;
}

}  // namespace spikemba::cli
