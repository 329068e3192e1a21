// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "spikemba/data/dataset.hpp"
#include "spikemba/objectives/report.hpp"
#include "spikemba/train/run_config.hpp"

namespace spikemba::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kNumerical = 3 };

/// Parses argv (argv[0] is the program name) and runs one subcommand:
/// gen, train, eval, ablate or bench. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Ablation ---------------------------------------------------------------------------

struct AblationRow {
  std::string variant;  // "full", "no_ssd", "no_slots" or "T=<steps>"
  train::RunConfig config;
  objectives::MetricReport val;
  std::size_t epochs = 0;
  double seconds = 0.0;
};

/// Trains one model per variant from the same seed and data. `what` is "ssd" (full vs
/// no_ssd), "slots" (full vs no_slots) or "timesteps" (one run per entry of grid).
/// Throws ContractError on an unknown `what` or an empty timestep grid.
std::vector<AblationRow> run_ablation(const std::string& what, std::span<const std::size_t> grid,
                                      const train::RunConfig& base, std::span<const data::GroundingSample> train,
                                      std::span<const data::GroundingSample> val);

void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows);

// Benchmarks -------------------------------------------------------------------------

struct BenchRow {
  std::size_t size = 0;
  double seconds = 0.0;  // best of the repeats
};

/// Times one kernel at each sequence length M:
///   scan  selective scan, 16 channels, state 16
///   conv  direct causal convolution, 4 channels
///   lif   LIF layer over 8 steps
/// Throws ContractError on an unknown kernel.
std::vector<BenchRow> bench_kernel(const std::string& kernel, std::span<const std::size_t> sizes,
                                   std::size_t repeats = 5);

/// Least-squares slope of log(seconds) against log(size).
double loglog_exponent(std::span<const BenchRow> rows);

}  // namespace spikemba::cli
