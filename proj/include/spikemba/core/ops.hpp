// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "spikemba/core/tape.hpp"

namespace spikemba::core {

// Arrays of rank >= 1 are treated as a stack of rows along their trailing axis where an
// op is row-wise (linear, layer_norm, add_row, ...).

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// x[..., C] + row[C]
Var add_row(Var x, Var row);

Var silu(Var x);
Var sigmoid(Var x);
/// log(1 + exp(x)), evaluated without overflow for large |x|.
Var softplus(Var x);
Var exp(Var x);
/// Natural log; throws DomainError on non-positive input.
Var log(Var x);
Var square(Var x);

/// Scalar (shape [1]) reductions.
Var sum(Var x);
Var mean(Var x);

/// y = x W + b, with x[..., C], W[C, E], optional b[E]. Leading axes are preserved.
Var linear(Var x, Var W, Var b = {});
/// [R, K] x [K, N]
Var matmul(Var a, Var b);
/// [R, K] x [N, K]^T
Var matmul_nt(Var a, Var b);

/// Depthwise causal convolution: y[m, e] = sum_j kernel[j, e] * x[m - j, e], zero history.
/// Requires kernel width k <= M.
Var conv1d(Var x, Var kernel);

/// Forward: 1 where u >= threshold, else 0. Backward: rectangular surrogate
/// 1/(2 window) on |u - threshold| < window, 0 elsewhere.
Var heaviside_ste(Var u, double threshold, double window = 0.5);

/// Normalizes each row to zero mean / unit variance, then applies gamma and beta.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

/// Running statistics for batch_norm. Both parameters are non-trainable buffers.
struct BatchNormState {
  Parameter* running_mean = nullptr;
  Parameter* running_var = nullptr;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization over all rows of x. In training mode uses the batch
/// statistics and updates the running ones; otherwise applies the running statistics.
Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state, bool training);

Var concat_rows(Var a, Var b);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
/// Zero-pads or truncates x[R, C] to `rows` rows.
Var fit_rows(Var x, std::size_t rows);
/// Mean of rows [begin, end) of x[R, C] as a [1, C] array.
Var mean_rows(Var x, std::size_t begin, std::size_t end);
/// Mean over the leading axis: [T, ...] -> [...].
Var mean_leading(Var x);
Var l2_normalize_rows(Var x, double eps = 1e-12);
Var reshape(Var x, Shape shape);

}  // namespace spikemba::core
