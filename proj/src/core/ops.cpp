// SPDX-License-Identifier: Apache-2.0
#include "spikemba/core/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <string>

#include "spikemba/core/errors.hpp"

namespace spikemba::core {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;
using VecMapC = Eigen::Map<const Eigen::RowVectorXd>;
using VecMap = Eigen::Map<Eigen::RowVectorXd>;

MapC mat(const Array& a) {
  return MapC(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}
Map mat(Array& a) {
  return Map(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return *a.tape;
}

void same_shape(const char* op, Var a, Var b) {
  if (a.tape != b.tape) throw ContractError(std::string(op) + ": operands on different tapes");
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// Elementwise unary op; df(x, y) is the local derivative.
template <class F, class DF>
Var unary(const char* op, Var x, F f, DF df) {
  Tape& t = tape_of(x);
  const Array& xv = x.value();
  Array y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
  return t.record(op, std::move(y), {x}, [x, df](Tape& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Array& xv = t.value(x);
    const Array& yv = t.value(self);
    const Array& g = t.grad(self);
    Array& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) {
  same_shape("add", a, b);
  Array y = a.value();
  y += b.value();
  return tape_of(a).record("add", std::move(y), {a, b}, [a, b](Tape& t, Var self) {
    const Array& g = t.grad(self);
    if (t.needs_grad(a)) t.grad(a) += g;
    if (t.needs_grad(b)) t.grad(b) += g;
  });
}

Var sub(Var a, Var b) {
  same_shape("sub", a, b);
  Array y = a.value();
  const Array& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return tape_of(a).record("sub", std::move(y), {a, b}, [a, b](Tape& t, Var self) {
    const Array& g = t.grad(self);
    if (t.needs_grad(a)) t.grad(a) += g;
    if (t.needs_grad(b)) {
      Array& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  same_shape("mul", a, b);
  Array y = a.value();
  const Array& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return tape_of(a).record("mul", std::move(y), {a, b}, [a, b](Tape& t, Var self) {
    const Array& g = t.grad(self);
    const Array& av = t.value(a);
    const Array& bv = t.value(b);
    if (t.needs_grad(a)) {
      Array& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(b)) {
      Array& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var add_row(Var x, Var row) {
  const Array& xv = x.value();
  const Array& rv = row.value();
  if (rv.size() != xv.cols())
    throw DimensionError("add_row: row of " + std::to_string(rv.size()) + " for " +
                         shape_str(xv.shape()));
  Array y = xv;
  const std::size_t C = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < C; ++c) y[r * C + c] += rv[c];
  return tape_of(x).record("add_row", std::move(y), {x, row}, [x, row](Tape& t, Var self) {
    const Array& g = t.grad(self);
    if (t.needs_grad(x)) t.grad(x) += g;
    if (t.needs_grad(row)) {
      Array& gr = t.grad(row);
      const std::size_t C = gr.size();
      for (std::size_t i = 0; i < g.size(); ++i) gr[i % C] += g[i];
    }
  });
}

Var silu(Var x) {
  return unary(
      "silu", x, [](double v) { return v * sigmoid_scalar(v); },
      [](double v, double) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Var sigmoid(Var x) {
  return unary("sigmoid", x, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var x) {
  return unary(
      "softplus", x,
      [](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) { return sigmoid_scalar(v); });
}

Var exp(Var x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  for (double v : x.value().values())
    if (!(v > 0)) throw DomainError("log of non-positive value");
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(Var x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return tape_of(x).record("sum", Array::scalar(s), {x}, [x](Tape& t, Var self) {
    if (!t.needs_grad(x)) return;
    const double g = t.grad(self)[0];
    for (double& v : t.grad(x).values()) v += g;
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var linear(Var x, Var W, Var b) {
  const Array& xv = x.value();
  const Array& wv = W.value();
  if (wv.rank() != 2 || xv.cols() != wv.dim(0))
    throw DimensionError("linear: input " + shape_str(xv.shape()) + " with weight " +
                         shape_str(wv.shape()));
  if (b.valid() && b.value().size() != wv.dim(1))
    throw DimensionError("linear: bias " + shape_str(b.value().shape()) + " for weight " +
                         shape_str(wv.shape()));
  Shape out_shape = xv.shape();
  out_shape.back() = wv.dim(1);
  Array y(out_shape);
  mat(y).noalias() = mat(xv) * mat(wv);
  if (b.valid()) mat(y).rowwise() += VecMapC(b.value().data(), static_cast<Eigen::Index>(wv.dim(1)));
  return tape_of(x).record("linear", std::move(y), {x, W, b}, [x, W, b](Tape& t, Var self) {
    const Array& g = t.grad(self);
    if (t.needs_grad(x)) mat(t.grad(x)).noalias() += mat(g) * mat(t.value(W)).transpose();
    if (t.needs_grad(W)) mat(t.grad(W)).noalias() += mat(t.value(x)).transpose() * mat(g);
    if (b.valid() && t.needs_grad(b)) {
      Array& gb = t.grad(b);
      VecMap(gb.data(), static_cast<Eigen::Index>(gb.size())) += mat(g).colwise().sum();
    }
  });
}

Var matmul(Var a, Var b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw DimensionError("matmul: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  Array y({av.dim(0), bv.dim(1)});
  mat(y).noalias() = mat(av) * mat(bv);
  return tape_of(a).record("matmul", std::move(y), {a, b}, [a, b](Tape& t, Var self) {
    const Array& g = t.grad(self);
    if (t.needs_grad(a)) mat(t.grad(a)).noalias() += mat(g) * mat(t.value(b)).transpose();
    if (t.needs_grad(b)) mat(t.grad(b)).noalias() += mat(t.value(a)).transpose() * mat(g);
  });
}

Var matmul_nt(Var a, Var b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1))
    throw DimensionError("matmul_nt: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()) + "^T");
  Array y({av.dim(0), bv.dim(0)});
  mat(y).noalias() = mat(av) * mat(bv).transpose();
  return tape_of(a).record("matmul_nt", std::move(y), {a, b}, [a, b](Tape& t, Var self) {
    const Array& g = t.grad(self);
    if (t.needs_grad(a)) mat(t.grad(a)).noalias() += mat(g) * mat(t.value(b));
    if (t.needs_grad(b)) mat(t.grad(b)).noalias() += mat(g).transpose() * mat(t.value(a));
  });
}

Var conv1d(Var x, Var kernel) {
  const Array& xv = x.value();
  const Array& kv = kernel.value();
  if (xv.rank() != 2 || kv.rank() != 2 || kv.dim(1) != xv.dim(1))
    throw DimensionError("conv1d: input " + shape_str(xv.shape()) + " kernel " + shape_str(kv.shape()));
  const std::size_t M = xv.dim(0), E = xv.dim(1), K = kv.dim(0);
  if (K > M)
    throw DimensionError("conv1d: kernel width " + std::to_string(K) + " exceeds length " +
                         std::to_string(M));
  Array y({M, E});
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t j = 0; j <= std::min(m, K - 1); ++j) {
      const double* xr = xv.data() + (m - j) * E;
      const double* kr = kv.data() + j * E;
      double* yr = y.data() + m * E;
      for (std::size_t e = 0; e < E; ++e) yr[e] += kr[e] * xr[e];
    }
  return tape_of(x).record("conv1d", std::move(y), {x, kernel}, [x, kernel](Tape& t, Var self) {
    const Array& g = t.grad(self);
    const Array& xv = t.value(x);
    const Array& kv = t.value(kernel);
    const std::size_t M = xv.dim(0), E = xv.dim(1), K = kv.dim(0);
    Array* gx = t.needs_grad(x) ? &t.grad(x) : nullptr;
    Array* gk = t.needs_grad(kernel) ? &t.grad(kernel) : nullptr;
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t j = 0; j <= std::min(m, K - 1); ++j) {
        const double* gr = g.data() + m * E;
        if (gx) {
          double* gxr = gx->data() + (m - j) * E;
          const double* kr = kv.data() + j * E;
          for (std::size_t e = 0; e < E; ++e) gxr[e] += gr[e] * kr[e];
        }
        if (gk) {
          double* gkr = gk->data() + j * E;
          const double* xr = xv.data() + (m - j) * E;
          for (std::size_t e = 0; e < E; ++e) gkr[e] += gr[e] * xr[e];
        }
      }
  });
}

Var heaviside_ste(Var u, double threshold, double window) {
  if (!(window > 0)) throw DomainError("heaviside_ste: surrogate window must be positive");
  const double height = 1.0 / (2.0 * window);
  return unary(
      "heaviside_ste", u, [threshold](double v) { return v >= threshold ? 1.0 : 0.0; },
      [threshold, window, height](double v, double) {
        return std::abs(v - threshold) < window ? height : 0.0;
      });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Array& xv = x.value();
  const std::size_t R = xv.rows(), C = xv.cols();
  if (gamma.value().size() != C || beta.value().size() != C)
    throw DimensionError("layer_norm: affine params must have " + std::to_string(C) + " entries");
  Array y(xv.shape());
  auto xhat = std::make_shared<Array>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(R);
  const Array& gv = gamma.value();
  const Array& bv = beta.value();
  for (std::size_t r = 0; r < R; ++r) {
    const double* xr = xv.data() + r * C;
    double mu = 0.0;
    for (std::size_t c = 0; c < C; ++c) mu += xr[c];
    mu /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(C);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < C; ++c) {
      const double h = (xr[c] - mu) * is;
      (*xhat)[r * C + c] = h;
      y[r * C + c] = gv[c] * h + bv[c];
    }
  }
  return tape_of(x).record(
      "layer_norm", std::move(y), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std](Tape& t, Var self) {
        const Array& g = t.grad(self);
        const std::size_t C = g.cols(), R = g.rows();
        const Array& gv = t.value(gamma);
        if (t.needs_grad(gamma)) {
          Array& gg = t.grad(gamma);
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % C] += g[i] * (*xhat)[i];
        }
        if (t.needs_grad(beta)) {
          Array& gb = t.grad(beta);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % C] += g[i];
        }
        if (!t.needs_grad(x)) return;
        Array& gx = t.grad(x);
        std::vector<double> dh(C);
        for (std::size_t r = 0; r < R; ++r) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t c = 0; c < C; ++c) {
            dh[c] = g[r * C + c] * gv[c];
            m1 += dh[c];
            m2 += dh[c] * (*xhat)[r * C + c];
          }
          m1 /= static_cast<double>(C);
          m2 /= static_cast<double>(C);
          for (std::size_t c = 0; c < C; ++c)
            gx[r * C + c] += (*inv_std)[r] * (dh[c] - m1 - (*xhat)[r * C + c] * m2);
        }
      });
}

Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state, bool training) {
  const Array& xv = x.value();
  const std::size_t R = xv.rows(), C = xv.cols();
  if (gamma.value().size() != C || beta.value().size() != C || !state.running_mean ||
      !state.running_var || state.running_mean->value.size() != C)
    throw DimensionError("batch_norm: parameters must have " + std::to_string(C) + " channels");
  std::vector<double> mu(C, 0.0), var(C, 0.0);
  if (training) {
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) mu[c] += xv[r * C + c];
    for (auto& m : mu) m /= static_cast<double>(R);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) var[c] += (xv[r * C + c] - mu[c]) * (xv[r * C + c] - mu[c]);
    for (std::size_t c = 0; c < C; ++c) {
      const double biased = var[c] / static_cast<double>(R);
      const double unbiased = R > 1 ? var[c] / static_cast<double>(R - 1) : biased;
      var[c] = biased;
      auto& rm = state.running_mean->value[c];
      auto& rv = state.running_var->value[c];
      rm = (1.0 - state.momentum) * rm + state.momentum * mu[c];
      rv = (1.0 - state.momentum) * rv + state.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = state.running_mean->value[c];
      var[c] = state.running_var->value[c];
    }
  }
  auto inv_std = std::make_shared<std::vector<double>>(C);
  for (std::size_t c = 0; c < C; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var[c] + state.eps);
  auto xhat = std::make_shared<Array>(xv.shape());
  Array y(xv.shape());
  const Array& gv = gamma.value();
  const Array& bv = beta.value();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const std::size_t c = i % C;
    (*xhat)[i] = (xv[i] - mu[c]) * (*inv_std)[c];
    y[i] = gv[c] * (*xhat)[i] + bv[c];
  }
  return tape_of(x).record(
      "batch_norm", std::move(y), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, training](Tape& t, Var self) {
        const Array& g = t.grad(self);
        const std::size_t C = g.cols(), R = g.rows();
        const Array& gv = t.value(gamma);
        if (t.needs_grad(gamma)) {
          Array& gg = t.grad(gamma);
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % C] += g[i] * (*xhat)[i];
        }
        if (t.needs_grad(beta)) {
          Array& gb = t.grad(beta);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % C] += g[i];
        }
        if (!t.needs_grad(x)) return;
        Array& gx = t.grad(x);
        if (!training) {
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * gv[i % C] * (*inv_std)[i % C];
          return;
        }
        std::vector<double> m1(C, 0.0), m2(C, 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double dh = g[i] * gv[i % C];
          m1[i % C] += dh;
          m2[i % C] += dh * (*xhat)[i];
        }
        for (std::size_t c = 0; c < C; ++c) {
          m1[c] /= static_cast<double>(R);
          m2[c] /= static_cast<double>(R);
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
          const std::size_t c = i % C;
          gx[i] += (*inv_std)[c] * (g[i] * gv[c] - m1[c] - (*xhat)[i] * m2[c]);
        }
      });
}

Var concat_rows(Var a, Var b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1))
    throw DimensionError("concat_rows: " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  std::vector<double> data(av.vec().begin(), av.vec().end());
  data.insert(data.end(), bv.vec().begin(), bv.vec().end());
  Array y({av.dim(0) + bv.dim(0), av.dim(1)}, std::move(data));
  return tape_of(a).record("concat_rows", std::move(y), {a, b}, [a, b](Tape& t, Var self) {
    const Array& g = t.grad(self);
    const std::size_t na = t.value(a).size();
    if (t.needs_grad(a)) {
      Array& ga = t.grad(a);
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (t.needs_grad(b)) {
      Array& gb = t.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t R = parts.front().value().rows();
  std::size_t C = 0;
  for (const Var& p : parts) {
    if (p.value().rank() != 2 || p.value().rows() != R)
      throw DimensionError("concat_cols: row count mismatch");
    C += p.value().cols();
  }
  Array y({R, C});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Array& pv = p.value();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) y[r * C + off + c] = pv[r * pv.cols() + c];
    off += pv.cols();
  }
  return tape_of(parts.front())
      .record("concat_cols", std::move(y), parts, [parts, C](Tape& t, Var self) {
        const Array& g = t.grad(self);
        std::size_t off = 0;
        for (const Var& p : parts) {
          const std::size_t pc = t.value(p).cols();
          if (t.needs_grad(p)) {
            Array& gp = t.grad(p);
            for (std::size_t r = 0; r < g.rows(); ++r)
              for (std::size_t c = 0; c < pc; ++c) gp[r * pc + c] += g[r * C + off + c];
          }
          off += pc;
        }
      });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Array& xv = x.value();
  if (xv.rank() != 2 || count == 0 || begin + count > xv.dim(0))
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") of " + shape_str(xv.shape()));
  const std::size_t C = xv.dim(1);
  std::vector<double> data(xv.vec().begin() + static_cast<std::ptrdiff_t>(begin * C),
                           xv.vec().begin() + static_cast<std::ptrdiff_t>((begin + count) * C));
  return tape_of(x).record("slice_rows", Array({count, C}, std::move(data)), {x},
                           [x, begin](Tape& t, Var self) {
                             if (!t.needs_grad(x)) return;
                             const Array& g = t.grad(self);
                             Array& gx = t.grad(x);
                             const std::size_t off = begin * g.cols();
                             for (std::size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
                           });
}

Var fit_rows(Var x, std::size_t rows) {
  const Array& xv = x.value();
  if (xv.rank() != 2 || rows == 0) throw DimensionError("fit_rows: expects a matrix and rows > 0");
  const std::size_t C = xv.dim(1);
  const std::size_t keep = std::min(rows, xv.dim(0));
  Array y({rows, C});
  std::copy_n(xv.data(), keep * C, y.data());
  return tape_of(x).record("fit_rows", std::move(y), {x}, [x, keep](Tape& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Array& g = t.grad(self);
    Array& gx = t.grad(x);
    for (std::size_t i = 0; i < keep * g.cols(); ++i) gx[i] += g[i];
  });
}

Var mean_rows(Var x, std::size_t begin, std::size_t end) {
  const Array& xv = x.value();
  if (xv.rank() != 2 || begin >= end || end > xv.dim(0))
    throw DimensionError("mean_rows: rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") of " + shape_str(xv.shape()));
  const std::size_t C = xv.dim(1);
  const double inv = 1.0 / static_cast<double>(end - begin);
  Array y({1, C});
  for (std::size_t r = begin; r < end; ++r)
    for (std::size_t c = 0; c < C; ++c) y[c] += xv[r * C + c] * inv;
  return tape_of(x).record("mean_rows", std::move(y), {x}, [x, begin, end, inv](Tape& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Array& g = t.grad(self);
    Array& gx = t.grad(x);
    const std::size_t C = g.size();
    for (std::size_t r = begin; r < end; ++r)
      for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += g[c] * inv;
  });
}

Var mean_leading(Var x) {
  const Array& xv = x.value();
  if (xv.rank() < 2) throw DimensionError("mean_leading: rank must be >= 2");
  const std::size_t T = xv.dim(0);
  const std::size_t inner = xv.size() / T;
  Shape out(xv.shape().begin() + 1, xv.shape().end());
  Array y(out);
  const double inv = 1.0 / static_cast<double>(T);
  for (std::size_t s = 0; s < T; ++s)
    for (std::size_t i = 0; i < inner; ++i) y[i] += xv[s * inner + i] * inv;
  return tape_of(x).record("mean_leading", std::move(y), {x}, [x, T, inner, inv](Tape& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Array& g = t.grad(self);
    Array& gx = t.grad(x);
    for (std::size_t s = 0; s < T; ++s)
      for (std::size_t i = 0; i < inner; ++i) gx[s * inner + i] += g[i] * inv;
  });
}

Var l2_normalize_rows(Var x, double eps) {
  const Array& xv = x.value();
  const std::size_t R = xv.rows(), C = xv.cols();
  auto norms = std::make_shared<std::vector<double>>(R);
  Array y(xv.shape());
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += xv[r * C + c] * xv[r * C + c];
    const double n = std::sqrt(s + eps);
    (*norms)[r] = n;
    for (std::size_t c = 0; c < C; ++c) y[r * C + c] = xv[r * C + c] / n;
  }
  return tape_of(x).record("l2_normalize_rows", std::move(y), {x}, [x, norms](Tape& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Array& g = t.grad(self);
    const Array& yv = t.value(self);
    Array& gx = t.grad(x);
    const std::size_t C = g.cols();
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += yv[r * C + c] * g[r * C + c];
      for (std::size_t c = 0; c < C; ++c)
        gx[r * C + c] += (g[r * C + c] - yv[r * C + c] * dot) / (*norms)[r];
    }
  });
}

Var reshape(Var x, Shape shape) {
  Array y = x.value().reshaped(std::move(shape));
  return tape_of(x).record("reshape", std::move(y), {x}, [x](Tape& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Array& g = t.grad(self);
    Array& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

}  // namespace spikemba::core
