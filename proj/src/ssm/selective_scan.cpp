// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <new>
#include <string>

#include "spikemba/core/errors.hpp"
#include "spikemba/ssm/ssm.hpp"

namespace spikemba::ssm {
namespace {

struct ScanDims {
  std::size_t M, E, N;
};

ScanDims check_dims(const Array& x, const Array& delta, const Array& B, const Array& C, const Array& A) {
  if (x.rank() != 2 || delta.shape() != x.shape() || B.rank() != 2 || C.shape() != B.shape() ||
      A.rank() != 2 || B.dim(0) != x.dim(0) || A.dim(0) != x.dim(1) || A.dim(1) != B.dim(1))
    throw DimensionError("selective_scan: x " + core::shape_str(x.shape()) + ", delta " +
                         core::shape_str(delta.shape()) + ", B " + core::shape_str(B.shape()) +
                         ", C " + core::shape_str(C.shape()) + ", A " + core::shape_str(A.shape()));
  for (double d : delta.values())
    if (!(d > 0)) throw DomainError("selective_scan: delta must be strictly positive");
  return {x.dim(0), x.dim(1), B.dim(1)};
}

using RowArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Block = Eigen::Map<RowArray>;
using ConstBlock = Eigen::Map<const RowArray>;
using Col = Eigen::Map<const Eigen::ArrayXd>;
using Row = Eigen::Map<const Eigen::Array<double, 1, Eigen::Dynamic>>;

// Discretization of one position for all (e, n): z = delta_e A[e, n], abar = exp(z) and
// phi = expm1(z)/z. For |z| <= 0.1 phi is the Taylor series sum_k z^k / (k+1)!, truncated
// after k = 9 (remainder below 3e-17); above it (exp(z) - 1) / z loses at most ~10 ulps.
struct PositionTerms {
  RowArray z, abar, phi, series;

  PositionTerms(std::size_t E, std::size_t N) : z(E, N), abar(E, N), phi(E, N), series(E, N) {}

  void compute(const double* delta, const ConstBlock& A) {
    z = A.colwise() * Col(delta, A.rows());
    abar = z.exp();
    series = 1.0 / 3628800.0;
    for (double c : {1.0 / 362880.0, 1.0 / 40320.0, 1.0 / 5040.0, 1.0 / 720.0, 1.0 / 120.0, 1.0 / 24.0, 1.0 / 6.0,
                     1.0 / 2.0, 1.0})
      series = series * z + c;
    phi = (z.abs() > 0.1).select((abar - 1.0) / z, series);
  }

  // d phi / dz = (abar - phi) / z, replaced by its cubic series where that cancels.
  RowArray phi_prime() const {
    const RowArray near = 0.5 + z * (1.0 / 3.0 + z * (1.0 / 8.0 + z / 30.0));
    return (z.abs() < 1e-3).select(near, (abar - phi) / z);
  }
};

// Per-position intermediates kept for the reverse pass, each [M, E, N].
// Uninitialized and 64-byte aligned, like Array storage, so Eigen's reductions over the
// cache take the same path on every run.
struct AlignedDelete {
  void operator()(double* p) const { ::operator delete[](p, std::align_val_t{64}); }
};
using Buffer = std::unique_ptr<double[], AlignedDelete>;
Buffer aligned_buffer(std::size_t n) {
  return Buffer(static_cast<double*>(::operator new[](n * sizeof(double), std::align_val_t{64})));
}

struct ScanCache {
  explicit ScanCache(std::size_t size)
      : states(aligned_buffer(size)), abar(aligned_buffer(size)), phi(aligned_buffer(size)) {}
  Buffer states, abar, phi;
};

// Runs the recurrence h_m = abar * h_{m-1} + delta phi B_m x_m, y_m = h_m C_m. Writes y[M, E]
// and, when cache != nullptr, every h, abar and phi.
void scan_forward(const ScanDims& d, const double* x, const double* delta, const double* B,
                  const double* C, const double* A, double* y, ScanCache* cache) {
  const auto [M, E, N] = d;
  const ConstBlock a(A, E, N);
  PositionTerms pt(E, N);
  RowArray h = RowArray::Zero(E, N);
  for (std::size_t m = 0; m < M; ++m) {
    pt.compute(delta + m * E, a);
    const Eigen::ArrayXd u = Col(delta + m * E, E) * Col(x + m * E, E);
    h = pt.abar * h + (pt.phi.colwise() * u).rowwise() * Row(B + m * N, N);
    Eigen::Map<Eigen::VectorXd>(y + m * E, E).noalias() = h.matrix() * Eigen::Map<const Eigen::VectorXd>(C + m * N, N);
    if (cache) {
      Block(cache->states.get() + m * E * N, E, N) = h;
      Block(cache->abar.get() + m * E * N, E, N) = pt.abar;
      Block(cache->phi.get() + m * E * N, E, N) = pt.phi;
    }
  }
}

}  // namespace

Array selective_scan(const Array& x, const Array& delta, const Array& B, const Array& C,
                     const Array& A) {
  const ScanDims d = check_dims(x, delta, B, C, A);
  Array y(x.shape());
  scan_forward(d, x.data(), delta.data(), B.data(), C.data(), A.data(), y.data(), nullptr);
  return y;
}

core::Var selective_scan(core::Var x, core::Var delta, core::Var B, core::Var C, core::Var A) {
  using core::Tape;
  using core::Var;
  const ScanDims d = check_dims(x.value(), delta.value(), B.value(), C.value(), A.value());
  Array y(x.value().shape());
  std::shared_ptr<ScanCache> cache;
  if (x.tape->grad_enabled()) {
    cache = std::make_shared<ScanCache>(d.M * d.E * d.N);
  }
  scan_forward(d, x.value().data(), delta.value().data(), B.value().data(), C.value().data(),
               A.value().data(), y.data(), cache.get());
  return x.tape->record(
      "selective_scan", std::move(y), {x, delta, B, C, A},
      [x, delta, B, C, A, d, cache](Tape& t, Var self) {
        const auto [M, E, N] = d;
        const Array& xv = t.value(x);
        const Array& dv = t.value(delta);
        const Array& bv = t.value(B);
        const Array& cv = t.value(C);
        const Array& av = t.value(A);
        const Array& gy = t.grad(self);
        const double* states = cache->states.get();

        Array gx(xv.shape()), gd(dv.shape()), gb(bv.shape()), gc(cv.shape()), ga(av.shape());
        const ConstBlock a(av.data(), E, N);
        Block ga_m(ga.data(), E, N);
        PositionTerms pt(E, N);
        RowArray gh = RowArray::Zero(E, N);  // dL/dh_m, carried backwards
        RowArray g_abar(E, N), g_f(E, N);
        for (std::size_t mi = M; mi-- > 0;) {
          const std::size_t off = mi * E * N;
          pt.z = a.colwise() * Col(dv.data() + mi * E, E);
          pt.abar = ConstBlock(cache->abar.get() + off, E, N);
          pt.phi = ConstBlock(cache->phi.get() + off, E, N);
          const Col g(gy.data() + mi * E, E), dt(dv.data() + mi * E, E), xm(xv.data() + mi * E, E);
          const Row bm(bv.data() + mi * N, N), cm(cv.data() + mi * N, N);
          const ConstBlock hm(states + mi * E * N, E, N);
          Eigen::Map<Eigen::ArrayXd> gxm(gx.data() + mi * E, E), gdm(gd.data() + mi * E, E);
          Eigen::Map<Eigen::Array<double, 1, Eigen::Dynamic>> gbm(gb.data() + mi * N, N), gcm(gc.data() + mi * N, N);

          gcm = (hm.colwise() * g).colwise().sum();
          gh.matrix().noalias() += g.matrix() * cm.matrix();
          // dL/d(delta phi B x) per (e, n) is gh; split it over its factors
          const RowArray f = pt.phi.colwise() * dt;
          gxm = ((gh * f).rowwise() * bm).rowwise().sum();
          const RowArray g_bbar = gh.colwise() * xm;
          gbm = (g_bbar * f).colwise().sum();
          g_f = g_bbar.rowwise() * bm;
          if (mi > 0)
            g_abar = gh * ConstBlock(states + (mi - 1) * E * N, E, N);
          else
            g_abar.setZero();
          // d(delta phi(delta a))/d delta = abar, d/da = delta^2 phi'
          gdm = (g_abar * pt.abar * a + g_f * pt.abar).rowwise().sum();
          ga_m += (g_abar * pt.abar).colwise() * dt + (g_f * pt.phi_prime()).colwise() * dt.square();
          gh *= pt.abar;
        }
        if (t.needs_grad(x)) t.grad(x) += gx;
        if (t.needs_grad(delta)) t.grad(delta) += gd;
        if (t.needs_grad(B)) t.grad(B) += gb;
        if (t.needs_grad(C)) t.grad(C) += gc;
        if (t.needs_grad(A)) t.grad(A) += ga;
      });
}

}  // namespace spikemba::ssm
