// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "spikemba/core/errors.hpp"
#include "spikemba/ssm/ssm.hpp"

namespace sc = spikemba::core;
namespace ss = spikemba::ssm;
using sc::Array;
using spikemba::testing::gradcheck;
using spikemba::testing::random_array;

namespace {

ss::ContinuousSSM random_lti(sc::SplitMix64& rng, std::size_t N) {
  ss::ContinuousSSM sys;
  for (std::size_t n = 0; n < N; ++n) {
    sys.A.push_back(-rng.uniform(0.1, 3.0));
    sys.B.push_back(rng.uniform(-1, 1));
    sys.C.push_back(rng.uniform(-1, 1));
  }
  return sys;
}

}  // namespace

TEST(Zoh, ClosedFormAtLn2) {
  const double A[] = {-1.0}, B[] = {1.0};
  const auto d = ss::zoh_discretize(A, B, std::log(2.0));
  EXPECT_NEAR(d.A_bar[0], 0.5, 1e-12);
  EXPECT_NEAR(d.B_bar[0], 0.5, 1e-12);
}

TEST(Zoh, SmallStepLimit) {
  const double A[] = {-2.0}, B[] = {3.0};
  for (double delta : {1e-3, 1e-5, 1e-7}) {
    const auto d = ss::zoh_discretize(A, B, delta);
    EXPECT_NEAR(d.A_bar[0], 1.0, 3 * delta);
    // first order: B_bar ~ delta * B
    EXPECT_NEAR(d.B_bar[0] / delta, 3.0, 10 * delta);
  }
}

TEST(Zoh, ZeroInputMatrixAndZeroA) {
  const double A[] = {-1.0, 0.0}, B[] = {0.0, 2.0};
  const auto d = ss::zoh_discretize(A, B, 0.25);
  EXPECT_EQ(d.B_bar[0], 0.0);
  EXPECT_DOUBLE_EQ(d.A_bar[1], 1.0);
  EXPECT_DOUBLE_EQ(d.B_bar[1], 0.5);  // delta * B
}

TEST(Zoh, RejectsNonPositiveStep) {
  const double A[] = {-1.0}, B[] = {1.0};
  EXPECT_THROW(ss::zoh_discretize(A, B, 0.0), spikemba::DomainError);
  EXPECT_THROW(ss::zoh_discretize(A, B, -1.0), spikemba::DomainError);
}

TEST(Zoh, ExpAdditivityOfTransition) {
  sc::SplitMix64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const auto sys = random_lti(rng, 6);
    const double d1 = rng.uniform(0.01, 1.0);
    const auto one = ss::zoh_discretize(sys.A, sys.B, d1);
    const auto two = ss::zoh_discretize(sys.A, sys.B, 2 * d1);
    for (std::size_t n = 0; n < 6; ++n) EXPECT_NEAR(one.A_bar[n] * one.A_bar[n], two.A_bar[n], 1e-15);
  }
}

TEST(Zoh, TransitionInUnitInterval) {
  sc::SplitMix64 rng(5);
  const auto sys = random_lti(rng, 8);
  const auto d = ss::zoh_discretize(sys.A, sys.B, 0.3);
  for (double a : d.A_bar) {
    EXPECT_GT(a, 0.0);
    EXPECT_LT(a, 1.0);
  }
}

TEST(ContinuousSSM, RejectsUnstableA) {
  ss::ContinuousSSM sys{{-1.0, 0.5}, {1, 1}, {1, 1}};
  EXPECT_THROW(sys.validate(), spikemba::DomainError);
}

TEST(RecurrentScan, ScalarImpulseResponse) {
  ss::DiscreteSSM s;
  s.positions = 3;
  s.state = 1;
  s.A_bar = {0.5, 0.5, 0.5};
  s.B_bar = {0.5, 0.5, 0.5};
  s.C = {1, 1, 1};
  s.delta = {1, 1, 1};
  const Array y = ss::recurrent_scan(s, Array::vector({1, 0, 0}));
  EXPECT_EQ(y, Array::vector({0.5, 0.25, 0.125}));
  const Array k = Array::vector(ss::conv_kernel(s).taps);
  EXPECT_EQ(ss::conv_scan(ss::conv_kernel(s), Array::vector({1, 0, 0})), k);
  EXPECT_EQ(k, Array::vector({0.5, 0.25, 0.125}));
}

TEST(RecurrentScan, ZeroInputAndLengthMismatch) {
  sc::SplitMix64 rng(2);
  const auto s = ss::DiscreteSSM::from_lti(random_lti(rng, 4), 0.1, 10);
  EXPECT_EQ(ss::recurrent_scan(s, Array({10, 3})), Array({10, 3}));
  EXPECT_THROW(ss::recurrent_scan(s, Array({9, 3})), spikemba::DimensionError);
}

TEST(ConvScan, ZeroKernelAndContract) {
  ss::ConvKernel k{std::vector<double>(5, 0.0)};
  sc::SplitMix64 rng(4);
  EXPECT_EQ(ss::conv_scan(k, random_array({5}, rng)), Array({5}));
  auto s = ss::DiscreteSSM::from_lti(random_lti(rng, 2), 0.1, 5);
  s.A_bar[2] *= 0.5;  // position 1 now differs
  EXPECT_THROW(ss::conv_kernel(s), spikemba::ContractError);
}

TEST(ScanOracle, RecurrenceEqualsConvolution) {
  sc::SplitMix64 rng(2024);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t N = 1 + rng.below(8), E = 1 + rng.below(4), M = 1 + rng.below(64);
    const auto s = ss::DiscreteSSM::from_lti(random_lti(rng, N), rng.uniform(0.01, 1.0), M);
    const Array x = random_array({M, E}, rng);
    const Array a = ss::recurrent_scan(s, x), b = ss::conv_scan(ss::conv_kernel(s), x);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(ScanStability, LongSequenceStaysBounded) {
  sc::SplitMix64 rng(8);
  const std::size_t M = 10000;
  const auto sys = random_lti(rng, 8);
  const auto s = ss::DiscreteSSM::from_lti(sys, 0.05, M);
  const Array y = ss::recurrent_scan(s, random_array({M}, rng, -1.0, 1.0));
  // |h_n| <= |B_bar_n| / (1 - A_bar_n) for |x| <= 1
  double bound = 0.0;
  for (std::size_t n = 0; n < 8; ++n) bound += std::abs(sys.C[n] * s.B_bar[n] / (1.0 - s.A_bar[n]));
  for (double v : y.values()) EXPECT_LE(std::abs(v), bound + 1e-9);
}

TEST(SelectiveScan, ConstantSelectivityMatchesLTI) {
  sc::SplitMix64 rng(17);
  const std::size_t M = 20, E = 3, N = 4;
  const auto sys = random_lti(rng, N);
  const double delta = 0.2;
  Array A({E, N}), B({M, N}), C({M, N});
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t n = 0; n < N; ++n) A.at(e, n) = sys.A[n];
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t n = 0; n < N; ++n) {
      B.at(m, n) = sys.B[n];
      C.at(m, n) = sys.C[n];
    }
  const Array x = random_array({M, E}, rng);
  const Array y = ss::selective_scan(x, Array({M, E}, delta), B, C, A);
  const Array ref = ss::recurrent_scan(ss::DiscreteSSM::from_lti(sys, delta, M), x);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-13);
}

TEST(SelectiveScan, SingleStepByHand) {
  // y = sum_n C_n * B_bar_n * x with B_bar = expm1(dA)/A * B
  const Array A = Array::matrix({{-1.0, -2.0}});
  const Array B = Array::matrix({{0.5, -1.0}}), C = Array::matrix({{2.0, 1.0}});
  const double d = 0.3, x = 1.5;
  const Array y = ss::selective_scan(Array::matrix({{x}}), Array::matrix({{d}}), B, C, A);
  const double expect = 2.0 * std::expm1(-d) / -1.0 * 0.5 * x + 1.0 * std::expm1(-2 * d) / -2.0 * -1.0 * x;
  EXPECT_NEAR(y[0], expect, 1e-15);
}

TEST(SelectiveScan, RejectsNonPositiveDelta) {
  const Array A = Array::matrix({{-1.0}}), B = Array::matrix({{1.0}});
  EXPECT_THROW(ss::selective_scan(Array::matrix({{1.0}}), Array::matrix({{0.0}}), B, B, A), spikemba::DomainError);
}

class SelectiveScanGrad : public ::testing::TestWithParam<int> {};

TEST_P(SelectiveScanGrad, AllInputs) {
  sc::SplitMix64 rng(300 + GetParam());
  const std::size_t M = 6, E = 3, N = 4;
  const Array x = random_array({M, E}, rng), delta = random_array({M, E}, rng, 0.05, 1.0);
  const Array B = random_array({M, N}, rng), C = random_array({M, N}, rng);
  Array A = random_array({E, N}, rng, -2.0, -0.1);
  const auto r = gradcheck(
      [](sc::Tape&, auto& v) { return ss::selective_scan(v[0], v[1], v[2], v[3], v[4]); }, {x, delta, B, C, A});
  EXPECT_LT(r.max_rel, 1e-4);
}

TEST_P(SelectiveScanGrad, NearZeroA) {
  // exercises the series branch of (exp(z) - 1) / z
  sc::SplitMix64 rng(400 + GetParam());
  const std::size_t M = 4, E = 2, N = 3;
  const Array x = random_array({M, E}, rng), delta = random_array({M, E}, rng, 0.05, 0.5);
  const Array B = random_array({M, N}, rng), C = random_array({M, N}, rng);
  const Array A = random_array({E, N}, rng, -1e-6, -1e-7);
  const auto r = gradcheck(
      [](sc::Tape&, auto& v) { return ss::selective_scan(v[0], v[1], v[2], v[3], v[4]); }, {x, delta, B, C, A},
      1e-8);
  EXPECT_LT(r.max_rel, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Random, SelectiveScanGrad, ::testing::Range(0, 5));
