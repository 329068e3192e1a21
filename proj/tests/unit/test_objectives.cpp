// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gradcheck.hpp"
#include "json.hpp"
#include "spikemba/core/errors.hpp"
#include "spikemba/objectives/losses.hpp"
#include "spikemba/objectives/metrics.hpp"
#include "spikemba/objectives/report.hpp"

namespace sc = spikemba::core;
namespace so = spikemba::objectives;
using sc::Array;
using sc::Tape;
using sc::Var;
using spikemba::testing::gradcheck;
using spikemba::testing::random_array;

namespace {

so::QueryResult single(double b, double e, double score, double gb, double ge) {
  return {{{{b, e}, score}}, {{gb, ge}}};
}

double eval_contrastive(const Array& S, const Array& T, const so::ContrastiveOptions& o) {
  Tape t(false);
  return so::contrastive_loss(t.leaf(S), t.leaf(T), o).value()[0];
}

}  // namespace

TEST(SmoothL1, PiecewiseValues) {
  EXPECT_EQ(so::smooth_l1(0.5), 0.125);
  EXPECT_EQ(so::smooth_l1(2.0), 1.5);
  EXPECT_EQ(so::smooth_l1(-2.0), 1.5);
  EXPECT_EQ(so::smooth_l1(0.0), 0.0);
}

TEST(ProposalLoss, PerfectBoundariesAndMean) {
  Tape t;
  Var pred = t.leaf(Array::matrix({{2.0, 5.0}, {1.0, 4.0}}));
  EXPECT_EQ(so::saliency_proposal_loss(pred, {{2.0, 5.0}, {1.0, 4.0}}).value()[0], 0.0);
  // (0.125 + 1.5) for the second row, averaged over two rows
  EXPECT_DOUBLE_EQ(so::saliency_proposal_loss(pred, {{2.0, 5.0}, {1.5, 6.0}}).value()[0], 0.8125);
}

TEST(ProposalLoss, EmptyProposalPenalty) {
  // full extent [0, 9] against [3, 5]: smooth_l1(3) + smooth_l1(-4)
  EXPECT_DOUBLE_EQ(so::empty_proposal_penalty({3, 5}, 10), 2.5 + 3.5);
}

TEST(ProposalMatching, GreedyHighestIoU) {
  std::vector<spikemba::spiking::MomentProposal> ps = {{0, 3, 0.9, 0}, {4, 6, 0.5, 0}, {5, 9, 0.4, 0}};
  std::vector<so::MomentLabel> labels = {{5, 8}, {0, 2}};
  const auto m = so::match_proposals(ps, labels);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0], (std::pair<std::size_t, std::size_t>{0, 2}));
  EXPECT_EQ(m[1], (std::pair<std::size_t, std::size_t>{1, 0}));
}

TEST(Contrastive, SymmetricBatchIsLn2) {
  const Array S = Array::matrix({{1, 0}, {0, 1}});
  const Array T = Array::matrix({{1, 1}, {1, 1}});
  so::ContrastiveOptions o;
  EXPECT_NEAR(eval_contrastive(S, T, o), std::log(2.0), 1e-9);
  o.form = so::ContrastiveForm::InfoNCE;
  EXPECT_NEAR(eval_contrastive(S, T, o), std::log(2.0), 1e-9);
}

TEST(Contrastive, BatchOfOne) {
  const Array S = Array::matrix({{1, 2}}), T = Array::matrix({{3, 1}});
  so::ContrastiveOptions o;
  const double clamped = eval_contrastive(S, T, o);
  EXPECT_TRUE(std::isfinite(clamped));
  EXPECT_NEAR(clamped, -std::log(1e-7), 1e-6);
  o.clamp_eps = 0.0;
  EXPECT_THROW(eval_contrastive(S, T, o), spikemba::ContractError);
}

TEST(Contrastive, AsPrintedGrowsWithMatchedScore) {
  Tape t;
  so::ContrastiveOptions o;
  o.temperature = 1.0;
  double prev = -1.0;
  for (double z = -2.0; z <= 2.0; z += 0.25) {
    Var logits = t.leaf(Array::matrix({{z, 0.3, -0.1}, {0.2, 0.0, 0.5}, {0.1, 0.1, 0.1}}));
    const double l = so::contrastive_from_logits(logits, o).value()[0];
    EXPECT_GT(l, prev);
    prev = l;
  }
}

TEST(Entropy, EmptyNegativeSetIsZero) {
  Tape t;
  Var s = t.leaf(Array::vector({0.3, -1.0, 2.0}));
  EXPECT_EQ(so::entropy_loss(s, {{0, 2}}, 0.07).value()[0], 0.0);
}

TEST(Entropy, UniformScores) {
  Tape t;
  Var s = t.leaf(Array::vector(std::vector<double>(10, 0.4)));
  EXPECT_NEAR(so::entropy_loss(s, {{2, 4}}, 0.07).value()[0], -std::log(3.0 / 10.0), 1e-12);
  EXPECT_NEAR(so::entropy_loss(s, {{2, 4}, {7, 7}}, 0.07).value()[0], -std::log(0.3) - std::log(0.1), 1e-12);
}

TEST(Entropy, RaisingNegativeIncreasesLoss) {
  sc::SplitMix64 rng(3);
  const Array s = random_array({8}, rng);
  Tape t;
  Var sv = t.leaf(s);
  t.backward(so::entropy_loss(sv, {{2, 4}}, 0.5));
  for (std::size_t v : {0, 1, 5, 6, 7}) EXPECT_GT(t.grad(sv)[v], 0.0);
  for (std::size_t v : {2, 3, 4}) EXPECT_LT(t.grad(sv)[v], 0.0);
}

TEST(Entropy, EmptyPositiveSetIsDomainError) {
  Tape t;
  Var s = t.leaf(Array::vector({0.1, 0.2}));
  EXPECT_THROW(so::entropy_loss(s, {{1, 4}}, 0.07), spikemba::DomainError);
}

class LossGrad : public ::testing::TestWithParam<int> {};

TEST_P(LossGrad, Contrastive) {
  sc::SplitMix64 rng(500 + GetParam());
  const Array S = random_array({4, 5}, rng), T = random_array({4, 5}, rng);
  for (auto form : {so::ContrastiveForm::AsPrinted, so::ContrastiveForm::InfoNCE}) {
    so::ContrastiveOptions o;
    o.form = form;
    o.temperature = 0.5;
    const auto r = gradcheck([&](Tape&, auto& v) { return so::contrastive_loss(v[0], v[1], o); }, {S, T});
    EXPECT_LT(r.max_rel, 1e-4);
  }
}

TEST_P(LossGrad, ProposalRegression) {
  sc::SplitMix64 rng(600 + GetParam());
  // keep |G - S| away from the kink at 1
  Array pred({3, 2});
  std::vector<std::pair<double, double>> tg;
  for (std::size_t p = 0; p < 3; ++p) {
    const double gb = rng.uniform(0, 10), ge = gb + rng.uniform(1, 5);
    tg.emplace_back(gb, ge);
    pred[2 * p] = gb + (rng.uniform() < 0.5 ? rng.uniform(-0.8, 0.8) : rng.uniform(1.3, 3.0));
    pred[2 * p + 1] = ge - (rng.uniform() < 0.5 ? rng.uniform(-0.8, 0.8) : rng.uniform(1.3, 3.0));
  }
  const auto r = gradcheck([&](Tape&, auto& v) { return so::saliency_proposal_loss(v[0], tg); }, {pred});
  EXPECT_LT(r.max_rel, 1e-4);
}

TEST_P(LossGrad, Entropy) {
  sc::SplitMix64 rng(700 + GetParam());
  const Array s = random_array({9}, rng);
  const auto r = gradcheck([](Tape&, auto& v) { return so::entropy_loss(v[0], {{2, 4}, {6, 6}}, 0.3); }, {s});
  EXPECT_LT(r.max_rel, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Random, LossGrad, ::testing::Range(0, 5));

TEST(TemporalIoU, Values) {
  EXPECT_DOUBLE_EQ(so::temporal_iou({2, 6}, {4, 8}), 1.0 / 3.0);
  EXPECT_EQ(so::temporal_iou({2, 6}, {2, 6}), 1.0);
  EXPECT_EQ(so::temporal_iou({0, 1}, {3, 4}), 0.0);
  EXPECT_EQ(so::temporal_iou({3, 3}, {3, 3}), 0.0);
}

TEST(TemporalIoU, SymmetricAndOneOnlyWhenIdentical) {
  sc::SplitMix64 rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(0, 10), b = rng.uniform(0, 10);
    so::Interval x{a, a + rng.uniform(0.1, 5)}, y{b, b + rng.uniform(0.1, 5)};
    const double iou = so::temporal_iou(x, y);
    EXPECT_EQ(iou, so::temporal_iou(y, x));
    EXPECT_GE(iou, 0.0);
    EXPECT_LT(iou, 1.0);
  }
}

TEST(Recall, TwoQueries) {
  // one top-1 at IoU 0.8, one miss
  std::vector<so::QueryResult> rs = {single(0, 8, 1.0, 0, 10), single(20, 25, 1.0, 0, 10)};
  EXPECT_DOUBLE_EQ(so::recall_at_1(rs, 0.7), 0.5);
  EXPECT_EQ(so::recall_at_1(rs, 0.9), 0.0);
  rs.push_back({{}, {{1, 2}}});
  EXPECT_DOUBLE_EQ(so::recall_at_1(rs, 0.7), 1.0 / 3.0);
}

TEST(MeanAP, Examples) {
  std::vector<so::QueryResult> one = {single(0, 8, 1.0, 0, 10)};
  const double both[] = {0.5, 0.75};
  EXPECT_EQ(so::mean_ap(one, both), 1.0);
  std::vector<so::QueryResult> none = {{{}, {{0, 1}}}};
  EXPECT_EQ(so::mean_ap(none, both), 0.0);
  // correct prediction ranked second of two
  std::vector<so::QueryResult> second = {{{{{20, 30}, 0.9}, {{0, 10}, 0.1}}, {{0, 10}}}};
  for (double th : {0.5, 0.7, 0.95}) EXPECT_DOUBLE_EQ(so::average_precision(second[0], th), 0.5);
  EXPECT_EQ(so::map_thresholds().size(), 10u);
}

TEST(MeanAP, PerfectPredictionsAtSingleThreshold) {
  std::vector<so::QueryResult> rs;
  for (int q = 0; q < 5; ++q) rs.push_back(single(q, q + 3, 0.5, q, q + 3));
  const double th[] = {0.95};
  EXPECT_EQ(so::mean_ap(rs, th), 1.0);
}

TEST(MeanAP, RankMetricsIgnoreMonotoneRescaling) {
  sc::SplitMix64 rng(10);
  std::vector<so::QueryResult> rs;
  for (int q = 0; q < 30; ++q) {
    so::QueryResult r;
    r.ground_truth = {{rng.uniform(0, 10), 0}};
    r.ground_truth[0].end = r.ground_truth[0].start + rng.uniform(1, 6);
    for (int k = 0; k < 5; ++k) {
      const double s = rng.uniform(0, 12);
      r.predictions.push_back({{s, s + rng.uniform(1, 6)}, rng.normal()});
    }
    rs.push_back(r);
  }
  auto scaled = rs;
  for (auto& r : scaled)
    for (auto& p : r.predictions) p.score = std::exp(3.0 * p.score) + 7.0;
  const auto grid = so::map_thresholds();
  EXPECT_EQ(so::recall_at_1(rs, 0.5), so::recall_at_1(scaled, 0.5));
  EXPECT_EQ(so::mean_ap(rs, grid), so::mean_ap(scaled, grid));
}

TEST(MeanIoU, Values) {
  std::vector<so::QueryResult> perfect = {single(0, 4, 1, 0, 4), single(2, 3, 1, 2, 3)};
  EXPECT_EQ(so::mean_iou(perfect), 1.0);
  std::vector<so::QueryResult> disjoint = {single(0, 1, 1, 3, 4)};
  EXPECT_EQ(so::mean_iou(disjoint), 0.0);
  std::vector<so::QueryResult> mixed = {single(0, 4, 1, 0, 4), single(2, 6, 1, 4, 8)};
  EXPECT_DOUBLE_EQ(so::mean_iou(mixed), 2.0 / 3.0);
}

TEST(Report, JsonKeysAndCsv) {
  std::vector<so::QueryResult> rs = {single(0, 4, 0.7, 0, 4), {{}, {{1, 2}}}};
  const auto rep = so::evaluate(rs);
  const auto j = nlohmann::json::parse(so::to_json(rep));
  for (const char* k : {"r1_05", "r1_07", "map_075", "map_avg", "miou"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_DOUBLE_EQ(j["r1_05"].get<double>(), 0.5);

  const auto dir = std::filesystem::temp_directory_path() / "spikemba_report_test";
  std::filesystem::create_directories(dir);
  const std::vector<std::string> ids = {"q0", "q1"};
  so::write_per_query_csv(dir / "per_query.csv", ids, rs);
  std::ifstream in(dir / "per_query.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "query_id,pred_b,pred_e,score,best_iou\nq0,0,4,0.7,1\nq1,,,,0\n");
  std::filesystem::remove_all(dir);
}
