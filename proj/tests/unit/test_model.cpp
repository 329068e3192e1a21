// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "spikemba/core/errors.hpp"
#include "spikemba/model/checkpoint.hpp"
#include "spikemba/model/model.hpp"

namespace sc = spikemba::core;
namespace sm = spikemba::model;
using sc::Array;
using spikemba::testing::gradcheck;
using spikemba::testing::random_array;

namespace {

sm::ModelConfig small_config() {
  sm::ModelConfig c;
  c.input_dim = 6;
  c.channels = 8;
  c.expand = 12;
  c.mrm_inner = 10;
  c.state = 4;
  c.slots = 2;
  c.layers = 2;
  return c;
}

// Replaces every zero-initialized weight with small noise so gradients flow through all
// paths, as they do after the first optimizer step.
void perturb(sc::ParameterStore& store, std::uint64_t seed, double scale = 0.1) {
  sc::SplitMix64 rng(seed);
  for (auto& p : store.all()) {
    if (!p.trainable) continue;
    for (double& v : p.value.values())
      if (v == 0.0) v = rng.uniform(-scale, scale);
  }
}

double weighted(const Array& a, std::uint64_t seed) {
  sc::SplitMix64 rng(seed);
  double s = 0.0;
  for (double v : a.values()) s += v * rng.uniform(0.5, 1.5);
  return s;
}

sc::Var weighted(sc::Var x, std::uint64_t seed) {
  Array w(x.shape());
  sc::SplitMix64 rng(seed);
  for (double& v : w.values()) v = rng.uniform(0.5, 1.5);
  return sc::sum(sc::mul(x, x.tape->constant(std::move(w))));
}

}  // namespace

TEST(Slots, NoSlotsPassThrough) {
  sc::Tape t;
  sc::SplitMix64 rng(1);
  const sc::Var a = t.leaf(random_array({5, 3}, rng)), b = t.leaf(random_array({2, 3}, rng));
  const auto s = sm::concat_slots(a, b, {});
  EXPECT_EQ(s.vis.id, a.id);
  EXPECT_EQ(s.tex.id, b.id);
}

TEST(Slots, AppendedVerbatimAndStripped) {
  sc::ParameterStore store;
  sc::SplitMix64 rng(2);
  sm::RelevantSlots slots{&store.add("rv", random_array({4, 3}, rng)), &store.add("rt", random_array({4, 3}, rng)), 4};
  sc::Tape t;
  const Array ov = random_array({8, 3}, rng), ot = random_array({8, 3}, rng);
  const auto s = sm::concat_slots(t.leaf(ov), t.leaf(ot), slots);
  ASSERT_EQ(s.vis.shape(), (sc::Shape{12, 3}));
  ASSERT_EQ(s.tex.shape(), (sc::Shape{12, 3}));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(s.vis.value().at(8 + r, c), slots.vis->value.at(r, c));
      EXPECT_EQ(s.tex.value().at(8 + r, c), slots.tex->value.at(r, c));
    }
  EXPECT_EQ(sm::strip_slots(s.vis, 4).value(), ov);
  EXPECT_EQ(sm::strip_slots(s.tex, 4).value(), ot);
}

TEST(Slots, ChannelMismatchThrows) {
  sc::Tape t;
  EXPECT_THROW(sm::concat_slots(t.leaf(Array({2, 3})), t.leaf(Array({2, 4})), {}), spikemba::DimensionError);
  EXPECT_THROW(sm::strip_slots(t.leaf(Array({2, 3})), 2), spikemba::DimensionError);
}

TEST(CMRBlock, ZeroFinalLinearWithoutResidualIsZero) {
  auto cfg = small_config();
  cfg.cmr_residual = false;
  sc::ParameterStore store;
  sc::SplitMix64 rng(3);
  sm::CMRBlock block(store, "cmr", cfg, rng);
  sc::Tape t;
  const Array x = random_array({7, cfg.channels}, rng);
  const sc::Var y = block.forward(t.leaf(x), t.leaf(random_array({7, cfg.channels}, rng)));
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(y.value(), Array(x.shape()));
}

TEST(CMRBlock, IdentityAtInitWithResidual) {
  const auto cfg = small_config();
  sc::ParameterStore store;
  sc::SplitMix64 rng(4);
  sm::CMRBlock block(store, "cmr", cfg, rng);
  sc::Tape t;
  const Array x = random_array({5, cfg.channels}, rng);
  EXPECT_EQ(block.forward(t.leaf(x), t.leaf(random_array({5, cfg.channels}, rng))).value(), x);
}

TEST(CMRBlock, LengthMismatchThrows) {
  const auto cfg = small_config();
  sc::ParameterStore store;
  sc::SplitMix64 rng(5);
  sm::CMRBlock block(store, "cmr", cfg, rng);
  sc::Tape t;
  EXPECT_THROW(block.forward(t.leaf(Array({5, cfg.channels})), t.leaf(Array({4, cfg.channels}))),
               spikemba::DimensionError);
}

TEST(CMRBlock, GradientMatchesFiniteDifferences) {
  const auto cfg = small_config();
  sc::ParameterStore store;
  sc::SplitMix64 rng(6);
  sm::CMRBlock block(store, "cmr", cfg, rng);
  perturb(store, 60);
  const auto r = gradcheck([&](sc::Tape&, auto& v) { return block.forward(v[0], v[1]); },
                           {random_array({5, cfg.channels}, rng), random_array({5, cfg.channels}, rng)});
  EXPECT_LT(r.max_rel, 1e-5);
}

TEST(CMRBlock, SlotRowGradientMatchesFiniteDifferences) {
  const auto cfg = small_config();
  sc::ParameterStore store;
  sc::SplitMix64 rng(7);
  sm::CMRBlock block(store, "cmr", cfg, rng);
  perturb(store, 70, 1.0);
  sm::RelevantSlots slots{&store.add("rv", random_array({2, cfg.channels}, rng)),
                          &store.add("rt", random_array({2, cfg.channels}, rng)), 2};
  const Array ov = random_array({4, cfg.channels}, rng), ot = random_array({4, cfg.channels}, rng);
  // loss reads only the slot positions of the block output
  auto loss = [&](sc::Tape& t) {
    const auto s = sm::concat_slots(t.constant(ov), t.constant(ot), slots);
    return weighted(sc::slice_rows(block.forward(s.vis, s.tex), 4, 2), 71);
  };
  store.zero_grad();
  {
    sc::Tape t;
    t.backward(loss(t));
    t.accumulate_param_grads();
  }
  for (sc::Parameter* p : {slots.vis, slots.tex}) {
    double num2 = 0, diff2 = 0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double x0 = p->value[i], h = 1e-5;
      p->value[i] = x0 + h;
      sc::Tape tp(false);
      const double fp = loss(tp).value()[0];
      p->value[i] = x0 - h;
      sc::Tape tm(false);
      const double fm = loss(tm).value()[0];
      p->value[i] = x0;
      const double n = (fp - fm) / (2 * h);
      num2 += n * n;
      diff2 += (n - p->grad[i]) * (n - p->grad[i]);
    }
    EXPECT_GT(std::sqrt(num2), 1e-3) << p->name;
    EXPECT_LT(std::sqrt(diff2 / num2), 1e-5) << p->name;
  }
}

TEST(MRMBlock, ClosedGateIsPureResidual) {
  const auto cfg = small_config();
  sc::ParameterStore store;
  sc::SplitMix64 rng(8);
  sm::MRMBlock block(store, "mrm", cfg, rng);
  perturb(store, 80);
  // constant rows normalize to beta = 0, so z = in_z's bias = 0 and SiLU(z) = 0
  for (auto& p : store.all())
    if (p.name == "mrm.in_z.b" || p.name == "mrm.norm_s.beta" || p.name == "mrm.out.b") p.value.fill(0.0);
  sc::Tape t;
  const Array x = random_array({6, cfg.channels}, rng);
  const sc::Var y = block.forward(t.leaf(x), t.leaf(Array({6, cfg.channels}, 0.5)));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y.value()[i], x[i], 1e-15);
}

TEST(MRMBlock, ResidualPathIsLive) {
  const auto cfg = small_config();
  sc::ParameterStore s1, s2;
  sc::SplitMix64 r1(9), r2(9);
  sm::MRMBlock with(s1, "mrm", cfg, r1, true), without(s2, "mrm", cfg, r2, false);
  perturb(s1, 90);
  perturb(s2, 90);
  sc::SplitMix64 rng(10);
  const Array x = random_array({6, cfg.channels}, rng), s = random_array({6, cfg.channels}, rng);
  sc::Tape t;
  const Array a = with.forward(t.leaf(x), t.leaf(s)).value(), b = without.forward(t.leaf(x), t.leaf(s)).value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(a[i] - b[i], x[i], 1e-12);
}

TEST(MRMBlock, GradientMatchesFiniteDifferencesAndShapes) {
  const auto cfg = small_config();
  sc::ParameterStore store;
  sc::SplitMix64 rng(11);
  sm::MRMBlock block(store, "mrm", cfg, rng);
  perturb(store, 110);
  const auto r = gradcheck([&](sc::Tape&, auto& v) { return block.forward(v[0], v[1]); },
                           {random_array({5, cfg.channels}, rng), random_array({5, cfg.channels}, rng)});
  EXPECT_LT(r.max_rel, 1e-5);
  sc::Tape t;
  EXPECT_THROW(block.forward(t.leaf(Array({5, cfg.channels})), t.leaf(Array({4, cfg.channels}))),
               spikemba::DimensionError);
}

TEST(Model, SaliencyLengthMatchesClips) {
  sm::SpikeMbaModel model(small_config(), 12);
  sc::SplitMix64 rng(13);
  for (std::size_t nv : {1, 2, 9, 23})
    for (std::size_t nq : {1, 5, 30}) {
      sc::Tape t(false);
      const auto out = model.forward(t, random_array({nv, 6}, rng), random_array({nq, 6}, rng), false, true);
      EXPECT_EQ(out.saliency.shape(), (sc::Shape{nv}));
      EXPECT_EQ(out.hidden.shape(), (sc::Shape{nv, 8}));
      EXPECT_FALSE(out.moments.empty());
      for (const auto& m : out.moments) {
        const auto span = m.span(nv);
        EXPECT_GE(span.start, 0.0);
        EXPECT_LE(span.end, static_cast<double>(nv));
      }
    }
}

TEST(Model, RejectsEmptyOrMisshapenInputs) {
  sm::SpikeMbaModel model(small_config(), 1);
  sc::Tape t;
  EXPECT_THROW(model.forward(t, Array(), Array({2, 6}), false), spikemba::DomainError);
  EXPECT_THROW(model.forward(t, Array({3, 6}), Array(), false), spikemba::DomainError);
  EXPECT_THROW(model.forward(t, Array({3, 5}), Array({2, 5}), false), spikemba::DimensionError);
}

TEST(Model, DeterministicRegressionFixture) {
  sc::SplitMix64 rng(14);
  const Array video = random_array({6, 6}, rng), query = random_array({3, 6}, rng);
  sm::SpikeMbaModel a(small_config(), 15), b(small_config(), 15);
  sc::Tape ta(false), tb(false);
  const Array sa = a.forward(ta, video, query, false).saliency.value();
  EXPECT_EQ(sa, b.forward(tb, video, query, false).saliency.value());
  // frozen from the first run; a change here means initialization or the forward pass changed
  EXPECT_NEAR(sa[0], 0.58302140357918963, 1e-12);
  EXPECT_NEAR(sa[3], -0.2461422983471051, 1e-12);
  EXPECT_NEAR(weighted(sa, 1), 2.8073252802637061, 1e-12);
}

TEST(Model, InitialRefinementReproducesProposal) {
  sm::SpikeMbaModel model(small_config(), 16);
  sc::SplitMix64 rng(17);
  sc::Tape t(false);
  const auto out = model.forward(t, random_array({10, 6}, rng), random_array({4, 6}, rng), false);
  const spikemba::spiking::MomentProposal p{2, 5, 0.0, 0};
  const Array se = model.refine(out, p).value();
  EXPECT_NEAR(se[0], 2.0, 1e-12);
  EXPECT_NEAR(se[1], 6.0, 1e-12);
  EXPECT_THROW(model.refine(out, {5, 10, 0.0, 0}), spikemba::DomainError);
}

TEST(Model, RefinementGradientMatchesFiniteDifferences) {
  sm::SpikeMbaModel model(small_config(), 18);
  perturb(model.params(), 180, 0.3);
  sc::SplitMix64 rng(19);
  const Array video = random_array({7, 6}, rng), query = random_array({3, 6}, rng);
  sc::Parameter& head = *model.params().find("head.boundary.out.w");
  auto loss = [&](sc::Tape& t) {
    const auto out = model.forward(t, video, query, false);
    return weighted(model.refine(out, {1, 4, 0.0, 0}), 5);
  };
  model.params().zero_grad();
  {
    sc::Tape t;
    t.backward(loss(t));
    t.accumulate_param_grads();
  }
  double num2 = 0, diff2 = 0;
  for (std::size_t i = 0; i < head.value.size(); ++i) {
    const double x0 = head.value[i], h = 1e-6;
    head.value[i] = x0 + h;
    sc::Tape tp(false);
    const double fp = loss(tp).value()[0];
    head.value[i] = x0 - h;
    sc::Tape tm(false);
    const double fm = loss(tm).value()[0];
    head.value[i] = x0;
    const double n = (fp - fm) / (2 * h);
    num2 += n * n;
    diff2 += (n - head.grad[i]) * (n - head.grad[i]);
  }
  EXPECT_LT(std::sqrt(diff2 / num2), 1e-6);
}

TEST(Model, SilentDetectorFallsBackToTopClip) {
  auto cfg = small_config();
  cfg.lif.threshold = 1e9;
  sm::SpikeMbaModel model(cfg, 20);
  sc::SplitMix64 rng(21);
  sc::Tape t(false);
  const auto out = model.forward(t, random_array({9, 6}, rng), random_array({2, 6}, rng), false, true);
  EXPECT_TRUE(out.proposals.empty());
  ASSERT_EQ(out.moments.size(), 1u);
  const auto sal = out.saliency.value().values();
  const auto k = static_cast<std::size_t>(std::max_element(sal.begin(), sal.end()) - sal.begin());
  EXPECT_FALSE(out.moments[0].refined);
  EXPECT_EQ(out.moments[0].span(9).start, static_cast<double>(k));
  EXPECT_EQ(out.moments[0].span(9).end, static_cast<double>(k + 1));
}

TEST(Model, WithoutDetectorProposesTopClip) {
  auto cfg = small_config();
  cfg.use_ssd = false;
  sm::SpikeMbaModel model(cfg, 22);
  EXPECT_EQ(model.detector(0), nullptr);
  sc::SplitMix64 rng(23);
  sc::Tape t(false);
  const auto out = model.forward(t, random_array({9, 6}, rng), random_array({2, 6}, rng), false, true);
  ASSERT_EQ(out.proposals.size(), 1u);
  EXPECT_EQ(out.proposals[0].begin, out.proposals[0].end);
  EXPECT_TRUE(out.moments[0].refined);
}

TEST(Model, GradientsReachEveryComponent) {
  sm::SpikeMbaModel model(small_config(), 24);
  perturb(model.params(), 240);
  sc::SplitMix64 rng(25);
  sc::Tape t;
  const auto out = model.forward(t, random_array({12, 6}, rng, -2, 2), random_array({4, 6}, rng, -2, 2), true);
  sc::Var loss = sc::add(weighted(out.saliency, 3), weighted(model.refine(out, {3, 7, 0.0, 0}), 4));
  loss = sc::add(loss, weighted(sc::mul(model.moment_feature(out, 3, 7), model.query_feature(out)), 6));
  model.params().zero_grad();
  t.backward(loss);
  t.accumulate_param_grads();
  auto norm = [&](const std::string& name) {
    const sc::Parameter* p = model.params().find(name);
    EXPECT_NE(p, nullptr) << name;
    double s = 0;
    for (double g : p->grad.values()) s += g * g;
    return std::sqrt(s);
  };
  for (const char* name :
       {"input.vis.w", "input.tex.w", "slots.vis", "slots.tex", "layer0.cmr.vis.ssm.a_log",
        "layer0.cmr.tex.ssm.dt_bias", "layer0.mrm.ssm.a_log", "layer0.ssd.wq", "layer0.ssd.wk", "layer0.ssd.wv",
        "head.saliency.w", "head.boundary.out.w", "contrast.query.w"})
    EXPECT_GT(norm(name), 0.0) << name;
}

TEST(Model, FiniteForLargeInputs) {
  sm::SpikeMbaModel model(small_config(), 26);
  sc::SplitMix64 rng(27);
  for (int rep = 0; rep < 10; ++rep) {
    sc::Tape t;
    const auto out = model.forward(t, random_array({15, 6}, rng, -10, 10), random_array({5, 6}, rng, -10, 10),
                                   rep % 2 == 0, true);
    for (double v : out.hidden.value().values()) ASSERT_TRUE(std::isfinite(v));
    for (const auto& m : out.moments) ASSERT_TRUE(std::isfinite(m.center) && std::isfinite(m.width));
  }
}

TEST(Model, SampleOrderDoesNotLeak) {
  sm::SpikeMbaModel model(small_config(), 28);
  sc::SplitMix64 rng(29);
  std::vector<std::pair<Array, Array>> batch;
  for (std::size_t i = 0; i < 4; ++i) batch.emplace_back(random_array({5 + i, 6}, rng), random_array({2 + i, 6}, rng));
  auto run = [&](const std::vector<std::size_t>& order) {
    std::vector<Array> sal(batch.size());
    sc::Tape t(false);
    for (std::size_t i : order) sal[i] = model.forward(t, batch[i].first, batch[i].second, false).saliency.value();
    return sal;
  };
  EXPECT_EQ(run({0, 1, 2, 3}), run({3, 1, 0, 2}));
}

TEST(Checkpoint, RoundTripRestoresOutputs) {
  const auto dir = std::filesystem::temp_directory_path() / "spikemba_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "checkpoint.bin";
  sm::SpikeMbaModel model(small_config(), 30);
  perturb(model.params(), 300);
  sm::save_checkpoint(path, model);
  ASSERT_TRUE(std::filesystem::exists(sm::manifest_path(path)));
  const auto loaded = sm::load_checkpoint(path);
  ASSERT_EQ(loaded->params().all().size(), model.params().all().size());
  for (std::size_t i = 0; i < model.params().all().size(); ++i)
    EXPECT_EQ(loaded->params().all()[i].value, model.params().all()[i].value);
  sc::SplitMix64 rng(31);
  const Array v = random_array({6, 6}, rng), q = random_array({2, 6}, rng);
  sc::Tape ta(false), tb(false);
  EXPECT_EQ(model.forward(ta, v, q, false).saliency.value(), loaded->forward(tb, v, q, false).saliency.value());

  std::ifstream is(path, std::ios::binary);
  char head[12];
  is.read(head, 12);
  EXPECT_EQ(std::string(head, 8), "SPKMBACK");
  EXPECT_EQ(head[8], 1);
  EXPECT_EQ(head[9] | head[10] | head[11], 0);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, MissingAndCorruptFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "spikemba_ckpt_bad";
  std::filesystem::create_directories(dir);
  EXPECT_THROW(sm::load_checkpoint(dir / "absent.bin"), spikemba::ContractError);
  const auto path = dir / "c.bin";
  sm::SpikeMbaModel model(small_config(), 32);
  sm::save_checkpoint(path, model);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
  EXPECT_THROW(sm::load_checkpoint(path), spikemba::ParseError);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  EXPECT_THROW(sm::load_checkpoint(path), spikemba::ParseError);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ConfigJsonRoundTrip) {
  auto cfg = small_config();
  cfg.use_ssd = false;
  cfg.lif.time_steps = 4;
  cfg.proposal_gain = 3.5;
  const auto back = sm::config_from_json(nlohmann::json::parse(sm::config_to_json(cfg).dump()));
  EXPECT_EQ(sm::config_to_json(back), sm::config_to_json(cfg));
  EXPECT_THROW(sm::config_from_json(nlohmann::json{{"chanels", 3}}), spikemba::ParseError);
  EXPECT_THROW(sm::config_from_json(nlohmann::json{{"channels", -3}}), spikemba::ParseError);
}
