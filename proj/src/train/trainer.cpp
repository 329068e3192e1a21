// SPDX-License-Identifier: Apache-2.0
#include "spikemba/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "spikemba/core/ops.hpp"
#include "spikemba/core/random.hpp"
#include "spikemba/train/adam.hpp"

namespace spikemba::train {

namespace ops = core;
using core::Array;
using core::Var;
using objectives::MomentLabel;

BatchLoss batch_loss(core::Tape& tape, model::SpikeMbaModel& model, std::span<const data::GroundingSample* const> batch,
                     const RunConfig& cfg, bool training) {
  if (batch.empty()) throw ContractError("batch_loss: empty batch");
  Var S, T, per_sample;
  double sum_s = 0.0, sum_e = 0.0;
  for (const data::GroundingSample* sample : batch) {
    const auto out = model.forward(tape, sample->video, sample->query, training);
    const auto& labels = sample->moments;
    const auto matches = objectives::match_proposals(out.proposals, labels);

    // L_s: refined boundaries of matched proposals plus penalties for unmatched labels.
    std::vector<bool> matched(labels.size(), false);
    Var pred;
    std::vector<std::pair<double, double>> targets;
    for (const auto& [li, pi] : matches) {
      matched[li] = true;
      Var row = model.refine(out, out.proposals[pi]);
      pred = pred.valid() ? ops::concat_rows(pred, row) : row;
      targets.emplace_back(static_cast<double>(labels[li].begin), static_cast<double>(labels[li].end) + 1.0);
    }
    double penalty = 0.0;
    for (std::size_t l = 0; l < labels.size(); ++l)
      if (!matched[l]) penalty += objectives::empty_proposal_penalty(labels[l], out.clips);
    const double n_labels = static_cast<double>(labels.size());
    Var l_s = tape.constant(Array::scalar(penalty / n_labels));
    if (pred.valid())
      l_s = ops::add(l_s, ops::scale(objectives::saliency_proposal_loss(pred, targets),
                                     static_cast<double>(targets.size()) / n_labels));

    Var l_e = objectives::entropy_loss(out.saliency, labels, cfg.weights.entropy_temperature);
    sum_s += l_s.value()[0];
    sum_e += l_e.value()[0];
    Var term = ops::add(ops::scale(l_s, cfg.weights.proposal), ops::scale(l_e, cfg.weights.entropy));
    per_sample = per_sample.valid() ? ops::add(per_sample, term) : term;

    std::size_t fb = labels[0].begin, fe = labels[0].end;
    for (const auto& [li, pi] : matches)
      if (li == 0) fb = out.proposals[pi].begin, fe = out.proposals[pi].end;
    Var s_row = model.moment_feature(out, fb, fe);
    Var t_row = model.query_feature(out);
    S = S.valid() ? ops::concat_rows(S, s_row) : s_row;
    T = T.valid() ? ops::concat_rows(T, t_row) : t_row;
  }
  const double B = static_cast<double>(batch.size());
  Var l_con = objectives::contrastive_loss(S, T, cfg.contrastive);
  Var total = ops::add(ops::scale(l_con, cfg.weights.contrastive), ops::scale(per_sample, 1.0 / B));
  return {total, {l_con.value()[0], sum_s / B, sum_e / B, total.value()[0]}};
}

std::size_t evaluation_threads() {
  if (const char* env = std::getenv("SPIKEMBA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Evaluation evaluate_model(model::SpikeMbaModel& model, std::span<const data::GroundingSample> samples,
                          std::size_t threads) {
  Evaluation ev;
  ev.results.resize(samples.size());
  ev.saliency.resize(samples.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      core::Tape tape(false);
      const auto& s = samples[i];
      const auto out = model.forward(tape, s.video, s.query, /*training=*/false, /*refine_all=*/true);
      auto& r = ev.results[i];
      for (const auto& m : out.moments) r.predictions.push_back({m.span(out.clips), m.score});
      for (const auto& g : s.moments) r.ground_truth.push_back(objectives::clip_interval(g.begin, g.end));
      const auto sal = out.saliency.value().values();
      ev.saliency[i].assign(sal.begin(), sal.end());
    }
  };
  const std::size_t workers = std::min(threads == 0 ? evaluation_threads() : threads, std::max<std::size_t>(samples.size(), 1));
  if (workers <= 1) {
    run(0, samples.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (samples.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk, e = std::min(samples.size(), b + chunk);
      if (b < e) pool.emplace_back(run, b, e);
    }
    for (auto& t : pool) t.join();
  }
  ev.report = objectives::evaluate(ev.results, ev.saliency);
  return ev;
}

namespace {

std::vector<Array> snapshot(const core::ParameterStore& store) {
  std::vector<Array> values;
  for (const auto& p : store.all()) values.push_back(p.value);
  return values;
}

void restore(core::ParameterStore& store, const std::vector<Array>& values) {
  std::size_t i = 0;
  for (auto& p : store.all()) p.value = values[i++];
}

bool finite_grads(const core::ParameterStore& store) {
  for (const auto& p : store.all())
    for (double g : p.grad.values())
      if (!std::isfinite(g)) return false;
  return true;
}

}  // namespace

TrainOutcome train_model(model::SpikeMbaModel& model, const RunConfig& cfg, std::span<const data::GroundingSample> train,
                         std::span<const data::GroundingSample> val, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train.empty()) throw ContractError("train_model: empty training set");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  Adam adam(model.params(), cfg.adam);
  TrainOutcome outcome;
  std::vector<Array> best = snapshot(model.params());
  double best_r1 = -1.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = core::SplitMix64::stream(cfg.seed ^ 0x5eedba7c4e5ULL, epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    LossParts sum;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size, ++batches) {
      std::vector<const data::GroundingSample*> batch;
      for (std::size_t k = b0; k < std::min(order.size(), b0 + cfg.batch_size); ++k) batch.push_back(&train[order[k]]);
      auto abort = [&](const std::string& why) {
        std::vector<std::string> ids;
        for (const auto* s : batch) ids.push_back(s->sample_id);
        throw TrainingAborted("epoch " + std::to_string(epoch) + " batch " + std::to_string(batches) + ": " + why,
                              epoch, batches, std::move(ids));
      };

      model.params().zero_grad();
      try {
        core::Tape tape;
        const BatchLoss loss = batch_loss(tape, model, batch, cfg);
        tape.backward(loss.total);
        tape.accumulate_param_grads();
        sum.con += loss.parts.con;
        sum.s += loss.parts.s;
        sum.e += loss.parts.e;
        sum.all += loss.parts.all;
      } catch (const NumericalError& e) {
        abort(e.what());
      }
      if (!finite_grads(model.params())) abort("non-finite gradient");
      clip_grad_norm(model.params(), cfg.max_grad_norm);
      adam.step();
    }

    EpochLog log;
    log.epoch = epoch;
    const double nb = static_cast<double>(batches);
    log.loss = {sum.con / nb, sum.s / nb, sum.e / nb, sum.all / nb};
    const objectives::MetricReport report = val.empty() ? objectives::MetricReport{} : evaluate_model(model, val).report;
    log.val_r1_05 = report.r1_05;
    log.val_miou = report.miou;
    log.seconds = elapsed();
    outcome.epochs.push_back(log);
    if (on_epoch) on_epoch(log);

    if (report.r1_05 > best_r1) {
      best_r1 = report.r1_05;
      best = snapshot(model.params());
      outcome.best_epoch = epoch;
      outcome.best_val = report;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      outcome.early_stopped = true;
      break;
    }
    // Stop once another epoch as long as this one would overrun the budget.
    const double epoch_seconds = log.seconds - (epoch == 0 ? 0.0 : outcome.epochs[epoch - 1].seconds);
    if (cfg.time_budget_s > 0 && log.seconds + epoch_seconds > cfg.time_budget_s) {
      outcome.budget_exhausted = epoch + 1 < cfg.epochs;
      break;
    }
  }
  restore(model.params(), best);
  return outcome;
}

std::string epoch_json(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["L_con"] = log.loss.con;
  j["L_s"] = log.loss.s;
  j["L_e"] = log.loss.e;
  j["L_all"] = log.loss.all;
  j["val_r1_05"] = log.val_r1_05;
  j["val_miou"] = log.val_miou;
  j["seconds"] = log.seconds;
  return j.dump();
}

}  // namespace spikemba::train
