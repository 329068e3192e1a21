// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spikemba/core/errors.hpp"
#include "spikemba/data/dataset.hpp"
#include "spikemba/model/model.hpp"
#include "spikemba/objectives/report.hpp"
#include "spikemba/train/run_config.hpp"

namespace spikemba::train {

struct LossParts {
  double con = 0.0;
  double s = 0.0;
  double e = 0.0;
  double all = 0.0;
};

struct BatchLoss {
  core::Var total;
  LossParts parts;
};

/// L_all = alpha_c L_con + mean_i (alpha_s L_s,i + alpha_e L_e,i) over one batch.
///
/// L_con pairs, per sample, the moment feature of the proposal matched to the first label
/// (the label interval itself when nothing matched) with the query feature. L_s,i averages
/// over labels: matched labels score the refined boundaries against (G_b, G_e + 1), the
/// rest contribute the constant empty-proposal penalty.
BatchLoss batch_loss(core::Tape& tape, model::SpikeMbaModel& model, std::span<const data::GroundingSample* const> batch,
                     const RunConfig& cfg, bool training = true);

struct Evaluation {
  std::vector<objectives::QueryResult> results;
  std::vector<std::vector<double>> saliency;
  objectives::MetricReport report;
};

/// Predictions are the refined moments in score order. Samples are split across at most
/// `threads` workers (0 reads SPIKEMBA_THREADS, defaulting to the hardware concurrency);
/// each worker uses its own grad-free tape, and the model is only read.
Evaluation evaluate_model(model::SpikeMbaModel& model, std::span<const data::GroundingSample> samples,
                          std::size_t threads = 0);

/// Worker count from SPIKEMBA_THREADS, else the hardware concurrency; at least 1.
std::size_t evaluation_threads();

/// Raised when a batch produces a non-finite value.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, std::size_t epoch, std::size_t batch, std::vector<std::string> sample_ids)
      : NumericalError(what), epoch_(epoch), batch_(batch), ids_(std::move(sample_ids)) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }
  const std::vector<std::string>& sample_ids() const { return ids_; }

 private:
  std::size_t epoch_, batch_;
  std::vector<std::string> ids_;
};

struct EpochLog {
  std::size_t epoch = 0;
  LossParts loss;  // means over the epoch's batches
  double val_r1_05 = 0.0;
  double val_miou = 0.0;
  double seconds = 0.0;  // wall clock since training started
};

struct TrainOutcome {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  objectives::MetricReport best_val;
  bool early_stopped = false;
  bool budget_exhausted = false;
};

/// Adam over shuffled mini-batches, one tape per batch. After every epoch the model is
/// scored on `val`; the parameters of the best epoch by R1@0.5 (ties go to the earlier
/// epoch) are restored before returning. `on_epoch` sees each log entry as it is produced.
TrainOutcome train_model(model::SpikeMbaModel& model, const RunConfig& cfg, std::span<const data::GroundingSample> train,
                         std::span<const data::GroundingSample> val,
                         const std::function<void(const EpochLog&)>& on_epoch = {});

/// The log line written to train_log.jsonl.
std::string epoch_json(const EpochLog& log);

}  // namespace spikemba::train
