// SPDX-License-Identifier: Apache-2.0
#include "spikemba/objectives/losses.hpp"

#include <algorithm>
#include <memory>
#include <cmath>
#include <limits>
#include <string>

#include "spikemba/core/errors.hpp"
#include "spikemba/core/ops.hpp"
#include "spikemba/objectives/metrics.hpp"

namespace spikemba::objectives {

using core::Array;
using core::Tape;
using core::Var;

std::vector<std::size_t> MomentLabel::positives() const {
  std::vector<std::size_t> out;
  for (std::size_t v = begin; v <= end; ++v) out.push_back(v);
  return out;
}

std::vector<std::size_t> MomentLabel::negatives(std::size_t clips) const {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < clips; ++v)
    if (v < begin || v > end) out.push_back(v);
  return out;
}

void LossWeights::validate() const {
  if (contrastive < 0 || proposal < 0 || entropy < 0)
    throw DomainError("LossWeights: weights must be non-negative");
  if (!(temperature > 0) || !(entropy_temperature > 0))
    throw DomainError("LossWeights: temperatures must be positive");
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

Var contrastive_from_logits(Var logits, const ContrastiveOptions& opts) {
  const Array& z = logits.value();
  if (z.rank() != 2 || z.dim(0) != z.dim(1))
    throw DimensionError("contrastive loss: score matrix must be square, got " + core::shape_str(z.shape()));
  const std::size_t B = z.dim(0);
  // softmax over each row; p_i is the diagonal share
  auto probs = std::make_shared<Array>(z.shape());
  auto clamped = std::make_shared<std::vector<bool>>(B, false);
  double loss = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < B; ++j) mx = std::max(mx, z[i * B + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < B; ++j) denom += std::exp(z[i * B + j] - mx);
    for (std::size_t j = 0; j < B; ++j) (*probs)[i * B + j] = std::exp(z[i * B + j] - mx) / denom;
    double p = (*probs)[i * B + i];
    if (opts.form == ContrastiveForm::AsPrinted) {
      if (opts.clamp_eps > 0) {
        if (p > 1.0 - opts.clamp_eps) {
          p = 1.0 - opts.clamp_eps;
          (*clamped)[i] = true;
        }
      } else if (p >= 1.0) {
        throw ContractError("contrastive loss: matched fraction is 1 (batch of " + std::to_string(B) +
                            "), log(1 - 1) diverges; enable the clamp or use a larger batch");
      }
      loss -= std::log(1.0 - p);
    } else {
      if (opts.clamp_eps > 0 && p < opts.clamp_eps) {
        p = opts.clamp_eps;
        (*clamped)[i] = true;
      }
      loss -= std::log(p);
    }
  }
  loss /= static_cast<double>(B);
  const ContrastiveForm form = opts.form;
  return logits.tape->record(
      "contrastive_loss", Array::scalar(loss), {logits}, [logits, probs, clamped, B, form](Tape& t, Var self) {
        if (!t.needs_grad(logits)) return;
        const double g = t.grad(self)[0] / static_cast<double>(B);
        Array& gz = t.grad(logits);
        for (std::size_t i = 0; i < B; ++i) {
          if ((*clamped)[i]) continue;
          const double p = (*probs)[i * B + i];
          // d p_i / d z_ij = p_i (delta_ij - q_ij)
          const double dl_dp = form == ContrastiveForm::AsPrinted ? 1.0 / (1.0 - p) : -1.0 / p;
          for (std::size_t j = 0; j < B; ++j) {
            const double dp = p * ((i == j ? 1.0 : 0.0) - (*probs)[i * B + j]);
            gz[i * B + j] += g * dl_dp * dp;
          }
        }
      });
}

Var contrastive_loss(Var S, Var T, const ContrastiveOptions& opts) {
  if (S.shape() != T.shape() || S.value().rank() != 2)
    throw DimensionError("contrastive_loss: S " + core::shape_str(S.shape()) + " vs T " +
                         core::shape_str(T.shape()));
  if (!(opts.temperature > 0)) throw DomainError("contrastive_loss: temperature must be positive");
  Var logits = core::scale(core::matmul_nt(core::l2_normalize_rows(S), core::l2_normalize_rows(T)),
                           1.0 / opts.temperature);
  return contrastive_from_logits(logits, opts);
}

Var saliency_proposal_loss(Var pred, const std::vector<std::pair<double, double>>& targets) {
  const Array& pv = pred.value();
  if (pv.rank() != 2 || pv.dim(1) != 2 || pv.dim(0) != targets.size())
    throw DimensionError("saliency_proposal_loss: predictions " + core::shape_str(pv.shape()) + " for " +
                         std::to_string(targets.size()) + " targets");
  const std::size_t P = targets.size();
  double loss = 0.0;
  for (std::size_t p = 0; p < P; ++p)
    loss += smooth_l1(targets[p].first - pv[2 * p]) + smooth_l1(targets[p].second - pv[2 * p + 1]);
  loss /= static_cast<double>(P);
  return pred.tape->record("saliency_proposal_loss", Array::scalar(loss), {pred},
                           [pred, targets, P](Tape& t, Var self) {
                             if (!t.needs_grad(pred)) return;
                             const double g = t.grad(self)[0] / static_cast<double>(P);
                             const Array& pv = t.value(pred);
                             Array& gp = t.grad(pred);
                             auto dsl1 = [](double x) { return std::abs(x) < 1.0 ? x : (x > 0 ? 1.0 : -1.0); };
                             for (std::size_t p = 0; p < P; ++p) {
                               // d/dS of smooth_l1(G - S) = -smooth_l1'(G - S)
                               gp[2 * p] -= g * dsl1(targets[p].first - pv[2 * p]);
                               gp[2 * p + 1] -= g * dsl1(targets[p].second - pv[2 * p + 1]);
                             }
                           });
}

double empty_proposal_penalty(const MomentLabel& label, std::size_t clips) {
  const double full_end = clips == 0 ? 0.0 : static_cast<double>(clips - 1);
  return smooth_l1(static_cast<double>(label.begin)) + smooth_l1(static_cast<double>(label.end) - full_end);
}

std::vector<std::pair<std::size_t, std::size_t>> match_proposals(
    const std::vector<spiking::MomentProposal>& proposals, const std::vector<MomentLabel>& labels) {
  struct Cand {
    double iou;
    std::size_t label, prop;
  };
  std::vector<Cand> cands;
  for (std::size_t l = 0; l < labels.size(); ++l)
    for (std::size_t p = 0; p < proposals.size(); ++p) {
      const double iou = temporal_iou(clip_interval(proposals[p].begin, proposals[p].end),
                                      clip_interval(labels[l].begin, labels[l].end));
      if (iou > 0) cands.push_back({iou, l, p});
    }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.iou > b.iou; });
  std::vector<bool> label_used(labels.size(), false), prop_used(proposals.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& c : cands) {
    if (label_used[c.label] || prop_used[c.prop]) continue;
    label_used[c.label] = prop_used[c.prop] = true;
    out.emplace_back(c.label, c.prop);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Var entropy_loss(Var saliency, const std::vector<MomentLabel>& labels, double beta_e) {
  if (!(beta_e > 0)) throw DomainError("entropy_loss: temperature must be positive");
  const Array& sv = saliency.value();
  const std::size_t N = sv.size();
  for (const auto& l : labels)
    if (l.begin > l.end || l.end >= N)
      throw DomainError("entropy_loss: moment [" + std::to_string(l.begin) + ", " + std::to_string(l.end) +
                        "] has no positive clips inside " + std::to_string(N));
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : sv.values()) mx = std::max(mx, v / beta_e);
  auto w = std::make_shared<std::vector<double>>(N);
  double all = 0.0;
  for (std::size_t v = 0; v < N; ++v) all += ((*w)[v] = std::exp(sv[v] / beta_e - mx));
  double loss = 0.0;
  for (const auto& l : labels) {
    double pos = 0.0;
    for (std::size_t v = l.begin; v <= l.end; ++v) pos += (*w)[v];
    loss -= std::log(pos / all);
  }
  if (labels.empty()) loss = 0.0;
  return saliency.tape->record(
      "entropy_loss", Array::scalar(std::max(loss, 0.0)), {saliency},
      [saliency, labels, beta_e, w, all, N](Tape& t, Var self) {
        if (!t.needs_grad(saliency)) return;
        const double g = t.grad(self)[0] / beta_e;
        Array& gs = t.grad(saliency);
        for (const auto& l : labels) {
          double pos = 0.0;
          for (std::size_t v = l.begin; v <= l.end; ++v) pos += (*w)[v];
          for (std::size_t v = 0; v < N; ++v) {
            const double in_pos = (v >= l.begin && v <= l.end) ? (*w)[v] / pos : 0.0;
            gs[v] += g * ((*w)[v] / all - in_pos);
          }
        }
      });
}

}  // namespace spikemba::objectives
