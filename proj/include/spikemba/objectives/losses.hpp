// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "spikemba/core/tape.hpp"
#include "spikemba/spiking/proposals.hpp"

namespace spikemba::objectives {

/// Ground-truth moment over clips [begin, end] (inclusive). The positive clip set is the
/// moment itself, the negative set its complement in [0, N_v).
struct MomentLabel {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::vector<std::size_t> positives() const;
  std::vector<std::size_t> negatives(std::size_t clips) const;
  bool operator==(const MomentLabel&) const = default;
};

struct LossWeights {
  double contrastive = 1.0;     // alpha_c
  double proposal = 1.0;        // alpha_s
  double entropy = 1.0;         // alpha_e
  double temperature = 0.07;    // beta, contrastive
  double entropy_temperature = 0.07;  // beta_e

  void validate() const;
};

enum class ContrastiveForm {
  /// -log(1 - p_ii): the expression exactly as written, which grows with the matched score.
  AsPrinted,
  /// -log(p_ii): the conventional InfoNCE direction.
  InfoNCE,
};

struct ContrastiveOptions {
  ContrastiveForm form = ContrastiveForm::AsPrinted;
  double temperature = 0.07;
  /// Clamp applied to the fraction inside the log; <= 0 disables it, in which case a
  /// diverging log (batch of one) raises ContractError.
  double clamp_eps = 1e-7;
};

/// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
double smooth_l1(double x);

/// Batch contrastive loss between proposal features S[B, D] and moment features T[B, D].
/// Rows are L2-normalized; scores are inner products over the temperature; p_ii is the
/// softmax share of the matched pair in row i. Averaged over rows.
core::Var contrastive_loss(core::Var S, core::Var T, const ContrastiveOptions& opts);

/// The same loss evaluated on a precomputed score matrix (already divided by temperature).
core::Var contrastive_from_logits(core::Var logits, const ContrastiveOptions& opts);

/// Mean over rows of smooth_l1(G_b - S_b) + smooth_l1(G_e - S_e); pred is [P, 2] holding
/// (S_b, S_e) per matched proposal, targets the matching (G_b, G_e).
core::Var saliency_proposal_loss(core::Var pred, const std::vector<std::pair<double, double>>& targets);

/// Loss used when a sample produced no proposals: the full extent [0, clips - 1] scored
/// against the label.
double empty_proposal_penalty(const MomentLabel& label, std::size_t clips);

/// Greedy one-to-one matching: each label, in order of its best available IoU, takes the
/// unmatched proposal with the highest IoU (> 0). Returns (label index, proposal index).
std::vector<std::pair<std::size_t, std::size_t>> match_proposals(
    const std::vector<spiking::MomentProposal>& proposals, const std::vector<MomentLabel>& labels);

/// -sum_m log( sum_{v in pos_m} exp(s_v / beta_e) / sum_{v} exp(s_v / beta_e) ) over the
/// labeled moments m. saliency holds one score per clip. Throws DomainError on an empty
/// positive set.
core::Var entropy_loss(core::Var saliency, const std::vector<MomentLabel>& labels, double beta_e);

}  // namespace spikemba::objectives
