// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "spikemba/model/blocks.hpp"
#include "spikemba/model/config.hpp"
#include "spikemba/objectives/metrics.hpp"
#include "spikemba/spiking/attention.hpp"
#include "spikemba/spiking/proposals.hpp"

namespace spikemba::model {

/// Learnable rows appended to the visual and text streams; one set shared by all layers.
struct RelevantSlots {
  core::Parameter* vis = nullptr;  // [N_r, C]
  core::Parameter* tex = nullptr;  // [N_r, C]
  std::size_t count = 0;
};

struct SlotStreams {
  Var vis;  // [M_v + N_r, C]
  Var tex;  // [M_t + N_r, C]
};

/// [O_vis; R_vis] and [O_tex; R_tex]. With no slots the inputs pass through unchanged.
SlotStreams concat_slots(Var o_vis, Var o_tex, const RelevantSlots& slots);

/// Drops the trailing N_r slot rows.
Var strip_slots(Var tokens, std::size_t slot_count);

/// A decoded moment in clip units: center I_c (clip index scale) and width I_w.
struct Moment {
  double center = 0.0;
  double width = 0.0;
  double score = 0.0;
  spiking::MomentProposal source;
  bool refined = false;

  /// [I_c + 0.5 - I_w / 2, I_c + 0.5 + I_w / 2] clamped to [0, clips].
  objectives::Interval span(std::size_t clips) const;
};

struct ForwardOutput {
  Var saliency;                // [N_v]
  Var hidden;                  // [N_v, C] final visual stream with slots stripped
  Var context;                 // [1, C] mean of the final slot rows (zeros without slots)
  Var query;                   // [N_q, C] projected query tokens
  spiking::SpikeTrain train;   // proposal spike train [T, N_v]
  std::vector<spiking::MomentProposal> proposals;
  std::vector<Moment> moments;  // descending score; filled when refine_all was requested
  std::size_t clips = 0;
};

class SpikeMbaModel {
 public:
  SpikeMbaModel(const ModelConfig& cfg, std::uint64_t seed);

  /// video [N_v, c_in], query [N_q, c_in]. Throws DomainError on an empty video or query.
  /// With refine_all, every proposal is refined into `moments` (inference path).
  ForwardOutput forward(core::Tape& tape, const Array& video, const Array& query, bool training,
                        bool refine_all = false);

  /// Boundary head applied to one proposal: [1, 2] holding the continuous (start, end),
  /// unclamped, as (b+e)/2 + offset + 0.5 -/+ (e-b+1) exp(width_scale) / 2.
  Var refine(const ForwardOutput& out, const spiking::MomentProposal& p) const;

  /// Features entering the contrastive loss: a projection of the hidden-state mean over a
  /// clip interval, and a projection of the query-token mean. Both [1, C].
  Var moment_feature(const ForwardOutput& out, std::size_t begin, std::size_t end) const;
  Var query_feature(const ForwardOutput& out) const;

  const ModelConfig& config() const { return cfg_; }
  core::ParameterStore& params() { return store_; }
  const core::ParameterStore& params() const { return store_; }
  const RelevantSlots& slots() const { return slots_; }
  spiking::SpikingAttention* detector(std::size_t layer) {
    return layer < ssd_.size() ? ssd_[layer].get() : nullptr;
  }

 private:
  ModelConfig cfg_;
  core::ParameterStore store_;
  std::unique_ptr<Linear> in_vis_;
  std::unique_ptr<Linear> in_tex_;
  RelevantSlots slots_;
  std::vector<std::unique_ptr<CMRBlock>> cmr_;
  std::vector<std::unique_ptr<spiking::SpikingAttention>> ssd_;
  std::vector<std::unique_ptr<MRMBlock>> mrm_;
  std::unique_ptr<LayerNorm> norm_out_;
  std::unique_ptr<Linear> saliency_;      // C -> 1
  std::unique_ptr<Linear> saliency_ctx_;  // C -> C, context-conditioned scoring vector
  std::unique_ptr<Linear> head_hidden_;   // 4C -> C
  std::unique_ptr<Linear> head_out_;      // C -> 2, zero-initialized
  std::unique_ptr<Linear> proj_moment_;
  std::unique_ptr<Linear> proj_query_;
};

}  // namespace spikemba::model
