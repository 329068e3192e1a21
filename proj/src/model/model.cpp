// SPDX-License-Identifier: Apache-2.0
#include "spikemba/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spikemba/core/errors.hpp"

namespace spikemba::model {

void ModelConfig::validate() const {
  if (input_dim == 0 || channels == 0 || expand == 0 || mrm_inner == 0 || state == 0 || layers == 0 ||
      conv_width == 0)
    throw DomainError("ModelConfig: dimensions must be positive");
  if (!(proposal_gain > 0)) throw DomainError("ModelConfig: proposal_gain must be positive");
  lif.validate();
}

SlotStreams concat_slots(Var o_vis, Var o_tex, const RelevantSlots& slots) {
  if (o_vis.value().cols() != o_tex.value().cols())
    throw DimensionError("concat_slots: visual width " + std::to_string(o_vis.value().cols()) +
                         " vs text width " + std::to_string(o_tex.value().cols()));
  if (slots.count == 0) return {o_vis, o_tex};
  core::Tape& t = *o_vis.tape;
  if (slots.vis->value.cols() != o_vis.value().cols())
    throw DimensionError("concat_slots: slot width does not match the token width");
  return {core::concat_rows(o_vis, t.param(*slots.vis)), core::concat_rows(o_tex, t.param(*slots.tex))};
}

Var strip_slots(Var tokens, std::size_t slot_count) {
  const std::size_t rows = tokens.value().dim(0);
  if (slot_count >= rows) throw DimensionError("strip_slots: no token rows left");
  return slot_count == 0 ? tokens : core::slice_rows(tokens, 0, rows - slot_count);
}

objectives::Interval Moment::span(std::size_t clips) const {
  const double hi = static_cast<double>(clips);
  const double mid = center + 0.5;
  return {std::clamp(mid - width / 2, 0.0, hi), std::clamp(mid + width / 2, 0.0, hi)};
}

namespace {

// (offset, width_scale) -> continuous (start, end) around proposal [b, e].
Var decode_bounds(Var head, std::size_t b, std::size_t e) {
  using core::Tape;
  const Array& h = head.value();
  const double mid = (static_cast<double>(b) + static_cast<double>(e)) / 2 + 0.5 + h[0];
  const double width = static_cast<double>(e - b + 1) * std::exp(h[1]);
  return head.tape->record("decode_bounds", Array({1, 2}, {mid - width / 2, mid + width / 2}), {head},
                           [head, width](Tape& t, Var self) {
                             if (!t.needs_grad(head)) return;
                             const Array& g = t.grad(self);
                             Array& gh = t.grad(head);
                             gh[0] += g[0] + g[1];
                             gh[1] += (g[1] - g[0]) * width / 2;
                           });
}

}  // namespace

SpikeMbaModel::SpikeMbaModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  core::SplitMix64 rng(seed);
  const std::size_t C = cfg_.channels;
  in_vis_ = std::make_unique<Linear>(store_, "input.vis", cfg_.input_dim, C, rng);
  in_tex_ = std::make_unique<Linear>(store_, "input.tex", cfg_.input_dim, C, rng);
  slots_.count = cfg_.slots;
  if (cfg_.slots > 0) {
    auto init = [&] {
      Array r({cfg_.slots, C});
      for (double& v : r.values()) v = rng.normal() * 0.02;
      return r;
    };
    slots_.vis = &store_.add("slots.vis", init());
    slots_.tex = &store_.add("slots.tex", init());
  }
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    cmr_.push_back(std::make_unique<CMRBlock>(store_, p + ".cmr", cfg_, rng));
    if (cfg_.use_ssd) ssd_.push_back(std::make_unique<spiking::SpikingAttention>(store_, p + ".ssd", C, C, rng));
    mrm_.push_back(std::make_unique<MRMBlock>(store_, p + ".mrm", cfg_, rng));
  }
  norm_out_ = std::make_unique<LayerNorm>(store_, "head.norm", C);
  saliency_ = std::make_unique<Linear>(store_, "head.saliency", C, 1, rng);
  saliency_ctx_ = std::make_unique<Linear>(store_, "head.saliency_ctx", C, C, rng);
  head_hidden_ = std::make_unique<Linear>(store_, "head.boundary.hidden", 4 * C, C, rng);
  head_out_ = std::make_unique<Linear>(store_, "head.boundary.out", C, 2, rng, Init::Zero);
  proj_moment_ = std::make_unique<Linear>(store_, "contrast.moment", C, C, rng);
  proj_query_ = std::make_unique<Linear>(store_, "contrast.query", C, C, rng);
}

ForwardOutput SpikeMbaModel::forward(core::Tape& tape, const Array& video, const Array& query, bool training,
                                     bool refine_all) {
  if (video.empty() || video.rank() != 2) throw DomainError("forward: empty video");
  if (query.empty() || query.rank() != 2) throw DomainError("forward: empty query");
  if (video.cols() != cfg_.input_dim || query.cols() != cfg_.input_dim)
    throw DimensionError("forward: features must have " + std::to_string(cfg_.input_dim) + " channels, got " +
                         core::shape_str(video.shape()) + " and " + core::shape_str(query.shape()));
  const std::size_t Nv = video.dim(0);
  const std::size_t C = cfg_.channels;

  ForwardOutput out;
  out.clips = Nv;
  Var o_vis = core::add((*in_vis_)(tape.constant(video)), tape.constant(sinusoidal_positions(Nv, C)));
  out.query = (*in_tex_)(tape.constant(query));
  const SlotStreams streams = concat_slots(o_vis, core::fit_rows(out.query, Nv), slots_);

  Var x = streams.vis;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    x = cmr_[l]->forward(x, streams.tex);
    Var s = cfg_.use_ssd ? ssd_[l]->forward(x, cfg_.lif, training).rate : x;
    x = mrm_[l]->forward(x, s);
  }
  Var h = (*norm_out_)(x);
  out.hidden = strip_slots(h, slots_.count);
  out.context = slots_.count > 0 ? core::mean_rows(h, Nv, Nv + slots_.count) : tape.constant(Array({1, C}));

  Var ctx_vec = (*saliency_ctx_)(out.context);
  out.saliency = core::reshape(core::add((*saliency_)(out.hidden), core::matmul_nt(out.hidden, ctx_vec)), {Nv});

  const auto sal = out.saliency.value().values();
  if (cfg_.use_ssd) {
    out.train = spiking::saliency_spikes(sal, cfg_.lif, cfg_.proposal_gain);
    out.proposals = spiking::decode_proposals(out.train, sal);
  } else {
    out.train = spiking::SpikeTrain(cfg_.lif.time_steps, Nv);
    const std::size_t k = static_cast<std::size_t>(std::max_element(sal.begin(), sal.end()) - sal.begin());
    out.proposals.push_back({k, k, sal[k], 0});
  }

  if (refine_all) {
    for (const auto& p : out.proposals) {
      const Array& se = refine(out, p).value();
      out.moments.push_back({(se[0] + se[1]) / 2 - 0.5, se[1] - se[0], p.score, p, true});
    }
    if (out.moments.empty()) {
      const std::size_t k = static_cast<std::size_t>(std::max_element(sal.begin(), sal.end()) - sal.begin());
      out.moments.push_back({static_cast<double>(k), 1.0, sal[k], {k, k, sal[k], 0}, false});
    }
    std::stable_sort(out.moments.begin(), out.moments.end(),
                     [](const Moment& a, const Moment& b) { return a.score > b.score; });
  }
  return out;
}

Var SpikeMbaModel::refine(const ForwardOutput& out, const spiking::MomentProposal& p) const {
  if (p.begin > p.end || p.end >= out.clips)
    throw DomainError("refine: proposal [" + std::to_string(p.begin) + ", " + std::to_string(p.end) +
                      "] outside " + std::to_string(out.clips) + " clips");
  Var feat = core::concat_cols({core::mean_rows(out.hidden, p.begin, p.end + 1), core::slice_rows(out.hidden, p.begin, 1),
                                core::slice_rows(out.hidden, p.end, 1), out.context});
  Var head = (*head_out_)(core::silu((*head_hidden_)(feat)));
  return decode_bounds(head, p.begin, p.end);
}

Var SpikeMbaModel::moment_feature(const ForwardOutput& out, std::size_t begin, std::size_t end) const {
  return (*proj_moment_)(core::mean_rows(out.hidden, begin, end + 1));
}

Var SpikeMbaModel::query_feature(const ForwardOutput& out) const {
  return (*proj_query_)(core::mean_rows(out.query, 0, out.query.value().dim(0)));
}

}  // namespace spikemba::model
