// SPDX-License-Identifier: Apache-2.0
#include "spikemba/objectives/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "spikemba/core/errors.hpp"

namespace spikemba::objectives {

double temporal_iou(const Interval& a, const Interval& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double best_iou(const Interval& pred, std::span<const Interval> gts) {
  double best = 0.0;
  for (const auto& g : gts) best = std::max(best, temporal_iou(pred, g));
  return best;
}

const ScoredMoment& QueryResult::top() const {
  if (predictions.empty()) throw ContractError("QueryResult::top: no predictions");
  std::size_t best = 0;
  for (std::size_t i = 1; i < predictions.size(); ++i)
    if (predictions[i].score > predictions[best].score) best = i;
  return predictions[best];
}

double recall_at_1(std::span<const QueryResult> results, double threshold) {
  if (results.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : results)
    if (!r.predictions.empty() && best_iou(r.top().span, r.ground_truth) >= threshold) ++hits;
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

double average_precision(const QueryResult& result, double threshold) {
  const auto& gts = result.ground_truth;
  if (gts.empty()) throw ContractError("average_precision: query has no ground-truth moment");
  if (result.predictions.empty()) return 0.0;
  std::vector<std::size_t> order(result.predictions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return result.predictions[a].score > result.predictions[b].score;
  });

  std::vector<bool> claimed(gts.size(), false);
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Interval& p = result.predictions[order[k]].span;
    double best = -1.0;
    std::size_t pick = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (claimed[g]) continue;
      const double iou = temporal_iou(p, gts[g]);
      if (iou >= threshold && iou > best) {
        best = iou;
        pick = g;
      }
    }
    if (pick < gts.size()) {
      claimed[pick] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }
  // precision envelope, then area under the step curve
  for (std::size_t k = precision.size() - 1; k > 0; --k) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < precision.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

double mean_ap(std::span<const QueryResult> results, std::span<const double> thresholds) {
  if (results.empty() || thresholds.empty()) return 0.0;
  double total = 0.0;
  for (double th : thresholds) {
    double sum = 0.0;
    for (const auto& r : results) sum += average_precision(r, th);
    total += sum / static_cast<double>(results.size());
  }
  return total / static_cast<double>(thresholds.size());
}

std::vector<double> map_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(0.5 + 0.05 * i);
  return out;
}

double mean_iou(std::span<const QueryResult> results) {
  if (results.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : results)
    if (!r.predictions.empty()) sum += best_iou(r.top().span, r.ground_truth);
  return sum / static_cast<double>(results.size());
}

double hit_at_1(std::span<const std::vector<double>> saliency, std::span<const QueryResult> results) {
  if (saliency.size() != results.size())
    throw DimensionError("hit_at_1: " + std::to_string(saliency.size()) + " saliency rows for " +
                         std::to_string(results.size()) + " queries");
  if (results.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    const auto& s = saliency[q];
    if (s.empty()) continue;
    const double clip = static_cast<double>(std::max_element(s.begin(), s.end()) - s.begin()) + 0.5;
    for (const auto& g : results[q].ground_truth)
      if (clip >= g.start && clip < g.end) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

}  // namespace spikemba::objectives
