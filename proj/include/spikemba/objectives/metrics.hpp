// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace spikemba::objectives {

/// Half-open continuous interval [start, end) in clip units.
struct Interval {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end > start ? end - start : 0.0; }
};

/// Clips [b, e] (inclusive) cover [b, e + 1) in continuous time.
inline Interval clip_interval(std::size_t b, std::size_t e) {
  return {static_cast<double>(b), static_cast<double>(e) + 1.0};
}

struct ScoredMoment {
  Interval span;
  double score = 0.0;
};

/// |a ∩ b| / |a ∪ b|; 0 when the union is empty.
double temporal_iou(const Interval& a, const Interval& b);

/// Highest IoU of `pred` against any ground-truth interval.
double best_iou(const Interval& pred, std::span<const Interval> gts);

/// Ranked predictions and ground truth for one query.
struct QueryResult {
  std::vector<ScoredMoment> predictions;
  std::vector<Interval> ground_truth;

  /// Highest-scored prediction; earliest wins ties. Requires non-empty predictions.
  const ScoredMoment& top() const;
};

/// Fraction of queries whose top-1 prediction reaches IoU >= threshold with some GT.
double recall_at_1(std::span<const QueryResult> results, double threshold);

/// All-point interpolated AP of one query: predictions in score order, each greedily
/// claims the unmatched GT of highest IoU when that IoU reaches the threshold.
double average_precision(const QueryResult& result, double threshold);

/// Mean over queries of average_precision, then mean over the thresholds.
double mean_ap(std::span<const QueryResult> results, std::span<const double> thresholds);

/// 0.50, 0.55, ..., 0.95.
std::vector<double> map_thresholds();

/// Mean over queries of the top-1 prediction's best IoU; queries without predictions count 0.
double mean_iou(std::span<const QueryResult> results);

/// Fraction of queries whose highest-saliency clip lies inside some GT interval.
double hit_at_1(std::span<const std::vector<double>> saliency, std::span<const QueryResult> results);

}  // namespace spikemba::objectives
