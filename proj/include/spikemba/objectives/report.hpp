// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spikemba/objectives/metrics.hpp"

namespace spikemba::objectives {

struct MetricReport {
  double r1_05 = 0.0;
  double r1_07 = 0.0;
  double map_075 = 0.0;
  double map_avg = 0.0;
  double miou = 0.0;
  double hit1 = 0.0;
  std::size_t queries = 0;
};

/// Scores a set of query results; `saliency` may be empty, in which case hit1 stays 0.
MetricReport evaluate(std::span<const QueryResult> results, std::span<const std::vector<double>> saliency = {});

std::string to_json(const MetricReport& report);

/// metrics.json holding the report keys.
void write_metrics_json(const std::filesystem::path& path, const MetricReport& report);

/// per_query.csv: query_id, pred_b, pred_e, score, best_iou for the top-1 prediction; a
/// query with no predictions writes empty prediction fields and best_iou 0.
void write_per_query_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                         std::span<const QueryResult> results);

}  // namespace spikemba::objectives
