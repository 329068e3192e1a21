// SPDX-License-Identifier: Apache-2.0
#include "spikemba/objectives/report.hpp"

#include <fstream>
#include <iomanip>
#include "json.hpp"

#include "spikemba/core/errors.hpp"

namespace spikemba::objectives {

MetricReport evaluate(std::span<const QueryResult> results, std::span<const std::vector<double>> saliency) {
  MetricReport r;
  r.queries = results.size();
  r.r1_05 = recall_at_1(results, 0.5);
  r.r1_07 = recall_at_1(results, 0.7);
  const double t075[] = {0.75};
  r.map_075 = mean_ap(results, t075);
  const auto grid = map_thresholds();
  r.map_avg = mean_ap(results, grid);
  r.miou = mean_iou(results);
  if (!saliency.empty()) r.hit1 = hit_at_1(saliency, results);
  return r;
}

std::string to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["r1_05"] = report.r1_05;
  j["r1_07"] = report.r1_07;
  j["map_075"] = report.map_075;
  j["map_avg"] = report.map_avg;
  j["miou"] = report.miou;
  j["hit1"] = report.hit1;
  j["queries"] = report.queries;
  return j.dump(2);
}

void write_metrics_json(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write " + path.string());
  out << to_json(report) << '\n';
}

void write_per_query_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                         std::span<const QueryResult> results) {
  if (ids.size() != results.size())
    throw DimensionError("write_per_query_csv: " + std::to_string(ids.size()) + " ids for " +
                         std::to_string(results.size()) + " results");
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write " + path.string());
  out << "query_id,pred_b,pred_e,score,best_iou\n" << std::setprecision(10);
  for (std::size_t q = 0; q < results.size(); ++q) {
    const auto& r = results[q];
    out << ids[q] << ',';
    if (r.predictions.empty()) {
      out << ",,,0\n";
      continue;
    }
    const auto& top = r.top();
    out << top.span.start << ',' << top.span.end << ',' << top.score << ','
        << best_iou(top.span, r.ground_truth) << '\n';
  }
}

}  // namespace spikemba::objectives
