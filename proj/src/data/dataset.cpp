// SPDX-License-Identifier: Apache-2.0
#include "spikemba/data/dataset.hpp"

#include <zlib.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "spikemba/core/errors.hpp"

namespace spikemba::data {

namespace {

using nlohmann::json;

bool gzipped(const std::filesystem::path& path) { return path.extension() == ".gz"; }

json matrix_json(const Array& a) {
  json rows = json::array();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < a.cols(); ++c) row.push_back(a.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Array matrix_from(const json& j, const char* field) {
  if (!j.is_array() || j.empty()) throw DomainError(std::string("'") + field + "' must be a non-empty array of rows");
  const std::size_t rows = j.size();
  if (!j[0].is_array() || j[0].empty()) throw DomainError(std::string("'") + field + "' rows must be non-empty arrays");
  const std::size_t cols = j[0].size();
  Array a({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const json& row = j[r];
    if (!row.is_array() || row.size() != cols)
      throw DomainError(std::string("'") + field + "' row " + std::to_string(r) + " has the wrong length");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw DomainError(std::string("'") + field + "' holds a non-number");
      a.at(r, c) = row[c].get<double>();
    }
  }
  return a;
}

std::string read_all(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ContractError("dataset not found: " + path.string());
  if (!gzipped(path)) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ContractError("cannot open dataset: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw ContractError("cannot open dataset: " + path.string());
  std::string out;
  char buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
  int err = Z_OK;
  const char* msg = gzerror(f, &err);
  const std::string reason = msg ? msg : "";
  gzclose(f);
  if (n < 0 || (err != Z_OK && err != Z_STREAM_END)) throw ParseError("gzip: " + reason + " in " + path.string(), 0);
  return out;
}

}  // namespace

void GroundingSample::validate() const {
  const std::string where = "sample '" + sample_id + "': ";
  if (video.rank() != 2 || query.rank() != 2) throw DomainError(where + "video and query must be matrices");
  if (video.cols() != query.cols()) throw DomainError(where + "video and query feature widths differ");
  if (clip_saliency.size() != clips())
    throw DomainError(where + "clip_saliency has " + std::to_string(clip_saliency.size()) + " entries for " +
                      std::to_string(clips()) + " clips");
  for (double s : clip_saliency)
    if (!(s >= 0.0 && s <= 1.0)) throw DomainError(where + "clip_saliency outside [0, 1]");
  if (moments.empty()) throw DomainError(where + "no labeled moments");
  for (const auto& m : moments)
    if (m.begin > m.end || m.end >= clips())
      throw DomainError(where + "moment [" + std::to_string(m.begin) + ", " + std::to_string(m.end) +
                        "] outside " + std::to_string(clips()) + " clips");
  if (!video.all_finite() || !query.all_finite()) throw DomainError(where + "non-finite feature");
}

std::string to_json_line(const GroundingSample& s) {
  nlohmann::ordered_json j;
  j["sample_id"] = s.sample_id;
  j["video"] = matrix_json(s.video);
  j["query"] = matrix_json(s.query);
  j["moments"] = nlohmann::ordered_json::array();
  for (const auto& m : s.moments) j["moments"].push_back({{"b", m.begin}, {"e", m.end}});
  j["clip_saliency"] = s.clip_saliency;
  return j.dump();
}

GroundingSample from_json_line(const std::string& line, std::size_t line_number) {
  GroundingSample s;
  try {
    const json j = json::parse(line);
    if (!j.is_object()) throw DomainError("expected a JSON object");
    for (const char* key : {"sample_id", "video", "query", "moments", "clip_saliency"})
      if (!j.contains(key)) throw DomainError(std::string("missing '") + key + "'");
    s.sample_id = j.at("sample_id").get<std::string>();
    s.video = matrix_from(j.at("video"), "video");
    s.query = matrix_from(j.at("query"), "query");
    for (const auto& m : j.at("moments"))
      s.moments.push_back({m.at("b").get<std::size_t>(), m.at("e").get<std::size_t>()});
    s.clip_saliency = j.at("clip_saliency").get<std::vector<double>>();
    s.validate();
  } catch (const json::exception& e) {
    throw ParseError("dataset line " + std::to_string(line_number) + ": " + e.what(), line_number);
  } catch (const DomainError& e) {
    throw ParseError("dataset line " + std::to_string(line_number) + ": " + e.what(), line_number);
  }
  return s;
}

void write_dataset(const std::vector<GroundingSample>& samples, const std::filesystem::path& path) {
  std::string text;
  for (const auto& s : samples) {
    text += to_json_line(s);
    text += '\n';
  }
  if (gzipped(path)) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw ContractError("cannot write dataset: " + path.string());
    const bool ok = text.empty() || gzwrite(f, text.data(), static_cast<unsigned>(text.size())) > 0;
    if (gzclose(f) != Z_OK || !ok) throw ContractError("gzip write failed: " + path.string());
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("cannot write dataset: " + path.string());
  os << text;
  if (!os) throw ContractError("write failed: " + path.string());
}

std::vector<GroundingSample> read_dataset(const std::filesystem::path& path) {
  const std::string text = read_all(path);
  std::vector<GroundingSample> out;
  std::size_t line_number = 0, pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t end = nl == std::string::npos ? text.size() : nl;
    ++line_number;
    std::string line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) out.push_back(from_json_line(line, line_number));
    pos = end + 1;
  }
  return out;
}

}  // namespace spikemba::data
