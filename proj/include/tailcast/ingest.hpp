/*
 * Copyright 2026 The Tailcast Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Metric frames: loading, missing-value policy, feature selection,
// min-max normalization and rolling windows.
//
// Timestamps are held as epoch minutes. On disk they are epoch seconds and
// must be minute aligned.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "tailcast/error.hpp"

namespace tailcast {

enum class MetricCategory { kErrorLike, kUtilizationLike };

inline std::string_view category_name(MetricCategory c) {
  return c == MetricCategory::kErrorLike ? "error_like" : "utilization_like";
}

inline MetricCategory parse_category(std::string_view s) {
  if (s == "error_like") return MetricCategory::kErrorLike;
  if (s == "utilization_like") return MetricCategory::kUtilizationLike;
  fail(ErrorCode::kInvalidConfig, "unknown metric category '" + std::string(s) + "'");
}

struct MetricColumn {
  std::string name;
  MetricCategory category = MetricCategory::kUtilizationLike;
  bool is_qos = false;

  bool operator==(const MetricColumn&) const = default;
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

// Row-major matrix of metric values on a minute grid. Missing cells are NaN
// until handle_missing() runs. Rows dropped by handle_missing leave gaps in
// the grid; windowing skips any window that spans a gap.
class MetricFrame {
 public:
  MetricFrame() = default;
  MetricFrame(std::vector<std::int64_t> timestamps, std::vector<MetricColumn> metrics, std::vector<double> values)
      : timestamps_(std::move(timestamps)), metrics_(std::move(metrics)), values_(std::move(values)) {
    require(values_.size() == timestamps_.size() * metrics_.size(), ErrorCode::kShapeMismatch,
            "frame values do not match rows x columns");
    for (std::size_t r = 1; r < timestamps_.size(); ++r) {
      require(timestamps_[r] > timestamps_[r - 1], ErrorCode::kNonUniformGrid, "timestamps must strictly increase");
    }
    std::set<std::string> names;
    for (const auto& m : metrics_) {
      require(names.insert(m.name).second, ErrorCode::kInvalidConfig, "duplicate metric name '" + m.name + "'");
    }
  }

  std::size_t rows() const { return timestamps_.size(); }
  std::size_t cols() const { return metrics_.size(); }
  bool empty() const { return timestamps_.empty(); }

  const std::vector<std::int64_t>& timestamps() const { return timestamps_; }
  const std::vector<MetricColumn>& metrics() const { return metrics_; }
  const std::vector<double>& values() const { return values_; }

  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  const double* row_data(std::size_t r) const { return values_.data() + r * cols(); }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows());
    for (std::size_t r = 0; r < rows(); ++r) out[r] = at(r, c);
    return out;
  }

  std::optional<std::size_t> column_index(std::string_view name) const {
    for (std::size_t c = 0; c < metrics_.size(); ++c) {
      if (metrics_[c].name == name) return c;
    }
    return std::nullopt;
  }

  std::size_t require_column(std::string_view name) const {
    auto idx = column_index(name);
    if (!idx) fail(ErrorCode::kUnknownMetric, "no metric named '" + std::string(name) + "'");
    return *idx;
  }

  std::optional<std::size_t> row_of(std::int64_t minute) const {
    auto it = std::lower_bound(timestamps_.begin(), timestamps_.end(), minute);
    if (it == timestamps_.end() || *it != minute) return std::nullopt;
    return static_cast<std::size_t>(it - timestamps_.begin());
  }

  // True when rows [first, last] are consecutive grid minutes.
  bool contiguous(std::size_t first, std::size_t last) const {
    return timestamps_[last] - timestamps_[first] == static_cast<std::int64_t>(last - first);
  }

  std::size_t missing_count() const {
    return static_cast<std::size_t>(std::count_if(values_.begin(), values_.end(), is_missing));
  }

  // Rows [begin, end) as a new frame.
  MetricFrame slice_rows(std::size_t begin, std::size_t end) const {
    require(begin <= end && end <= rows(), ErrorCode::kOutOfRange, "slice_rows out of range");
    std::vector<std::int64_t> ts(timestamps_.begin() + static_cast<std::ptrdiff_t>(begin),
                                 timestamps_.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<double> vals(values_.begin() + static_cast<std::ptrdiff_t>(begin * cols()),
                             values_.begin() + static_cast<std::ptrdiff_t>(end * cols()));
    return MetricFrame(std::move(ts), metrics_, std::move(vals));
  }

  MetricFrame select_columns(const std::vector<std::size_t>& keep) const {
    std::vector<MetricColumn> cols_out;
    for (std::size_t c : keep) cols_out.push_back(metrics_[c]);
    std::vector<double> vals;
    vals.reserve(rows() * keep.size());
    for (std::size_t r = 0; r < rows(); ++r) {
      for (std::size_t c : keep) vals.push_back(at(r, c));
    }
    return MetricFrame(timestamps_, std::move(cols_out), std::move(vals));
  }

  std::vector<std::string> qos_names() const {
    std::vector<std::string> out;
    for (const auto& m : metrics_) {
      if (m.is_qos) out.push_back(m.name);
    }
    return out;
  }

  // NaN-aware equality: missing cells compare equal to each other.
  bool same_as(const MetricFrame& o) const {
    if (timestamps_ != o.timestamps_ || metrics_ != o.metrics_ || values_.size() != o.values_.size()) return false;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const bool a = is_missing(values_[i]), b = is_missing(o.values_[i]);
      if (a != b || (!a && values_[i] != o.values_[i])) return false;
    }
    return true;
  }

 private:
  std::vector<std::int64_t> timestamps_;
  std::vector<MetricColumn> metrics_;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Schema.

struct MetricSchema {
  std::vector<MetricColumn> metrics;
  std::vector<std::string> allowlist;

  const MetricColumn* find(std::string_view name) const {
    for (const auto& m : metrics) {
      if (m.name == name) return &m;
    }
    return nullptr;
  }
};

inline nlohmann::json schema_to_json(const MetricSchema& s) {
  nlohmann::json j;
  j["metrics"] = nlohmann::json::array();
  for (const auto& m : s.metrics) {
    j["metrics"].push_back({{"name", m.name}, {"category", category_name(m.category)}, {"is_qos", m.is_qos}});
  }
  j["allowlist"] = s.allowlist;
  return j;
}

inline MetricSchema schema_from_json(const nlohmann::json& j) {
  MetricSchema s;
  try {
    for (const auto& m : j.at("metrics")) {
      MetricColumn col;
      col.name = m.at("name").get<std::string>();
      col.category = parse_category(m.at("category").get<std::string>());
      col.is_qos = m.value("is_qos", false);
      s.metrics.push_back(std::move(col));
    }
    if (j.contains("allowlist")) s.allowlist = j["allowlist"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("schema: ") + e.what());
  }
  require(!s.metrics.empty(), ErrorCode::kInvalidConfig, "schema declares no metrics");
  return s;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kParseError, path + ": " + e.what());
  }
}

inline MetricSchema load_schema(const std::string& path) { return schema_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Loading.

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

inline double parse_double(std::string_view s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const std::string str(s);
    const double v = std::stod(str, &used);
    if (used != str.size() || !std::isfinite(v)) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::kParseError, "row " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
  }
}

inline std::int64_t parse_epoch_minute(std::int64_t seconds, std::size_t line_no) {
  if (seconds % 60 != 0) {
    fail(ErrorCode::kNonUniformGrid,
         "row " + std::to_string(line_no) + ": timestamp " + std::to_string(seconds) + " is not minute aligned");
  }
  return seconds / 60;
}

struct RawRow {
  std::int64_t minute;
  std::vector<double> values;
  std::size_t line;
};

// Sorts rows, rejects duplicates and fills whole-minute gaps with missing rows.
inline MetricFrame assemble(std::vector<RawRow> rows, std::vector<MetricColumn> metrics) {
  std::stable_sort(rows.begin(), rows.end(), [](const RawRow& a, const RawRow& b) { return a.minute < b.minute; });
  std::vector<std::int64_t> ts;
  std::vector<double> values;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) {
      if (rows[i].minute == rows[i - 1].minute) {
        fail(ErrorCode::kParseError,
             "row " + std::to_string(rows[i].line) + ": duplicate timestamp " + std::to_string(rows[i].minute * 60));
      }
      for (std::int64_t m = rows[i - 1].minute + 1; m < rows[i].minute; ++m) {
        ts.push_back(m);
        values.insert(values.end(), metrics.size(), kMissing);
      }
    }
    ts.push_back(rows[i].minute);
    values.insert(values.end(), rows[i].values.begin(), rows[i].values.end());
  }
  return MetricFrame(std::move(ts), std::move(metrics), std::move(values));
}

}  // namespace detail

// CSV: header row whose first column is `timestamp` (epoch seconds), then
// one column per metric. Empty cells are missing. Columns the schema does
// not declare are ignored; the frame keeps the schema's column order.
inline MetricFrame parse_metric_csv(std::istream& in, const MetricSchema& schema) {
  std::string line;
  std::size_t line_no = 1;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::kParseError, "row 1: missing header");
  const auto header = detail::split_csv_line(line);
  require(!header.empty() && header[0] == "timestamp", ErrorCode::kMissingColumn,
          "first column must be 'timestamp'");
  std::vector<std::size_t> source_col;
  for (const auto& m : schema.metrics) {
    auto it = std::find(header.begin() + 1, header.end(), m.name);
    if (it == header.end()) fail(ErrorCode::kMissingColumn, "column '" + m.name + "' not in CSV header");
    source_col.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  std::vector<detail::RawRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      fail(ErrorCode::kParseError, "row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                       " fields, got " + std::to_string(fields.size()));
    }
    const double ts = detail::parse_double(fields[0], line_no);
    if (ts != std::floor(ts)) fail(ErrorCode::kParseError, "row " + std::to_string(line_no) + ": fractional timestamp");
    detail::RawRow row{detail::parse_epoch_minute(static_cast<std::int64_t>(ts), line_no), {}, line_no};
    for (std::size_t c : source_col) {
      row.values.push_back(fields[c].empty() ? kMissing : detail::parse_double(fields[c], line_no));
    }
    rows.push_back(std::move(row));
  }
  return detail::assemble(std::move(rows), schema.metrics);
}

// JSONL: one object per line, {"timestamp": int, "values": {name: number|null}}.
// A metric absent from "values" is missing for that row.
inline MetricFrame parse_metric_jsonl(std::istream& in, const MetricSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<detail::RawRow> rows;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::kParseError, "row " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("timestamp") || !j["timestamp"].is_number_integer() || !j.contains("values") ||
        !j["values"].is_object()) {
      fail(ErrorCode::kParseError, "row " + std::to_string(line_no) + ": need integer timestamp and values object");
    }
    detail::RawRow row{detail::parse_epoch_minute(j["timestamp"].get<std::int64_t>(), line_no), {}, line_no};
    const auto& vals = j["values"];
    for (const auto& m : schema.metrics) {
      auto it = vals.find(m.name);
      if (it == vals.end() || it->is_null()) {
        row.values.push_back(kMissing);
      } else if (it->is_number()) {
        seen.insert(m.name);
        row.values.push_back(it->get<double>());
      } else {
        fail(ErrorCode::kParseError, "row " + std::to_string(line_no) + ": '" + m.name + "' is not a number");
      }
    }
    for (auto it = vals.begin(); it != vals.end(); ++it) seen.insert(it.key());
    rows.push_back(std::move(row));
  }
  if (!rows.empty()) {
    for (const auto& m : schema.metrics) {
      if (!seen.count(m.name)) fail(ErrorCode::kMissingColumn, "metric '" + m.name + "' never appears");
    }
  }
  return detail::assemble(std::move(rows), schema.metrics);
}

// Dispatches on extension: ".jsonl" reads JSON lines, anything else CSV.
inline MetricFrame load_metric_frame(const std::string& path, const MetricSchema& schema) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path);
  const bool jsonl = path.size() >= 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0;
  return jsonl ? parse_metric_jsonl(in, schema) : parse_metric_csv(in, schema);
}

inline void write_metric_csv(std::ostream& out, const MetricFrame& frame) {
  out << "timestamp";
  for (const auto& m : frame.metrics()) out << ',' << m.name;
  out << '\n';
  char buf[64];
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    out << frame.timestamps()[r] * 60;
    for (std::size_t c = 0; c < frame.cols(); ++c) {
      out << ',';
      const double v = frame.at(r, c);
      if (!is_missing(v)) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << buf;
      }
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Missing values.

struct MissingReport {
  std::size_t zero_filled = 0;
  std::size_t dropped_rows = 0;
};

// error_like gaps become 0.0; rows still missing a utilization_like value
// are dropped.
inline MetricFrame handle_missing(const MetricFrame& frame, MissingReport* report = nullptr) {
  MissingReport rep;
  std::vector<std::int64_t> ts;
  std::vector<double> values;
  values.reserve(frame.values().size());
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    bool drop = false;
    for (std::size_t c = 0; c < frame.cols(); ++c) {
      if (is_missing(frame.at(r, c)) && frame.metrics()[c].category == MetricCategory::kUtilizationLike) drop = true;
    }
    if (drop) {
      ++rep.dropped_rows;
      continue;
    }
    ts.push_back(frame.timestamps()[r]);
    for (std::size_t c = 0; c < frame.cols(); ++c) {
      double v = frame.at(r, c);
      if (is_missing(v)) {
        v = 0.0;
        ++rep.zero_filled;
      }
      values.push_back(v);
    }
  }
  if (ts.empty() && frame.rows() > 0) fail(ErrorCode::kAllRowsDropped, "every row had a missing utilization value");
  if (ts.empty()) fail(ErrorCode::kAllRowsDropped, "frame has no rows");
  if (report) *report = rep;
  return MetricFrame(std::move(ts), frame.metrics(), std::move(values));
}

// ---------------------------------------------------------------------------
// Feature selection.

struct SelectionConfig {
  double var_floor = 1e-12;
  double corr_ceiling = 0.99;
  std::vector<std::string> allowlist;
};

namespace stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Population variance.
inline double variance(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double mu = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - mu) * (v - mu);
  return s / static_cast<double>(x.size());
}

// Pearson correlation; 0 when either side is constant.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Ranks starting at 1, ties share their average rank.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

}  // namespace stats

// Drops low-variance columns, then for each pair of non-QoS columns whose
// Pearson and Spearman correlations both reach corr_ceiling in magnitude,
// drops the later one. QoS and allowlisted columns are always kept.
inline MetricFrame select_features(const MetricFrame& frame, const SelectionConfig& cfg,
                                   std::vector<std::string>* dropped = nullptr) {
  require(frame.missing_count() == 0, ErrorCode::kInvalidConfig, "select_features needs a frame without missing cells");
  const std::set<std::string> allow(cfg.allowlist.begin(), cfg.allowlist.end());
  auto protected_col = [&](std::size_t c) {
    return frame.metrics()[c].is_qos || allow.count(frame.metrics()[c].name) > 0;
  };
  std::vector<std::vector<double>> cols;
  for (std::size_t c = 0; c < frame.cols(); ++c) cols.push_back(frame.column(c));

  std::vector<bool> keep(frame.cols(), true);
  for (std::size_t c = 0; c < frame.cols(); ++c) {
    if (!protected_col(c) && stats::variance(cols[c]) < cfg.var_floor) keep[c] = false;
  }
  for (std::size_t i = 0; i < frame.cols(); ++i) {
    if (!keep[i] || frame.metrics()[i].is_qos) continue;
    for (std::size_t j = i + 1; j < frame.cols(); ++j) {
      if (!keep[j] || protected_col(j)) continue;
      if (std::abs(stats::pearson(cols[i], cols[j])) >= cfg.corr_ceiling &&
          std::abs(stats::spearman(cols[i], cols[j])) >= cfg.corr_ceiling) {
        keep[j] = false;
      }
    }
  }
  std::vector<std::size_t> idx;
  for (std::size_t c = 0; c < frame.cols(); ++c) {
    if (keep[c]) {
      idx.push_back(c);
    } else if (dropped) {
      dropped->push_back(frame.metrics()[c].name);
    }
  }
  return frame.select_columns(idx);
}

// ---------------------------------------------------------------------------
// Normalization: (x - min) / (max - min + eps), then clamped to [0, 1].

struct NormalizationStats {
  struct Entry {
    std::string name;
    double min = 0.0;
    double max = 0.0;
  };
  std::vector<Entry> metrics;
  double epsilon = 1e-9;

  const Entry* find(std::string_view name) const {
    for (const auto& e : metrics) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }

  // Maps a raw value into normalized units without clamping.
  double scale(std::string_view name, double raw) const {
    const Entry* e = find(name);
    if (!e) fail(ErrorCode::kUnknownMetric, "no normalization stats for '" + std::string(name) + "'");
    return (raw - e->min) / (e->max - e->min + epsilon);
  }

  bool operator==(const NormalizationStats& o) const {
    if (epsilon != o.epsilon || metrics.size() != o.metrics.size()) return false;
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      if (metrics[i].name != o.metrics[i].name || metrics[i].min != o.metrics[i].min ||
          metrics[i].max != o.metrics[i].max) {
        return false;
      }
    }
    return true;
  }
};

inline NormalizationStats fit_normalizer(const MetricFrame& frame, double epsilon = 1e-9) {
  require(!frame.empty(), ErrorCode::kEmptyFrame, "cannot fit normalizer on an empty frame");
  require(epsilon > 0.0, ErrorCode::kInvalidConfig, "epsilon must be positive");
  require(frame.missing_count() == 0, ErrorCode::kInvalidConfig, "fit_normalizer needs a frame without missing cells");
  NormalizationStats s;
  s.epsilon = epsilon;
  for (std::size_t c = 0; c < frame.cols(); ++c) {
    double lo = frame.at(0, c), hi = frame.at(0, c);
    for (std::size_t r = 1; r < frame.rows(); ++r) {
      lo = std::min(lo, frame.at(r, c));
      hi = std::max(hi, frame.at(r, c));
    }
    s.metrics.push_back({frame.metrics()[c].name, lo, hi});
  }
  return s;
}

// Not idempotent: a second pass rescales with the same raw-unit stats.
inline MetricFrame normalize(const MetricFrame& frame, const NormalizationStats& stats) {
  std::vector<const NormalizationStats::Entry*> entries;
  for (const auto& m : frame.metrics()) {
    const auto* e = stats.find(m.name);
    if (!e) fail(ErrorCode::kUnknownMetric, "no normalization stats for '" + m.name + "'");
    entries.push_back(e);
  }
  std::vector<double> values(frame.values().size());
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    for (std::size_t c = 0; c < frame.cols(); ++c) {
      const double v = frame.at(r, c);
      const double scaled = (v - entries[c]->min) / (entries[c]->max - entries[c]->min + stats.epsilon);
      values[r * frame.cols() + c] = is_missing(v) ? v : std::clamp(scaled, 0.0, 1.0);
    }
  }
  return MetricFrame(frame.timestamps(), frame.metrics(), std::move(values));
}

inline nlohmann::json normalization_to_json(const NormalizationStats& s) {
  nlohmann::json j;
  j["epsilon"] = s.epsilon;
  j["metrics"] = nlohmann::json::array();
  for (const auto& e : s.metrics) j["metrics"].push_back({{"name", e.name}, {"min", e.min}, {"max", e.max}});
  return j;
}

inline NormalizationStats normalization_from_json(const nlohmann::json& j) {
  NormalizationStats s;
  s.epsilon = j.at("epsilon").get<double>();
  for (const auto& e : j.at("metrics")) {
    s.metrics.push_back({e.at("name").get<std::string>(), e.at("min").get<double>(), e.at("max").get<double>()});
  }
  return s;
}

// ---------------------------------------------------------------------------
// Rolling windows.

// Window anchored at minute t covers rows (t - w, t]; end_row is the row of t.
struct WindowView {
  std::int64_t t = 0;
  std::size_t end_row = 0;
  std::size_t length = 0;

  std::size_t begin_row() const { return end_row + 1 - length; }
};

// Anchors at rows w-1, w-1+stride, ...; windows spanning a dropped-row gap
// are skipped. A gap-free frame of n rows yields floor((n-w)/stride)+1.
inline std::vector<WindowView> window(const MetricFrame& frame, std::size_t w, std::size_t stride) {
  require(w >= 1, ErrorCode::kInvalidConfig, "window length must be >= 1");
  require(stride >= 1, ErrorCode::kInvalidConfig, "stride must be >= 1");
  require(frame.rows() >= w, ErrorCode::kFrameTooShort,
          "frame has " + std::to_string(frame.rows()) + " rows, window needs " + std::to_string(w));
  std::vector<WindowView> out;
  for (std::size_t end = w - 1; end < frame.rows(); end += stride) {
    if (!frame.contiguous(end + 1 - w, end)) continue;
    out.push_back({frame.timestamps()[end], end, w});
  }
  return out;
}

// Copies a window into a w x |M| row-major buffer.
inline std::vector<double> window_matrix(const MetricFrame& frame, const WindowView& win) {
  const std::size_t m = frame.cols();
  std::vector<double> out(win.length * m);
  for (std::size_t i = 0; i < win.length; ++i) {
    std::copy_n(frame.row_data(win.begin_row() + i), m, out.begin() + static_cast<std::ptrdiff_t>(i * m));
  }
  return out;
}

}  // namespace tailcast
