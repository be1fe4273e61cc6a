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

// Proxy labels for extreme events.
//
// A label window of w' minutes on a QoS metric qualifies when at least
// max(1, alpha * w') of its samples exceed the metric's percentile value
// tau, and at least k alerts fired inside [t, t + w'). Windows slide with
// stride 1; a timestamp is labeled when any qualifying window covers it.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tailcast/error.hpp"
#include "tailcast/ingest.hpp"

namespace tailcast {

enum class Severity { kHigh, kMedium, kLow };

inline std::string_view severity_name(Severity s) {
  switch (s) {
    case Severity::kHigh: return "high";
    case Severity::kMedium: return "medium";
    case Severity::kLow: return "low";
  }
  return "low";
}

struct AlertRecord {
  std::int64_t timestamp = 0;  // epoch minute
  std::string monitor;
  Severity severity = Severity::kLow;
  std::string service;

  bool operator==(const AlertRecord&) const = default;
};

// JSONL: {"timestamp": int (epoch seconds), "monitor": str,
// "severity": "high"|"medium"|"low", "service": str}. Seconds are floored
// to the minute. Output is sorted by timestamp (stable).
inline std::vector<AlertRecord> parse_alerts(std::istream& in) {
  std::vector<AlertRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("timestamp") || !j["timestamp"].is_number_integer() ||
        !j.contains("severity") || !j["severity"].is_string()) {
      fail(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": need integer timestamp and severity");
    }
    AlertRecord a;
    const auto secs = j["timestamp"].get<std::int64_t>();
    a.timestamp = secs >= 0 ? secs / 60 : -((-secs + 59) / 60);
    const auto sev = j["severity"].get<std::string>();
    if (sev == "high") {
      a.severity = Severity::kHigh;
    } else if (sev == "medium") {
      a.severity = Severity::kMedium;
    } else if (sev == "low") {
      a.severity = Severity::kLow;
    } else {
      fail(ErrorCode::kUnknownSeverity, "line " + std::to_string(line_no) + ": severity '" + sev + "'");
    }
    a.monitor = j.value("monitor", "");
    a.service = j.value("service", "");
    out.push_back(std::move(a));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const AlertRecord& a, const AlertRecord& b) { return a.timestamp < b.timestamp; });
  return out;
}

inline std::vector<AlertRecord> load_alerts(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path);
  return parse_alerts(in);
}

inline void write_alerts(std::ostream& out, std::span<const AlertRecord> alerts) {
  for (const auto& a : alerts) {
    nlohmann::json j;
    j["timestamp"] = a.timestamp * 60;
    j["monitor"] = a.monitor;
    j["severity"] = severity_name(a.severity);
    j["service"] = a.service;
    out << j.dump() << '\n';
  }
}

// Nearest-rank percentile: the ceil(T/100 * n)-th smallest value.
inline double percentile_value(std::span<const double> series, double T) {
  require(!series.empty(), ErrorCode::kEmptySeries, "percentile of an empty series");
  require(T > 0.0 && T < 100.0, ErrorCode::kInvalidConfig, "percentile must lie in (0, 100)");
  std::vector<double> sorted(series.begin(), series.end());
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(T * n / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

// Same rule on a pre-sorted series.
inline double percentile_sorted(std::span<const double> sorted, double T) {
  require(!sorted.empty(), ErrorCode::kEmptySeries, "percentile of an empty series");
  require(T > 0.0 && T < 100.0, ErrorCode::kInvalidConfig, "percentile must lie in (0, 100)");
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(T * n / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

struct LabelParams {
  std::size_t window = 10;  // w', minutes
  double percentile = 95.0;  // T
  double alpha = 0.5;
  std::size_t min_alerts = 1;  // k

  bool operator==(const LabelParams&) const = default;
};

inline nlohmann::json label_params_to_json(const LabelParams& p) {
  return {{"window", p.window}, {"percentile", p.percentile}, {"alpha", p.alpha}, {"min_alerts", p.min_alerts}};
}

inline LabelParams label_params_from_json(const nlohmann::json& j) {
  LabelParams p;
  p.window = j.value("window", p.window);
  p.percentile = j.value("percentile", p.percentile);
  p.alpha = j.value("alpha", p.alpha);
  p.min_alerts = j.value("min_alerts", p.min_alerts);
  return p;
}

struct ProxyLabelSeries {
  std::string metric;
  std::vector<std::int64_t> timestamps;
  std::vector<std::uint8_t> labels;
  LabelParams params;
  double tau = 0.0;

  std::size_t positives() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)); }
};

// Per-metric tau from the first `train_rows` rows of a raw frame.
inline std::map<std::string, double> compute_thresholds(const MetricFrame& raw, std::span<const std::string> qos,
                                                        double T, std::size_t train_rows) {
  train_rows = std::min(train_rows, raw.rows());
  std::map<std::string, double> tau;
  for (const auto& name : qos) {
    const auto idx = raw.column_index(name);
    if (!idx) fail(ErrorCode::kMissingQosMetric, "QoS metric '" + name + "' not in frame");
    std::vector<double> vals;
    vals.reserve(train_rows);
    for (std::size_t r = 0; r < train_rows; ++r) vals.push_back(raw.at(r, *idx));
    tau[name] = percentile_value(vals, T);
  }
  return tau;
}

inline std::size_t count_alerts_in(std::span<const AlertRecord> sorted_alerts, std::int64_t begin, std::int64_t end) {
  auto lo = std::lower_bound(sorted_alerts.begin(), sorted_alerts.end(), begin,
                             [](const AlertRecord& a, std::int64_t t) { return a.timestamp < t; });
  auto hi = std::lower_bound(sorted_alerts.begin(), sorted_alerts.end(), end,
                             [](const AlertRecord& a, std::int64_t t) { return a.timestamp < t; });
  return static_cast<std::size_t>(hi - lo);
}

// `alerts` must be sorted by timestamp (load_alerts guarantees it).
inline std::vector<ProxyLabelSeries> generate_proxy_labels(const MetricFrame& raw, std::span<const std::string> qos,
                                                           std::span<const AlertRecord> alerts,
                                                           const std::map<std::string, double>& tau,
                                                           const LabelParams& params) {
  require(params.window >= 1, ErrorCode::kInvalidConfig, "label window must be >= 1");
  const std::size_t w = params.window;
  const double needed = std::max(1.0, params.alpha * static_cast<double>(w));
  const std::size_t n = raw.rows();
  std::vector<ProxyLabelSeries> out;
  for (const auto& name : qos) {
    const auto idx = raw.column_index(name);
    if (!idx) fail(ErrorCode::kMissingQosMetric, "QoS metric '" + name + "' not in frame");
    auto it = tau.find(name);
    if (it == tau.end()) fail(ErrorCode::kMissingQosMetric, "no threshold for QoS metric '" + name + "'");
    const double threshold = it->second;

    ProxyLabelSeries series;
    series.metric = name;
    series.timestamps = raw.timestamps();
    series.params = params;
    series.tau = threshold;
    series.labels.assign(n, 0);

    // above[r] prefix sums give the exceedance count of any window in O(1);
    // cover[] is a difference array marking rows inside qualifying windows.
    std::vector<std::size_t> prefix(n + 1, 0);
    for (std::size_t r = 0; r < n; ++r) prefix[r + 1] = prefix[r] + (raw.at(r, *idx) > threshold ? 1 : 0);
    std::vector<std::int64_t> cover(n + 1, 0);
    for (std::size_t s = 0; s + w <= n; ++s) {
      if (!raw.contiguous(s, s + w - 1)) continue;
      const auto exceed = static_cast<double>(prefix[s + w] - prefix[s]);
      if (exceed < needed) continue;
      const std::int64_t t0 = raw.timestamps()[s];
      if (count_alerts_in(alerts, t0, t0 + static_cast<std::int64_t>(w)) < params.min_alerts) continue;
      ++cover[s];
      --cover[s + w];
    }
    std::int64_t running = 0;
    for (std::size_t r = 0; r < n; ++r) {
      running += cover[r];
      series.labels[r] = running > 0 ? 1 : 0;
    }
    out.push_back(std::move(series));
  }
  return out;
}

inline bool label_at(const ProxyLabelSeries& series, std::int64_t t) {
  auto it = std::lower_bound(series.timestamps.begin(), series.timestamps.end(), t);
  if (it == series.timestamps.end() || *it != t) {
    fail(ErrorCode::kOutOfRange, "minute " + std::to_string(t) + " not on the label grid of '" + series.metric + "'");
  }
  return series.labels[static_cast<std::size_t>(it - series.timestamps.begin())] != 0;
}

// Fraction of labeled timestamps among the first `rows` rows, averaged over
// the series.
inline double label_density(std::span<const ProxyLabelSeries> labels, std::size_t rows) {
  if (labels.empty() || rows == 0) return 0.0;
  double total = 0.0;
  for (const auto& s : labels) {
    const std::size_t n = std::min(rows, s.labels.size());
    total += static_cast<double>(std::count(s.labels.begin(), s.labels.begin() + static_cast<std::ptrdiff_t>(n), 1)) /
             static_cast<double>(n);
  }
  return total / static_cast<double>(labels.size());
}

}  // namespace tailcast
