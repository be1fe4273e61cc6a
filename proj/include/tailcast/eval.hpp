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

// Evaluation metrics: average precision, precision/recall/F1 at a
// threshold, and outage-level detection accounting.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tailcast/error.hpp"
#include "tailcast/infer.hpp"

namespace tailcast {

// AP = sum_n (R_n - R_{n-1}) P_n over the descending ranking, with equal
// scores entering together as one step.
inline double auc_pr(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), ErrorCode::kShapeMismatch, "auc_pr: size mismatch");
  std::size_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  if (pos == 0 || pos == labels.size()) fail(ErrorCode::kSingleClass, "AUC-PR needs both classes");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double v = scores[order[i]];
    while (i < order.size() && scores[order[i]] == v) {
      tp += labels[order[i]] ? 1 : 0;
      ++seen;
      ++i;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

struct PrPoint {
  double threshold = 0.0;  // predictions are score >= threshold
  double precision = 0.0;
  double recall = 0.0;
};

// One point per distinct score, in descending score order.
inline std::vector<PrPoint> pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), ErrorCode::kShapeMismatch, "pr_curve: size mismatch");
  std::size_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  if (pos == 0) fail(ErrorCode::kSingleClass, "PR curve needs positives");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<PrPoint> out;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double v = scores[order[i]];
    while (i < order.size() && scores[order[i]] == v) {
      tp += labels[order[i]] ? 1 : 0;
      ++seen;
      ++i;
    }
    out.push_back({v, static_cast<double>(tp) / static_cast<double>(seen),
                   static_cast<double>(tp) / static_cast<double>(pos)});
  }
  return out;
}

inline void write_pr_csv(std::ostream& out, std::span<const PrPoint> points) {
  out << "threshold,precision,recall\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.precision, p.recall);
    out << buf;
  }
}

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // some denominator was zero
};

// Prediction is score > theta. Zero denominators give 0 and set degenerate.
inline Prf prf_at(std::span<const double> scores, std::span<const std::uint8_t> labels, double theta) {
  require(scores.size() == labels.size(), ErrorCode::kShapeMismatch, "prf_at: size mismatch");
  require(!scores.empty(), ErrorCode::kEmptySeries, "prf_at on empty input");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] > theta;
    if (pred && labels[i]) ++tp;
    if (pred && !labels[i]) ++fp;
    if (!pred && labels[i]) ++fn;
  }
  Prf r;
  if (tp + fp > 0) {
    r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  } else {
    r.degenerate = true;
  }
  if (tp + fn > 0) {
    r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  } else {
    r.degenerate = true;
  }
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  } else {
    r.degenerate = true;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Outage-level accounting.

struct GroundTruthOutage {
  std::int64_t impact_start = 0;       // B
  std::int64_t baseline_detect = 0;    // C
  std::int64_t end = 0;                // D
  std::vector<std::string> metrics;

  bool operator==(const GroundTruthOutage&) const = default;
};

inline nlohmann::json truth_to_json(std::span<const GroundTruthOutage> truth) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : truth) {
    arr.push_back({{"B", t.impact_start * 60}, {"C", t.baseline_detect * 60}, {"D", t.end * 60}, {"metrics", t.metrics}});
  }
  return arr;
}

inline std::vector<GroundTruthOutage> truth_from_json(const nlohmann::json& j) {
  std::vector<GroundTruthOutage> out;
  try {
    for (const auto& e : j) {
      GroundTruthOutage t;
      t.impact_start = e.at("B").get<std::int64_t>() / 60;
      t.baseline_detect = e.at("C").get<std::int64_t>() / 60;
      t.end = e.at("D").get<std::int64_t>() / 60;
      t.metrics = e.at("metrics").get<std::vector<std::string>>();
      require(t.impact_start < t.baseline_detect && t.baseline_detect <= t.end, ErrorCode::kParseError,
              "ground truth needs B < C <= D");
      out.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, std::string("ground truth: ") + e.what());
  }
  return out;
}

// (C - flagged) / (C - B).
inline double mttd_fraction(const GroundTruthOutage& t, std::int64_t flagged) {
  require(t.impact_start < t.baseline_detect, ErrorCode::kInvalidConfig, "outage needs B < C");
  return static_cast<double>(t.baseline_detect - flagged) / static_cast<double>(t.baseline_detect - t.impact_start);
}

struct OutageMatch {
  GroundTruthOutage truth;
  std::optional<std::int64_t> flagged;  // unset: not predicted
  std::optional<double> reduction;
};

struct DetectionSummary {
  std::vector<OutageMatch> outages;
  std::size_t detected = 0;
  std::size_t runs = 0;             // system-level sustained runs
  std::size_t false_positive_runs = 0;
  double precision = 0.0;           // runs touching an outage / runs
  double recall = 0.0;              // detected / outages
};

// Each outage is matched to the earliest event flagged inside
// [B, C + grace]. A system-level run that overlaps no [B, D] span is a
// false positive.
inline DetectionSummary mttd_reduction(std::span<const OutageEvent> events, std::span<const GroundTruthOutage> truth,
                                       std::int64_t grace = 0) {
  DetectionSummary s;
  for (const auto& t : truth) {
    OutageMatch m{t, std::nullopt, std::nullopt};
    for (const auto& e : events) {
      if (e.flagged < t.impact_start || e.flagged > t.baseline_detect + grace) continue;
      if (!m.flagged || e.flagged < *m.flagged) m.flagged = e.flagged;
    }
    if (m.flagged) {
      m.reduction = mttd_fraction(t, *m.flagged);
      ++s.detected;
    }
    s.outages.push_back(std::move(m));
  }
  const auto runs = merge_events(events);
  s.runs = runs.size();
  std::size_t true_runs = 0;
  for (const auto& r : runs) {
    bool hits = false;
    for (const auto& t : truth) hits = hits || (r.start <= t.end && r.end >= t.impact_start);
    if (hits) {
      ++true_runs;
    } else {
      ++s.false_positive_runs;
    }
  }
  s.precision = runs.empty() ? 0.0 : static_cast<double>(true_runs) / static_cast<double>(runs.size());
  s.recall = truth.empty() ? 0.0 : static_cast<double>(s.detected) / static_cast<double>(truth.size());
  return s;
}

struct EvalReport {
  double auc_pr = 0.0;
  double theta = 0.0;
  Prf at_theta;
  std::map<double, double> f1_by_percentile;
  std::optional<DetectionSummary> detection;
};

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["auc_pr"] = r.auc_pr;
  j["theta"] = r.theta;
  j["precision"] = r.at_theta.precision;
  j["recall"] = r.at_theta.recall;
  j["f1"] = r.at_theta.f1;
  j["degenerate"] = r.at_theta.degenerate;
  nlohmann::json per_t = nlohmann::json::array();
  for (const auto& [T, f1] : r.f1_by_percentile) per_t.push_back({{"T", T}, {"f1", f1}});
  j["f1_by_percentile"] = per_t;
  if (r.detection) {
    const auto& d = *r.detection;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& m : d.outages) {
      nlohmann::json row{{"B", m.truth.impact_start * 60}, {"C", m.truth.baseline_detect * 60},
                         {"D", m.truth.end * 60}};
      row["flagged"] = m.flagged ? nlohmann::json(*m.flagged * 60) : nlohmann::json("-");
      row["mttd_reduction"] = m.reduction ? nlohmann::json(*m.reduction) : nlohmann::json("-");
      rows.push_back(std::move(row));
    }
    j["outages"] = rows;
    j["detected"] = d.detected;
    j["sustained_runs"] = d.runs;
    j["false_positive_runs"] = d.false_positive_runs;
    j["run_precision"] = d.precision;
    j["outage_recall"] = d.recall;
  }
  return j;
}

}  // namespace tailcast
