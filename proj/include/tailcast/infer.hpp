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

// Inference: outage probability from a forecast mixture, the Youden
// decision threshold, batch and streaming scoring, sustained detection.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tailcast/bundle.hpp"
#include "tailcast/error.hpp"
#include "tailcast/ingest.hpp"
#include "tailcast/model.hpp"

namespace tailcast {

// P(Z > z) for a standard normal.
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Upper tail mass of the mixture beyond tau: sum_c alpha_c P(N(mu_c, sigma_c) > tau).
inline double outage_probability(const Mixture& m, double tau) {
  validate_mixture(m);
  double p = 0.0;
  for (std::size_t c = 0; c < m.components(); ++c) p += m.alpha[c] * normal_sf((tau - m.mu[c]) / m.sigma[c]);
  return std::clamp(p, 0.0, 1.0);
}

struct YoudenResult {
  double theta = 0.0;
  double j = 0.0;
};

// Candidates are 0, 1 and the midpoints between consecutive distinct
// probabilities; a score is positive when it is strictly above the
// candidate. Returns the smallest candidate that maximizes TPR - FPR.
inline YoudenResult youden_threshold(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  require(probs.size() == labels.size(), ErrorCode::kShapeMismatch, "youden_threshold: size mismatch");
  std::int64_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  const auto n = static_cast<std::int64_t>(labels.size());
  const std::int64_t neg = n - pos;
  if (pos == 0 || neg == 0) fail(ErrorCode::kSingleClass, "Youden's J needs both classes");

  std::vector<std::size_t> order(probs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });

  // Sweep thresholds upward. J * pos * neg = tp * neg - fp * pos is exact in
  // integers, so ties compare exactly.
  std::int64_t tp = pos, fp = neg;  // threshold 0 below every score...
  std::size_t i = 0;
  // ...except scores that equal 0, which are not strictly above it.
  while (i < order.size() && probs[order[i]] <= 0.0) {
    (labels[order[i]] ? tp : fp) -= 1;
    ++i;
  }
  std::int64_t best_score = tp * neg - fp * pos;
  double best_theta = 0.0;
  while (i < order.size()) {
    const double v = probs[order[i]];
    while (i < order.size() && probs[order[i]] == v) {
      (labels[order[i]] ? tp : fp) -= 1;
      ++i;
    }
    if (v >= 1.0) break;
    const double theta = i < order.size() ? std::min(0.5 * (v + probs[order[i]]), 1.0) : 1.0;
    const std::int64_t score = tp * neg - fp * pos;
    if (score > best_score) {
      best_score = score;
      best_theta = theta;
    }
  }
  // Threshold 1 predicts nothing positive (probabilities are at most 1).
  if (0 > best_score) {
    best_score = 0;
    best_theta = 1.0;
  }
  return {best_theta, static_cast<double>(best_score) / static_cast<double>(pos * neg)};
}

// ---------------------------------------------------------------------------
// Scoring.

// Forecasts mixtures for a batch of windows (row-major w x |M| each).
using Forecaster = std::function<std::vector<ModelOutput>(std::span<const double* const>)>;

inline constexpr std::size_t kScoreChunk = 256;

inline Forecaster bundle_forecaster(const ModelBundle& bundle) {
  return [&bundle](std::span<const double* const> windows) {
    return predict(bundle.config, bundle.params, windows);
  };
}

// Probability for QoS metric y from one model output. The classifier-only
// variant has no mixture and is scored by its classifier.
inline double output_probability(const ModelConfig& cfg, const ModelOutput& out, std::size_t y, double tau_norm) {
  if (cfg.task == TaskMode::kClassifierOnly) return out.clf_prob[y];
  return outage_probability(out.mixtures[y], tau_norm);
}

struct ForecastTable {
  std::vector<std::int64_t> timestamps;      // anchors
  std::vector<ModelOutput> outputs;          // one per anchor
};

// Forecasts every full, gap-free window of a normalized frame, in chunks.
inline ForecastTable forecast_frame(const ModelConfig& cfg, const MetricFrame& norm, const Forecaster& forecaster,
                                    std::size_t chunk = kScoreChunk) {
  require(norm.cols() == cfg.n_metrics, ErrorCode::kShapeMismatch,
          "frame has " + std::to_string(norm.cols()) + " metrics, model expects " + std::to_string(cfg.n_metrics));
  const auto views = window(norm, cfg.window, 1);
  ForecastTable table;
  std::vector<const double*> ptrs;
  for (std::size_t start = 0; start < views.size(); start += chunk) {
    const std::size_t end = std::min(views.size(), start + chunk);
    ptrs.clear();
    for (std::size_t i = start; i < end; ++i) {
      ptrs.push_back(norm.row_data(views[i].begin_row()));
      table.timestamps.push_back(views[i].t);
    }
    auto outs = forecaster(ptrs);
    for (auto& o : outs) table.outputs.push_back(std::move(o));
  }
  return table;
}

struct ProbabilitySeries {
  std::string metric;
  std::vector<std::int64_t> timestamps;
  std::vector<double> probs;
};

inline std::vector<ProbabilitySeries> probabilities(const ModelConfig& cfg, const ForecastTable& table,
                                                    std::span<const double> tau_norm) {
  require(tau_norm.size() == cfg.qos.size(), ErrorCode::kShapeMismatch, "one tau per QoS metric");
  std::vector<ProbabilitySeries> out;
  for (std::size_t y = 0; y < cfg.qos.size(); ++y) {
    ProbabilitySeries s{cfg.qos[y], table.timestamps, {}};
    s.probs.reserve(table.outputs.size());
    for (const auto& o : table.outputs) s.probs.push_back(output_probability(cfg, o, y, tau_norm[y]));
    out.push_back(std::move(s));
  }
  return out;
}

// Offline scoring of a normalized frame against the bundle's tau.
inline std::vector<ProbabilitySeries> score_batch(const ModelBundle& bundle, const MetricFrame& norm) {
  require(norm.rows() >= bundle.config.window, ErrorCode::kFrameTooShort,
          "need at least " + std::to_string(bundle.config.window) + " rows to score");
  const auto table = forecast_frame(bundle.config, norm, bundle_forecaster(bundle));
  return probabilities(bundle.config, table, bundle.tau_normalized(bundle.decision.tau));
}

// Rolling scorer fed one normalized row per minute. Once w consecutive
// minutes are buffered, every push yields one probability per QoS metric.
// A gap in the minute grid restarts the buffer.
class StreamScorer {
 public:
  explicit StreamScorer(const ModelBundle& bundle)
      : bundle_(bundle), tau_norm_(bundle.tau_normalized(bundle.decision.tau)) {}

  std::optional<std::vector<double>> push(std::int64_t minute, std::span<const double> row) {
    const ModelConfig& cfg = bundle_.config;
    require(row.size() == cfg.n_metrics, ErrorCode::kShapeMismatch, "stream row width differs from the model");
    if (!rows_.empty() && minute != last_ + 1) rows_.clear();
    last_ = minute;
    rows_.emplace_back(row.begin(), row.end());
    if (rows_.size() > cfg.window) rows_.pop_front();
    if (rows_.size() < cfg.window) return std::nullopt;
    buffer_.clear();
    for (const auto& r : rows_) buffer_.insert(buffer_.end(), r.begin(), r.end());
    const double* ptr = buffer_.data();
    auto outs = predict(cfg, bundle_.params, std::span<const double* const>(&ptr, 1));
    std::vector<double> probs;
    for (std::size_t y = 0; y < cfg.qos.size(); ++y) {
      probs.push_back(output_probability(cfg, outs[0], y, tau_norm_[y]));
    }
    return probs;
  }

 private:
  const ModelBundle& bundle_;
  std::vector<double> tau_norm_;
  std::deque<std::vector<double>> rows_;
  std::vector<double> buffer_;
  std::int64_t last_ = 0;
};

// Streaming path over a whole frame, row by row.
inline std::vector<ProbabilitySeries> score_stream(const ModelBundle& bundle, const MetricFrame& norm) {
  require(norm.rows() >= bundle.config.window, ErrorCode::kFrameTooShort,
          "need at least " + std::to_string(bundle.config.window) + " rows to score");
  StreamScorer scorer(bundle);
  std::vector<ProbabilitySeries> out;
  for (const auto& q : bundle.config.qos) out.push_back({q, {}, {}});
  for (std::size_t r = 0; r < norm.rows(); ++r) {
    const auto minute = norm.timestamps()[r];
    auto probs = scorer.push(minute, std::span<const double>(norm.row_data(r), norm.cols()));
    if (!probs) continue;
    for (std::size_t y = 0; y < out.size(); ++y) {
      out[y].timestamps.push_back(minute);
      out[y].probs.push_back((*probs)[y]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sustained detection.

struct OutageEvent {
  std::string metric;
  std::int64_t start = 0;    // first minute of the run above theta
  std::int64_t flagged = 0;  // minute the D-th consecutive exceedance occurred
  std::int64_t end = 0;      // last minute of the run
  double peak = 0.0;

  bool operator==(const OutageEvent&) const = default;
};

// One event per run of more than `sustain` - 1 consecutive minutes with
// probability > theta. A timestamp gap ends a run.
inline std::vector<OutageEvent> detect(const ProbabilitySeries& s, double theta, std::size_t sustain) {
  require(sustain >= 1, ErrorCode::kInvalidConfig, "sustain must be >= 1");
  require(s.timestamps.size() == s.probs.size(), ErrorCode::kShapeMismatch, "series length mismatch");
  std::vector<OutageEvent> events;
  std::size_t run = 0;
  OutageEvent cur;
  for (std::size_t i = 0; i < s.probs.size(); ++i) {
    const bool continues = run > 0 && s.timestamps[i] == s.timestamps[i - 1] + 1;
    if (run > 0 && !continues) {
      if (run >= sustain) events.push_back(cur);
      run = 0;
    }
    if (s.probs[i] > theta) {
      if (run == 0) {
        cur = OutageEvent{s.metric, s.timestamps[i], 0, s.timestamps[i], s.probs[i]};
      }
      ++run;
      cur.end = s.timestamps[i];
      cur.peak = std::max(cur.peak, s.probs[i]);
      if (run == sustain) cur.flagged = s.timestamps[i];
    } else {
      if (run >= sustain) events.push_back(cur);
      run = 0;
    }
  }
  if (run >= sustain) events.push_back(cur);
  return events;
}

inline std::vector<OutageEvent> detect_all(std::span<const ProbabilitySeries> series, double theta,
                                           std::size_t sustain) {
  std::vector<OutageEvent> out;
  for (const auto& s : series) {
    auto ev = detect(s, theta, sustain);
    out.insert(out.end(), ev.begin(), ev.end());
  }
  std::stable_sort(out.begin(), out.end(), [](const OutageEvent& a, const OutageEvent& b) {
    return a.flagged != b.flagged ? a.flagged < b.flagged : a.metric < b.metric;
  });
  return out;
}

// System-level view under the any-metric policy: overlapping or adjacent
// per-metric runs merge into one.
struct SystemRun {
  std::int64_t start = 0;
  std::int64_t flagged = 0;
  std::int64_t end = 0;
  double peak = 0.0;
  std::vector<std::string> metrics;
};

inline std::vector<SystemRun> merge_events(std::span<const OutageEvent> events) {
  std::vector<const OutageEvent*> sorted;
  for (const auto& e : events) sorted.push_back(&e);
  std::stable_sort(sorted.begin(), sorted.end(), [](const OutageEvent* a, const OutageEvent* b) {
    return a->start < b->start;
  });
  std::vector<SystemRun> runs;
  for (const OutageEvent* e : sorted) {
    if (!runs.empty() && e->start <= runs.back().end + 1) {
      SystemRun& r = runs.back();
      r.end = std::max(r.end, e->end);
      r.flagged = std::min(r.flagged, e->flagged);
      r.peak = std::max(r.peak, e->peak);
      if (std::find(r.metrics.begin(), r.metrics.end(), e->metric) == r.metrics.end()) r.metrics.push_back(e->metric);
    } else {
      runs.push_back({e->start, e->flagged, e->end, e->peak, {e->metric}});
    }
  }
  return runs;
}

// Per-timestamp flag: true from an event's flagged minute to its end.
inline std::vector<std::uint8_t> flag_series(const ProbabilitySeries& s, std::span<const OutageEvent> events) {
  std::vector<std::uint8_t> flags(s.timestamps.size(), 0);
  for (const auto& e : events) {
    if (e.metric != s.metric) continue;
    auto lo = std::lower_bound(s.timestamps.begin(), s.timestamps.end(), e.flagged);
    auto hi = std::upper_bound(s.timestamps.begin(), s.timestamps.end(), e.end);
    for (auto it = lo; it < hi; ++it) flags[static_cast<std::size_t>(it - s.timestamps.begin())] = 1;
  }
  return flags;
}

inline nlohmann::json event_to_json(const OutageEvent& e) {
  return {{"metric", e.metric}, {"start", e.start * 60}, {"flagged", e.flagged * 60}, {"end", e.end * 60},
          {"peak", e.peak}};
}

}  // namespace tailcast
