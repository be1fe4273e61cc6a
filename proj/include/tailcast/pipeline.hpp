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

// End-to-end wiring shared by the CLI and the experiments: preparation,
// fitting, calibration and evaluation of a bundle.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tailcast/bundle.hpp"
#include "tailcast/error.hpp"
#include "tailcast/eval.hpp"
#include "tailcast/infer.hpp"
#include "tailcast/ingest.hpp"
#include "tailcast/labeling.hpp"
#include "tailcast/model.hpp"
#include "tailcast/train.hpp"

namespace tailcast {

struct PipelineConfig {
  ModelConfig model;  // n_metrics and qos are filled from the data
  TrainingSettings training;
  LabelParams labeling;
  SelectionConfig selection;
  std::size_t sustain = 15;
};

inline nlohmann::json pipeline_config_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["model"] = model_config_to_json(c.model);
  j["training"] = training_settings_to_json(c.training);
  j["labeling"] = label_params_to_json(c.labeling);
  j["selection"] = {{"var_floor", c.selection.var_floor},
                    {"corr_ceiling", c.selection.corr_ceiling},
                    {"allowlist", c.selection.allowlist}};
  j["sustain"] = c.sustain;
  return j;
}

// Every section is optional; missing keys keep their defaults.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, PipelineConfig c = {}) {
  try {
    if (j.contains("model")) c.model = model_config_from_json(j["model"], c.model);
    if (j.contains("training")) c.training = training_settings_from_json(j["training"], c.training);
    if (j.contains("labeling")) {
      const auto& l = j["labeling"];
      c.labeling.window = l.value("window", c.labeling.window);
      c.labeling.percentile = l.value("percentile", c.labeling.percentile);
      c.labeling.alpha = l.value("alpha", c.labeling.alpha);
      c.labeling.min_alerts = l.value("min_alerts", c.labeling.min_alerts);
    }
    if (j.contains("selection")) {
      const auto& s = j["selection"];
      c.selection.var_floor = s.value("var_floor", c.selection.var_floor);
      c.selection.corr_ceiling = s.value("corr_ceiling", c.selection.corr_ceiling);
      if (s.contains("allowlist")) c.selection.allowlist = s["allowlist"].get<std::vector<std::string>>();
    }
    c.sustain = j.value("sustain", c.sustain);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("pipeline config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Preparation.

struct Prepared {
  MetricFrame raw;  // missing values handled, features selected
  std::shared_ptr<const MetricFrame> norm;
  NormalizationStats stats;
  std::size_t train_rows = 0;
  std::map<std::string, double> tau;
  std::vector<ProxyLabelSeries> labels;
  MissingReport missing;
  std::vector<std::string> dropped_features;
};

inline std::size_t train_row_count(std::size_t rows, double train_frac) {
  return static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(rows) + 1e-9));
}

// Missing values, feature selection, normalizer and tau from the training
// rows, proxy labels over the whole frame.
inline Prepared prepare(const MetricFrame& loaded, std::span<const AlertRecord> alerts, const SelectionConfig& selection,
                        const LabelParams& labeling, double train_frac) {
  Prepared p;
  MetricFrame clean = handle_missing(loaded, &p.missing);
  p.raw = select_features(clean, selection, &p.dropped_features);
  p.train_rows = train_row_count(p.raw.rows(), train_frac);
  require(p.train_rows > 0, ErrorCode::kEmptySplit, "no training rows");
  p.stats = fit_normalizer(p.raw.slice_rows(0, p.train_rows));
  p.norm = std::make_shared<const MetricFrame>(normalize(p.raw, p.stats));
  const auto qos = p.raw.qos_names();
  require(!qos.empty(), ErrorCode::kMissingQosMetric, "no QoS metric in the data");
  p.tau = compute_thresholds(p.raw, qos, labeling.percentile, p.train_rows);
  p.labels = generate_proxy_labels(p.raw, qos, alerts, p.tau, labeling);
  return p;
}

// Sorted raw training values per QoS metric.
inline std::map<std::string, std::vector<double>> qos_reference(const Prepared& p) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& q : p.raw.qos_names()) {
    const std::size_t c = p.raw.require_column(q);
    std::vector<double> v;
    for (std::size_t r = 0; r < p.train_rows; ++r) v.push_back(p.raw.at(r, c));
    std::sort(v.begin(), v.end());
    out[q] = std::move(v);
  }
  return out;
}

// Loads a raw frame for a bundle: same columns, same order, same
// missing-value policy, normalized with the bundle's statistics.
inline MetricFrame frame_for_bundle(const MetricFrame& loaded, const ModelBundle& b) {
  std::vector<std::size_t> idx;
  for (const auto& m : b.metrics) {
    auto c = loaded.column_index(m.name);
    if (!c) fail(ErrorCode::kMissingColumn, "data lacks model input '" + m.name + "'");
    idx.push_back(*c);
  }
  return handle_missing(loaded.select_columns(idx));
}

inline MetricSchema bundle_schema(const ModelBundle& b) { return {b.metrics, {}}; }

// ---------------------------------------------------------------------------
// Fitting.

struct Experiment {
  Prepared prep;
  SampleSet samples;  // stride 1
  Splits splits;      // train/val thinned by the training stride
  SampleSet calibration;
  ModelBundle bundle;
  TrainReport report;
};

inline Splits make_splits(const Prepared& prep, const ModelConfig& cfg, const TrainingSettings& ts,
                          SampleSet* all = nullptr) {
  const auto qos = prep.raw.qos_names();
  SampleSet samples = build_dataset(prep.norm, prep.labels, qos, cfg.window, cfg.gamma, 1);
  Splits s = split_chronological(samples, ts.train_frac, ts.val_frac);
  if (all) *all = std::move(samples);
  return s;
}

inline ModelConfig resolve_model_config(ModelConfig cfg, const Prepared& prep) {
  cfg.n_metrics = prep.raw.cols();
  cfg.qos = prep.raw.qos_names();
  cfg.validate();
  return cfg;
}

// Pooled (metric-major) probabilities and labels of a forecast table.
struct Pooled {
  std::vector<double> probs;
  std::vector<std::uint8_t> labels;
};

inline ForecastTable forecast_samples(const ModelConfig& cfg, const SampleSet& set, const Forecaster& forecaster,
                                      std::size_t chunk = kScoreChunk) {
  ForecastTable table;
  std::vector<const double*> ptrs;
  for (std::size_t start = 0; start < set.size(); start += chunk) {
    const std::size_t end = std::min(set.size(), start + chunk);
    ptrs.clear();
    for (std::size_t i = start; i < end; ++i) {
      ptrs.push_back(set.x(i));
      table.timestamps.push_back(set.samples[i].t);
    }
    auto outs = forecaster(ptrs);
    require(outs.size() == end - start, ErrorCode::kShapeMismatch, "forecaster returned the wrong batch size");
    for (auto& o : outs) table.outputs.push_back(std::move(o));
  }
  require(cfg.n_metrics == set.frame->cols(), ErrorCode::kShapeMismatch, "sample width differs from the model");
  return table;
}

inline Pooled pool(const ModelConfig& cfg, const ForecastTable& table, std::span<const double> tau_norm,
                   const std::vector<std::vector<std::uint8_t>>& labels) {
  Pooled p;
  const auto series = probabilities(cfg, table, tau_norm);
  for (std::size_t y = 0; y < series.size(); ++y) {
    p.probs.insert(p.probs.end(), series[y].probs.begin(), series[y].probs.end());
    p.labels.insert(p.labels.end(), labels[y].begin(), labels[y].end());
  }
  return p;
}

// Labels per QoS metric as stored in the samples.
inline std::vector<std::vector<std::uint8_t>> sample_labels(const SampleSet& set, std::size_t n_qos) {
  std::vector<std::vector<std::uint8_t>> out(n_qos);
  for (const auto& s : set.samples) {
    for (std::size_t y = 0; y < n_qos; ++y) out[y].push_back(s.label[y]);
  }
  return out;
}

// Labels per QoS metric looked up in regenerated label series.
inline std::vector<std::vector<std::uint8_t>> lookup_labels(const SampleSet& set,
                                                            std::span<const ProxyLabelSeries> series,
                                                            std::span<const std::string> qos) {
  std::vector<std::vector<std::uint8_t>> out(qos.size());
  for (std::size_t y = 0; y < qos.size(); ++y) {
    const ProxyLabelSeries* ls = nullptr;
    for (const auto& s : series) {
      if (s.metric == qos[y]) ls = &s;
    }
    if (!ls) fail(ErrorCode::kMissingQosMetric, "no labels for '" + qos[y] + "'");
    for (const auto& s : set.samples) out[y].push_back(label_at(*ls, s.target_t) ? 1 : 0);
  }
  return out;
}

// Youden's J on training-split probabilities pooled across QoS metrics.
inline YoudenResult calibrate_bundle(ModelBundle& bundle, const SampleSet& calibration,
                                     const Forecaster& forecaster) {
  const auto table = forecast_samples(bundle.config, calibration, forecaster);
  const auto tau = bundle.tau_normalized(bundle.decision.tau);
  const Pooled p = pool(bundle.config, table, tau, sample_labels(calibration, bundle.config.qos.size()));
  const YoudenResult y = youden_threshold(p.probs, p.labels);
  bundle.decision.theta = y.theta;
  bundle.decision.youden_j = y.j;
  return y;
}

// Prepares the data, trains, and (optionally) calibrates.
inline Experiment fit(const MetricFrame& loaded, std::span<const AlertRecord> alerts, const PipelineConfig& pc,
                      bool calibrate = true, const EpochCallback& on_epoch = {}) {
  Experiment ex;
  ex.prep = prepare(loaded, alerts, pc.selection, pc.labeling, pc.training.train_frac);
  const ModelConfig cfg = resolve_model_config(pc.model, ex.prep);
  Splits full = make_splits(ex.prep, cfg, pc.training, &ex.samples);
  const std::size_t stride = std::max<std::size_t>(pc.training.stride, 1);
  ex.splits.train = thin(full.train, stride);
  ex.splits.val = thin(full.val, stride);
  ex.splits.test = std::move(full.test);
  ex.splits.dropped_for_leakage = full.dropped_for_leakage;
  ex.calibration = thin(full.train, std::max<std::size_t>(pc.training.calibration_stride, 1));

  TrainResult tr = train(cfg, ex.splits.train, ex.splits.val, pc.training.options, on_epoch);
  ex.report = tr.report;

  ModelBundle& b = ex.bundle;
  b.config = cfg;
  b.params = std::move(tr.params);
  b.training = pc.training;
  b.labeling = pc.labeling;
  b.normalization = ex.prep.stats;
  b.metrics = ex.prep.raw.metrics();
  b.qos_reference = qos_reference(ex.prep);
  b.decision.percentile = pc.labeling.percentile;
  b.decision.tau = ex.prep.tau;
  b.decision.sustain = pc.sustain;
  if (calibrate) calibrate_bundle(b, ex.calibration, bundle_forecaster(b));
  return ex;
}

// Rebuilds the preparation and splits a bundle was trained with, from the
// same raw data.
struct Reconstructed {
  Prepared prep;
  SampleSet calibration;
  SampleSet test;
};

inline Reconstructed reconstruct(const MetricFrame& loaded, std::span<const AlertRecord> alerts,
                                 const ModelBundle& b) {
  Reconstructed r;
  SelectionConfig keep_all;
  keep_all.var_floor = -1.0;
  keep_all.corr_ceiling = 2.0;
  MetricFrame selected = loaded;
  {
    std::vector<std::size_t> idx;
    for (const auto& m : b.metrics) {
      auto c = loaded.column_index(m.name);
      if (!c) fail(ErrorCode::kMissingColumn, "data lacks model input '" + m.name + "'");
      idx.push_back(*c);
    }
    selected = loaded.select_columns(idx);
  }
  LabelParams lp = b.labeling;
  lp.percentile = b.decision.percentile;
  r.prep = prepare(selected, alerts, keep_all, lp, b.training.train_frac);
  // Scoring uses the bundle's own statistics, so a mismatch means other data.
  require(r.prep.stats == b.normalization, ErrorCode::kInvalidConfig,
          "data does not reproduce the bundle's training statistics");
  Splits s = make_splits(r.prep, b.config, b.training);
  r.calibration = thin(s.train, std::max<std::size_t>(b.training.calibration_stride, 1));
  r.test = std::move(s.test);
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation.

// F1 on the test samples for each percentile T, with tau, labels and the
// Youden threshold all re-derived for T from cached forecasts.
inline std::map<double, double> f1_over_thresholds(const ModelBundle& b, const Prepared& prep,
                                                   std::span<const AlertRecord> alerts,
                                                   const ForecastTable& calibration_table,
                                                   const SampleSet& calibration, const ForecastTable& test_table,
                                                   const SampleSet& test, std::span<const double> percentiles) {
  std::map<double, double> out;
  const auto& qos = b.config.qos;
  for (double T : percentiles) {
    require(T > 0.0 && T < 100.0, ErrorCode::kInvalidConfig, "percentiles must lie in (0, 100)");
    const auto tau = b.tau_map(T);
    LabelParams lp = b.labeling;
    lp.percentile = T;
    const auto series = generate_proxy_labels(prep.raw, qos, alerts, tau, lp);
    const auto tau_norm = b.tau_normalized(tau);
    const Pooled cal = pool(b.config, calibration_table, tau_norm, lookup_labels(calibration, series, qos));
    const YoudenResult y = youden_threshold(cal.probs, cal.labels);
    const Pooled te = pool(b.config, test_table, tau_norm, lookup_labels(test, series, qos));
    out[T] = prf_at(te.probs, te.labels, y.theta).f1;
  }
  return out;
}

// Ground-truth outages whose [B, C] lies within the scored span.
inline std::vector<GroundTruthOutage> outages_within(std::span<const GroundTruthOutage> truth, std::int64_t first,
                                                     std::int64_t last) {
  std::vector<GroundTruthOutage> out;
  for (const auto& t : truth) {
    if (t.impact_start >= first && t.baseline_detect <= last) out.push_back(t);
  }
  return out;
}

struct Evaluation {
  EvalReport report;
  std::vector<ProbabilitySeries> test_series;
  std::vector<OutageEvent> events;
  Pooled test_pooled;
};

// Test-set evaluation of a calibrated bundle. Forecasts are computed once
// per split and reused for every percentile in `percentiles`.
inline Evaluation evaluate_bundle(const ModelBundle& b, const Prepared& prep, std::span<const AlertRecord> alerts,
                                  const SampleSet& calibration, const SampleSet& test,
                                  std::span<const GroundTruthOutage> truth, std::span<const double> percentiles,
                                  const Forecaster& forecaster) {
  require(b.decision.theta.has_value(), ErrorCode::kInvalidConfig, "bundle is not calibrated");
  require(!test.empty(), ErrorCode::kEmptySplit, "test split is empty");
  Evaluation ev;
  const ForecastTable test_table = forecast_samples(b.config, test, forecaster);
  const auto tau_norm = b.tau_normalized(b.decision.tau);
  ev.test_pooled = pool(b.config, test_table, tau_norm, sample_labels(test, b.config.qos.size()));
  ev.report.theta = *b.decision.theta;
  ev.report.auc_pr = auc_pr(ev.test_pooled.probs, ev.test_pooled.labels);
  ev.report.at_theta = prf_at(ev.test_pooled.probs, ev.test_pooled.labels, *b.decision.theta);
  if (!percentiles.empty()) {
    const ForecastTable cal_table = forecast_samples(b.config, calibration, forecaster);
    ev.report.f1_by_percentile =
        f1_over_thresholds(b, prep, alerts, cal_table, calibration, test_table, test, percentiles);
  }
  ev.test_series = probabilities(b.config, test_table, tau_norm);
  ev.events = detect_all(ev.test_series, *b.decision.theta, b.decision.sustain);
  if (!truth.empty()) {
    const auto within = outages_within(truth, test.samples.front().t, test.samples.back().t);
    ev.report.detection = mttd_reduction(ev.events, within);
  }
  return ev;
}

}  // namespace tailcast
