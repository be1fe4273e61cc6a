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

// Self-contained model bundle: parameters, configuration, normalizer,
// labeling parameters, the raw training distribution of every QoS metric
// (so tau can be re-derived for any percentile) and the decision settings.
//
// On disk it is one JSON document:
//
//   {"format": "tailcast-checkpoint", "version": 1,
//    "config": {...}, "training": {...}, "labeling": {...},
//    "normalization": {...}, "metrics": [...], "qos_reference": {...},
//    "decision": {...}, "params": {name: {"shape": [r, c], "values": [...]}}}
//
// Doubles are written with round-trip precision, so save -> load -> save
// reproduces the same bytes.

#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tailcast/error.hpp"
#include "tailcast/ingest.hpp"
#include "tailcast/labeling.hpp"
#include "tailcast/model.hpp"
#include "tailcast/train.hpp"

namespace tailcast {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "tailcast-checkpoint";

struct DecisionConfig {
  double percentile = 95.0;            // T
  std::map<std::string, double> tau;   // raw units, per QoS metric
  std::optional<double> theta;         // unset until calibrated
  std::optional<double> youden_j;
  std::size_t sustain = 15;            // D, minutes
  std::string trigger = "any_metric";

  void validate() const {
    require(percentile > 0.0 && percentile < 100.0, ErrorCode::kInvalidConfig, "T must lie in (0, 100)");
    require(sustain >= 1, ErrorCode::kInvalidConfig, "sustain must be >= 1");
    require(!theta || (*theta >= 0.0 && *theta <= 1.0), ErrorCode::kInvalidConfig, "theta must lie in [0, 1]");
    for (const auto& [name, v] : tau) {
      require(std::isfinite(v), ErrorCode::kInvalidConfig, "tau for '" + name + "' is not finite");
    }
    require(trigger == "any_metric", ErrorCode::kInvalidConfig, "trigger policy must be any_metric");
  }

  bool operator==(const DecisionConfig&) const = default;
};

inline nlohmann::json decision_to_json(const DecisionConfig& d) {
  nlohmann::json j{{"percentile", d.percentile}, {"tau", d.tau}, {"sustain", d.sustain}, {"trigger", d.trigger}};
  j["theta"] = d.theta ? nlohmann::json(*d.theta) : nlohmann::json(nullptr);
  j["youden_j"] = d.youden_j ? nlohmann::json(*d.youden_j) : nlohmann::json(nullptr);
  return j;
}

inline DecisionConfig decision_from_json(const nlohmann::json& j) {
  DecisionConfig d;
  d.percentile = j.at("percentile").get<double>();
  d.tau = j.at("tau").get<std::map<std::string, double>>();
  if (!j.at("theta").is_null()) d.theta = j.at("theta").get<double>();
  if (!j.at("youden_j").is_null()) d.youden_j = j.at("youden_j").get<double>();
  d.sustain = j.at("sustain").get<std::size_t>();
  d.trigger = j.at("trigger").get<std::string>();
  return d;
}

// Settings of the run that produced the bundle; kept so `calibrate` and
// `evaluate` can rebuild the same splits.
struct TrainingSettings {
  double train_frac = 0.6;
  double val_frac = 0.1;
  std::size_t stride = 5;
  std::size_t calibration_stride = 5;
  TrainOptions options;

  bool operator==(const TrainingSettings& o) const {
    return train_frac == o.train_frac && val_frac == o.val_frac && stride == o.stride &&
           calibration_stride == o.calibration_stride && train_options_to_json(options) == train_options_to_json(o.options);
  }
};

inline nlohmann::json training_settings_to_json(const TrainingSettings& s) {
  nlohmann::json j = train_options_to_json(s.options);
  j["train_frac"] = s.train_frac;
  j["val_frac"] = s.val_frac;
  j["stride"] = s.stride;
  j["calibration_stride"] = s.calibration_stride;
  return j;
}

inline TrainingSettings training_settings_from_json(const nlohmann::json& j, TrainingSettings s = {}) {
  try {
    s.options = train_options_from_json(j, s.options);
    s.train_frac = j.value("train_frac", s.train_frac);
    s.val_frac = j.value("val_frac", s.val_frac);
    s.stride = j.value("stride", s.stride);
    s.calibration_stride = j.value("calibration_stride", s.calibration_stride);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("training settings: ") + e.what());
  }
  return s;
}

struct ModelBundle {
  ModelConfig config;
  ModelParams params;
  TrainingSettings training;
  LabelParams labeling;
  NormalizationStats normalization;
  std::vector<MetricColumn> metrics;  // input columns in model order
  // Sorted raw training values per QoS metric.
  std::map<std::string, std::vector<double>> qos_reference;
  DecisionConfig decision;

  // Raw-unit tau for percentile T, from the stored training distribution.
  double tau_raw(const std::string& metric, double T) const {
    auto it = qos_reference.find(metric);
    if (it == qos_reference.end()) fail(ErrorCode::kMissingQosMetric, "no reference values for '" + metric + "'");
    return percentile_sorted(it->second, T);
  }

  std::map<std::string, double> tau_map(double T) const {
    std::map<std::string, double> out;
    for (const auto& q : config.qos) out[q] = tau_raw(q, T);
    return out;
  }

  // Tau in the normalized units the mixtures live in (not clamped).
  std::vector<double> tau_normalized(const std::map<std::string, double>& tau) const {
    std::vector<double> out;
    for (const auto& q : config.qos) {
      auto it = tau.find(q);
      if (it == tau.end()) fail(ErrorCode::kMissingQosMetric, "no tau for '" + q + "'");
      out.push_back(normalization.scale(q, it->second));
    }
    return out;
  }

  // Replaces T and re-derives tau; nothing else changes.
  void set_percentile(double T) {
    decision.percentile = T;
    decision.tau = tau_map(T);
  }
};

inline nlohmann::json bundle_to_json(ModelBundle& b) {
  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& m : b.metrics) {
    metrics.push_back({{"name", m.name}, {"category", category_name(m.category)}, {"is_qos", m.is_qos}});
  }
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = model_config_to_json(b.config);
  j["training"] = training_settings_to_json(b.training);
  j["labeling"] = label_params_to_json(b.labeling);
  j["normalization"] = normalization_to_json(b.normalization);
  j["metrics"] = std::move(metrics);
  j["qos_reference"] = b.qos_reference;
  j["decision"] = decision_to_json(b.decision);
  j["params"] = params_to_json(b.params);
  return j;
}

inline ModelBundle bundle_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
    fail(ErrorCode::kCorruptFile, "not a tailcast checkpoint");
  }
  const auto version = j.value("version", -1);
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kVersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                          std::to_string(kCheckpointVersion));
  }
  ModelBundle b;
  try {
    b.config = model_config_from_json(j.at("config"));
    b.config.validate();
    b.training = training_settings_from_json(j.at("training"));
    b.labeling = label_params_from_json(j.at("labeling"));
    b.normalization = normalization_from_json(j.at("normalization"));
    for (const auto& m : j.at("metrics")) {
      b.metrics.push_back({m.at("name").get<std::string>(), parse_category(m.at("category").get<std::string>()),
                           m.at("is_qos").get<bool>()});
    }
    b.qos_reference = j.at("qos_reference").get<std::map<std::string, std::vector<double>>>();
    b.decision = decision_from_json(j.at("decision"));
    b.params = params_from_json(j.at("params"), b.config);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorruptFile, std::string("checkpoint: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kVersionMismatch || e.code() == ErrorCode::kCorruptFile) throw;
    fail(ErrorCode::kCorruptFile, std::string("checkpoint: ") + e.what());
  }
  if (b.metrics.size() != b.config.n_metrics) fail(ErrorCode::kCorruptFile, "metric list does not match config");
  return b;
}

inline void save_checkpoint(ModelBundle& b, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path);
  out << bundle_to_json(b).dump() << '\n';
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + path);
}

inline ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kCorruptFile, path + ": " + e.what());
  }
  return bundle_from_json(j);
}

}  // namespace tailcast
