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

// Synthetic scenarios: metric frames, alert logs and outage timelines.
//
// Every metric is offset + diurnal sinusoid + AR(1) noise. A fault adds a
// linear ramp followed by a plateau. Precursor metrics start ramping
// `lead` minutes before the QoS metrics they affect; QoS impact starts at
// B. A static rule per metric (default: offset + amplitude + 6 stationary
// standard deviations) fires an alert on crossing, and again every
// `alert_refire` minutes while the metric stays above it. The baseline
// detection time C of an outage is the first minute an affected QoS metric
// is above its rule; D is the last minute of the fault.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tailcast/error.hpp"
#include "tailcast/eval.hpp"
#include "tailcast/ingest.hpp"
#include "tailcast/labeling.hpp"
#include "tailcast/rng.hpp"

namespace tailcast {

struct BaseSignal {
  double offset = 50.0;
  double diurnal_amp = 1.5;  // in stationary standard deviations
  double ar = 0.8;
  double sigma = 1.0;        // innovation standard deviation
  double phase = 0.0;

  double stationary_sd() const { return sigma / std::sqrt(1.0 - ar * ar); }
};

struct FaultSpec {
  std::int64_t start = 0;  // B, minutes from the scenario start
  std::size_t ramp = 40;
  std::size_t plateau = 40;
  double magnitude = 14.0;            // QoS shift, stationary sd units
  double precursor_magnitude = 10.0;  // precursor shift, stationary sd units
  std::size_t lead = 20;
  std::vector<std::size_t> qos;         // affected QoS metric indices
  std::vector<std::size_t> precursors;  // affected non-QoS metric indices

  std::size_t length() const { return ramp + plateau; }
};

// Faults on a regular cadence with jitter, each hitting one QoS metric in
// turn together with that metric's two precursors.
struct FaultSchedule {
  std::size_t every = 720;
  std::size_t jitter = 120;
  std::int64_t first = 600;
  std::int64_t until = -1;  // exclusive bound on B; -1 means the whole duration
  std::size_t ramp_min = 30, ramp_max = 45;
  std::size_t plateau_min = 30, plateau_max = 50;
  double magnitude_min = 12.0, magnitude_max = 16.0;
  double precursor_min = 8.0, precursor_max = 12.0;
  std::size_t lead = 20;
};

struct ScenarioConfig {
  std::size_t n_metrics = 8;
  std::size_t n_qos = 2;
  std::size_t duration = 32 * 1440;
  std::int64_t start_minute = 28'400'000;  // epoch minute (late 2023)
  std::vector<BaseSignal> base;            // empty: derived from the seed
  std::vector<FaultSpec> faults;
  std::optional<FaultSchedule> schedule;
  std::vector<double> alert_thresholds;    // empty: default rule per metric
  double rule_sd = 6.0;
  std::size_t alert_refire = 5;
  double magnitude_scale = 1.0;
  std::uint64_t seed = 0;
};

inline std::string metric_name(const ScenarioConfig& cfg, std::size_t m) {
  return m < cfg.n_qos ? "qos" + std::to_string(m) : "m" + std::to_string(m - cfg.n_qos);
}

// QoS metrics alternate utilization-like / error-like; the rest likewise.
inline MetricSchema scenario_schema(const ScenarioConfig& cfg) {
  MetricSchema s;
  for (std::size_t m = 0; m < cfg.n_metrics; ++m) {
    const std::size_t k = m < cfg.n_qos ? m : m - cfg.n_qos;
    s.metrics.push_back({metric_name(cfg, m),
                         k % 2 == 0 ? MetricCategory::kUtilizationLike : MetricCategory::kErrorLike, m < cfg.n_qos});
  }
  return s;
}

// Precursors of QoS metric q: non-QoS metrics 2q and 2q+1, when present.
inline std::vector<std::size_t> precursors_of(const ScenarioConfig& cfg, std::size_t q) {
  std::vector<std::size_t> out;
  for (std::size_t k : {2 * q, 2 * q + 1}) {
    if (cfg.n_qos + k < cfg.n_metrics) out.push_back(cfg.n_qos + k);
  }
  return out;
}

inline std::vector<BaseSignal> resolved_base(const ScenarioConfig& cfg) {
  if (!cfg.base.empty()) return cfg.base;
  Rng rng = Rng(cfg.seed).split(11);
  std::vector<BaseSignal> out;
  for (std::size_t m = 0; m < cfg.n_metrics; ++m) {
    BaseSignal b;
    b.offset = rng.uniform(20.0, 80.0);
    b.diurnal_amp = rng.uniform(1.0, 2.0);
    b.ar = rng.uniform(0.6, 0.9);
    b.sigma = rng.uniform(0.5, 2.0);
    b.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    out.push_back(b);
  }
  return out;
}

inline std::vector<FaultSpec> resolved_faults(const ScenarioConfig& cfg) {
  std::vector<FaultSpec> out = cfg.faults;
  if (cfg.schedule) {
    const FaultSchedule& s = *cfg.schedule;
    Rng rng = Rng(cfg.seed).split(23);
    const std::int64_t until = s.until < 0 ? static_cast<std::int64_t>(cfg.duration) : s.until;
    std::size_t k = 0;
    for (std::int64_t b = s.first; b < until; b += static_cast<std::int64_t>(s.every), ++k) {
      FaultSpec f;
      const auto jitter = static_cast<std::int64_t>(rng.below(2 * s.jitter + 1)) - static_cast<std::int64_t>(s.jitter);
      f.start = std::max<std::int64_t>(b + jitter, static_cast<std::int64_t>(s.lead));
      f.ramp = s.ramp_min + static_cast<std::size_t>(rng.below(s.ramp_max - s.ramp_min + 1));
      f.plateau = s.plateau_min + static_cast<std::size_t>(rng.below(s.plateau_max - s.plateau_min + 1));
      f.magnitude = rng.uniform(s.magnitude_min, s.magnitude_max);
      f.precursor_magnitude = rng.uniform(s.precursor_min, s.precursor_max);
      f.lead = s.lead;
      const std::size_t q = k % cfg.n_qos;
      f.qos = {q};
      f.precursors = precursors_of(cfg, q);
      if (f.start + static_cast<std::int64_t>(f.length()) > static_cast<std::int64_t>(cfg.duration)) break;
      out.push_back(std::move(f));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const FaultSpec& a, const FaultSpec& b) { return a.start < b.start; });
  return out;
}

inline void validate_scenario(const ScenarioConfig& cfg) {
  require(cfg.n_qos >= 1 && cfg.n_qos <= cfg.n_metrics, ErrorCode::kInvalidConfig, "need 1 <= n_qos <= n_metrics");
  require(cfg.duration >= 2, ErrorCode::kInvalidConfig, "duration must be at least 2 minutes");
  require(cfg.alert_refire >= 1, ErrorCode::kInvalidConfig, "alert_refire must be >= 1");
  require(cfg.magnitude_scale > 0.0, ErrorCode::kInvalidConfig, "magnitude_scale must be positive");
  require(cfg.base.empty() || cfg.base.size() == cfg.n_metrics, ErrorCode::kInvalidConfig,
          "base must list every metric");
  require(cfg.alert_thresholds.empty() || cfg.alert_thresholds.size() == cfg.n_metrics, ErrorCode::kInvalidConfig,
          "alert_thresholds must list every metric");
  for (const auto& b : cfg.base) {
    require(b.ar >= 0.0 && b.ar < 1.0, ErrorCode::kInvalidConfig, "AR coefficient must lie in [0, 1)");
    require(b.sigma > 0.0, ErrorCode::kInvalidConfig, "noise sigma must be positive");
  }
  if (cfg.schedule) {
    const auto& s = *cfg.schedule;
    require(s.every >= 1 && s.ramp_min >= 1 && s.ramp_min <= s.ramp_max && s.plateau_min <= s.plateau_max &&
                s.magnitude_min <= s.magnitude_max && s.precursor_min <= s.precursor_max,
            ErrorCode::kInvalidConfig, "inconsistent fault schedule");
  }
  const auto faults = resolved_faults(cfg);
  // Busy spans per metric must not overlap.
  std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> busy(cfg.n_metrics);
  for (const auto& f : faults) {
    require(f.ramp >= 1, ErrorCode::kInvalidConfig, "fault ramp must be >= 1");
    require(!f.qos.empty(), ErrorCode::kInvalidConfig, "fault must affect a QoS metric");
    require(f.start >= static_cast<std::int64_t>(f.lead) &&
                f.start + static_cast<std::int64_t>(f.length()) <= static_cast<std::int64_t>(cfg.duration),
            ErrorCode::kInvalidConfig, "fault must lie inside the scenario");
    const std::int64_t end = f.start + static_cast<std::int64_t>(f.length());
    for (std::size_t q : f.qos) {
      require(q < cfg.n_qos, ErrorCode::kInvalidConfig, "fault QoS index out of range");
      busy[q].push_back({f.start, end});
    }
    for (std::size_t p : f.precursors) {
      require(p >= cfg.n_qos && p < cfg.n_metrics, ErrorCode::kInvalidConfig, "precursor index out of range");
      busy[p].push_back({f.start - static_cast<std::int64_t>(f.lead), end});
    }
  }
  for (auto& spans : busy) {
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i) {
      require(spans[i].first >= spans[i - 1].second, ErrorCode::kInvalidConfig, "faults overlap on a metric");
    }
  }
}

struct Scenario {
  MetricSchema schema;
  MetricFrame raw;
  std::vector<AlertRecord> alerts;
  std::vector<GroundTruthOutage> truth;
  std::vector<FaultSpec> faults;
  std::vector<double> alert_thresholds;
};

inline std::vector<double> default_thresholds(const ScenarioConfig& cfg, const std::vector<BaseSignal>& base) {
  std::vector<double> out;
  for (const auto& b : base) {
    const double sd = b.stationary_sd();
    out.push_back(b.offset + b.diurnal_amp * sd + cfg.rule_sd * sd);
  }
  return out;
}

// Ramp-then-plateau shape at offset `d` minutes from the ramp start.
inline double fault_shape(std::int64_t d, std::size_t ramp, std::size_t length) {
  if (d < 0 || d >= static_cast<std::int64_t>(length)) return 0.0;
  if (d < static_cast<std::int64_t>(ramp)) return static_cast<double>(d + 1) / static_cast<double>(ramp);
  return 1.0;
}

inline Scenario generate(const ScenarioConfig& cfg) {
  validate_scenario(cfg);
  const auto base = resolved_base(cfg);
  Scenario sc;
  sc.schema = scenario_schema(cfg);
  sc.faults = resolved_faults(cfg);
  sc.alert_thresholds = cfg.alert_thresholds.empty() ? default_thresholds(cfg, base) : cfg.alert_thresholds;

  const std::size_t n = cfg.duration, m_count = cfg.n_metrics;
  std::vector<double> values(n * m_count);
  const Rng root(cfg.seed);
  for (std::size_t m = 0; m < m_count; ++m) {
    const BaseSignal& b = base[m];
    const double sd = b.stationary_sd();
    Rng rng = root.split(1000 + m);
    double e = sd * rng.normal();
    for (std::size_t t = 0; t < n; ++t) {
      if (t > 0) e = b.ar * e + b.sigma * rng.normal();
      const double minute_of_day = static_cast<double>((cfg.start_minute + static_cast<std::int64_t>(t)) % 1440);
      const double diurnal = b.diurnal_amp * sd * std::sin(2.0 * std::numbers::pi * minute_of_day / 1440.0 + b.phase);
      values[t * m_count + m] = b.offset + diurnal + e;
    }
  }
  for (const auto& f : sc.faults) {
    for (std::size_t q : f.qos) {
      const double shift = cfg.magnitude_scale * f.magnitude * base[q].stationary_sd();
      for (std::size_t d = 0; d < f.length(); ++d) {
        const auto t = static_cast<std::size_t>(f.start) + d;
        values[t * m_count + q] += shift * fault_shape(static_cast<std::int64_t>(d), f.ramp, f.length());
      }
    }
    for (std::size_t p : f.precursors) {
      const double shift = cfg.magnitude_scale * f.precursor_magnitude * base[p].stationary_sd();
      const std::size_t len = f.length() + f.lead;
      const auto t0 = static_cast<std::size_t>(f.start - static_cast<std::int64_t>(f.lead));
      for (std::size_t d = 0; d < len; ++d) {
        values[(t0 + d) * m_count + p] += shift * fault_shape(static_cast<std::int64_t>(d), f.ramp, len);
      }
    }
  }

  std::vector<std::int64_t> ts(n);
  for (std::size_t t = 0; t < n; ++t) ts[t] = cfg.start_minute + static_cast<std::int64_t>(t);

  // Alerts, in time order and metric order within a minute.
  std::vector<std::int64_t> last_alert(m_count, std::numeric_limits<std::int64_t>::min() / 2);
  std::vector<std::uint8_t> above(m_count, 0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t m = 0; m < m_count; ++m) {
      const bool now = values[t * m_count + m] > sc.alert_thresholds[m];
      const auto tt = static_cast<std::int64_t>(t);
      if (now && (!above[m] || tt - last_alert[m] >= static_cast<std::int64_t>(cfg.alert_refire))) {
        sc.alerts.push_back({ts[t], "rule:" + metric_name(cfg, m), m < cfg.n_qos ? Severity::kHigh : Severity::kMedium,
                             "svc"});
        last_alert[m] = tt;
      }
      above[m] = now ? 1 : 0;
    }
  }

  for (const auto& f : sc.faults) {
    GroundTruthOutage g;
    g.impact_start = ts[static_cast<std::size_t>(f.start)];
    g.end = ts[static_cast<std::size_t>(f.start) + f.length() - 1];
    for (std::size_t q : f.qos) g.metrics.push_back(metric_name(cfg, q));
    std::optional<std::int64_t> c;
    for (std::size_t d = 0; d < f.length() && !c; ++d) {
      const auto t = static_cast<std::size_t>(f.start) + d;
      for (std::size_t q : f.qos) {
        if (values[t * m_count + q] > sc.alert_thresholds[q]) c = ts[t];
      }
    }
    // A fault that never trips the rule, or trips it at B, has no lead to measure.
    if (c && *c > g.impact_start) {
      g.baseline_detect = *c;
      sc.truth.push_back(std::move(g));
    }
  }
  sc.raw = MetricFrame(std::move(ts), sc.schema.metrics, std::move(values));
  return sc;
}

// Proxy-label density over the first train_frac of the scenario, with tau
// from the same rows.
inline double scenario_label_density(const Scenario& sc, const LabelParams& params, double train_frac) {
  const auto train_rows = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(sc.raw.rows())));
  const auto qos = sc.raw.qos_names();
  const auto tau = compute_thresholds(sc.raw, qos, params.percentile, train_rows);
  const auto labels = generate_proxy_labels(sc.raw, qos, sc.alerts, tau, params);
  return label_density(labels, train_rows);
}

struct LabelRegime {
  double lo = 0.04;
  double hi = 0.08;
};

// Searches fault cadence and magnitude scaling for a configuration whose
// training label density falls in [lo, hi]. Among the candidates inside the
// band the one closest to its middle wins; candidates are tried in a fixed
// order, so the result is deterministic.
inline ScenarioConfig make_label_regime(const ScenarioConfig& cfg, const LabelParams& params = {},
                                        double train_frac = 0.6, LabelRegime band = {}) {
  if (cfg.faults.empty() && !cfg.schedule) fail(ErrorCode::kUnsatisfiable, "scenario has no faults");
  const double target = 0.5 * (band.lo + band.hi);
  const std::vector<double> cadence = cfg.schedule ? std::vector<double>{1.0, 0.85, 1.2, 0.7, 1.45, 0.55, 1.8, 0.45, 2.2}
                                                   : std::vector<double>{1.0};
  const std::vector<double> scales{1.0, 1.15, 0.9, 1.3, 0.8, 1.5, 0.7};
  std::optional<ScenarioConfig> best;
  double best_gap = 0.0;
  for (double c : cadence) {
    for (double s : scales) {
      ScenarioConfig trial = cfg;
      trial.magnitude_scale = cfg.magnitude_scale * s;
      if (trial.schedule) {
        trial.schedule->every = std::max<std::size_t>(
            static_cast<std::size_t>(std::llround(static_cast<double>(cfg.schedule->every) * c)),
            cfg.schedule->ramp_max + cfg.schedule->plateau_max + cfg.schedule->lead + 2 * cfg.schedule->jitter + 1);
      }
      double density = 0.0;
      try {
        density = scenario_label_density(generate(trial), params, train_frac);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kInvalidConfig) continue;
        throw;
      }
      if (density < band.lo || density > band.hi) continue;
      const double gap = std::abs(density - target);
      if (!best || gap < best_gap) {
        best = trial;
        best_gap = gap;
      }
    }
    if (best) break;
  }
  if (!best) fail(ErrorCode::kUnsatisfiable, "no fault cadence or magnitude puts the label density in range");
  return *best;
}

// ---------------------------------------------------------------------------
// Named scenarios.

inline ScenarioConfig default_scenario(std::uint64_t seed = 0) {
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.schedule = FaultSchedule{};
  return cfg;
}

// ---------------------------------------------------------------------------
// JSON.

inline nlohmann::json scenario_to_json(const ScenarioConfig& cfg) {
  nlohmann::json j;
  j["n_metrics"] = cfg.n_metrics;
  j["n_qos"] = cfg.n_qos;
  j["duration"] = cfg.duration;
  j["start_minute"] = cfg.start_minute;
  j["rule_sd"] = cfg.rule_sd;
  j["alert_refire"] = cfg.alert_refire;
  j["magnitude_scale"] = cfg.magnitude_scale;
  j["seed"] = cfg.seed;
  if (!cfg.alert_thresholds.empty()) j["alert_thresholds"] = cfg.alert_thresholds;
  if (!cfg.base.empty()) {
    j["base"] = nlohmann::json::array();
    for (const auto& b : cfg.base) {
      j["base"].push_back({{"offset", b.offset}, {"diurnal_amp", b.diurnal_amp}, {"ar", b.ar}, {"sigma", b.sigma},
                           {"phase", b.phase}});
    }
  }
  j["faults"] = nlohmann::json::array();
  for (const auto& f : cfg.faults) {
    j["faults"].push_back({{"start", f.start}, {"ramp", f.ramp}, {"plateau", f.plateau}, {"magnitude", f.magnitude},
                           {"precursor_magnitude", f.precursor_magnitude}, {"lead", f.lead}, {"qos", f.qos},
                           {"precursors", f.precursors}});
  }
  if (cfg.schedule) {
    const auto& s = *cfg.schedule;
    j["schedule"] = {{"every", s.every}, {"jitter", s.jitter}, {"first", s.first}, {"until", s.until},
                     {"ramp_min", s.ramp_min}, {"ramp_max", s.ramp_max}, {"plateau_min", s.plateau_min},
                     {"plateau_max", s.plateau_max}, {"magnitude_min", s.magnitude_min},
                     {"magnitude_max", s.magnitude_max}, {"precursor_min", s.precursor_min},
                     {"precursor_max", s.precursor_max}, {"lead", s.lead}};
  }
  return j;
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  ScenarioConfig cfg;
  try {
    cfg.n_metrics = j.value("n_metrics", cfg.n_metrics);
    cfg.n_qos = j.value("n_qos", cfg.n_qos);
    cfg.duration = j.value("duration", cfg.duration);
    cfg.start_minute = j.value("start_minute", cfg.start_minute);
    cfg.rule_sd = j.value("rule_sd", cfg.rule_sd);
    cfg.alert_refire = j.value("alert_refire", cfg.alert_refire);
    cfg.magnitude_scale = j.value("magnitude_scale", cfg.magnitude_scale);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("alert_thresholds")) cfg.alert_thresholds = j["alert_thresholds"].get<std::vector<double>>();
    if (j.contains("base")) {
      for (const auto& b : j["base"]) {
        BaseSignal s;
        s.offset = b.value("offset", s.offset);
        s.diurnal_amp = b.value("diurnal_amp", s.diurnal_amp);
        s.ar = b.value("ar", s.ar);
        s.sigma = b.value("sigma", s.sigma);
        s.phase = b.value("phase", s.phase);
        cfg.base.push_back(s);
      }
    }
    if (j.contains("faults")) {
      for (const auto& f : j["faults"]) {
        FaultSpec s;
        s.start = f.at("start").get<std::int64_t>();
        s.ramp = f.value("ramp", s.ramp);
        s.plateau = f.value("plateau", s.plateau);
        s.magnitude = f.value("magnitude", s.magnitude);
        s.precursor_magnitude = f.value("precursor_magnitude", s.precursor_magnitude);
        s.lead = f.value("lead", s.lead);
        s.qos = f.value("qos", std::vector<std::size_t>{0});
        if (f.contains("precursors")) {
          s.precursors = f["precursors"].get<std::vector<std::size_t>>();
        } else {
          for (std::size_t q : s.qos) {
            for (std::size_t p : precursors_of(cfg, q)) s.precursors.push_back(p);
          }
        }
        cfg.faults.push_back(std::move(s));
      }
    }
    if (j.contains("schedule") && !j["schedule"].is_null()) {
      const auto& o = j["schedule"];
      FaultSchedule s;
      s.every = o.value("every", s.every);
      s.jitter = o.value("jitter", s.jitter);
      s.first = o.value("first", s.first);
      s.until = o.value("until", s.until);
      s.ramp_min = o.value("ramp_min", s.ramp_min);
      s.ramp_max = o.value("ramp_max", s.ramp_max);
      s.plateau_min = o.value("plateau_min", s.plateau_min);
      s.plateau_max = o.value("plateau_max", s.plateau_max);
      s.magnitude_min = o.value("magnitude_min", s.magnitude_min);
      s.magnitude_max = o.value("magnitude_max", s.magnitude_max);
      s.precursor_min = o.value("precursor_min", s.precursor_min);
      s.precursor_max = o.value("precursor_max", s.precursor_max);
      s.lead = o.value("lead", s.lead);
      cfg.schedule = s;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("scenario: ") + e.what());
  }
  validate_scenario(cfg);
  return cfg;
}

}  // namespace tailcast
