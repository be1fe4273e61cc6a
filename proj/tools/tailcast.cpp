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

// tailcast: generate, prepare, train, calibrate, predict, evaluate, ablate.
//
// Exit codes: 0 success, 2 usage or input error, 3 numeric failure,
// 4 calibration failure. OW_LOG=debug|info sets the stderr log level.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tailcast/tailcast.hpp"

namespace fs = std::filesystem;
using namespace tailcast;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Logging and exit codes.

enum class LogLevel { kInfo, kDebug };

LogLevel log_level() {
  const char* v = std::getenv("OW_LOG");
  return v && std::string(v) == "debug" ? LogLevel::kDebug : LogLevel::kInfo;
}

void log_info(const std::string& msg) { std::cerr << "[info] " << msg << '\n'; }

void log_debug(const std::string& msg) {
  if (log_level() == LogLevel::kDebug) std::cerr << "[debug] " << msg << '\n';
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSingleClass:
      return 4;
    case ErrorCode::kDivergedLoss:
    case ErrorCode::kDomainError:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kNotScalar:
    case ErrorCode::kMissingGrad:
    case ErrorCode::kInvalidMixture:
    case ErrorCode::kEmptyBatch:
      return 3;
    default:
      return 2;
  }
}

// ---------------------------------------------------------------------------
// Files.

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create directory " + dir + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void require_file(const std::string& path, const std::string& what) {
  require(!path.empty(), ErrorCode::kInvalidConfig, "--" + what + " is required");
  require(fs::is_regular_file(path), ErrorCode::kIo, what + " file not found: " + path);
}

// Schema defaults to schema.json beside the data file.
MetricSchema schema_for(const std::string& data, const std::string& schema) {
  std::string path = schema;
  if (path.empty()) path = (fs::path(data).parent_path() / "schema.json").string();
  require_file(path, "schema");
  return load_schema(path);
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      require(used == item.size(), ErrorCode::kInvalidConfig, "bad number '" + item + "'");
    } catch (const std::logic_error&) {
      fail(ErrorCode::kInvalidConfig, "bad number '" + item + "'");
    }
  }
  return out;
}

std::vector<std::string> parse_words(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Pipeline options shared by train and ablate. Flags win over the config file.

struct PipelineFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> gamma, window, sustain, epochs;
  std::optional<std::string> loss, encoder, task;
  std::optional<double> lambda, threshold_t;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "pipeline config JSON");
    cmd->add_option("--seed", seed, "model seed");
    cmd->add_option("--gamma", gamma, "look-ahead in minutes");
    cmd->add_option("--window", window, "input window in minutes");
    cmd->add_option("--loss", loss, "evl or bce");
    cmd->add_option("--encoder", encoder, "bilstm or lstm");
    cmd->add_option("--lambda", lambda, "classifier loss weight");
    cmd->add_option("--task", task, "multitask, mdn_only or classifier_only");
    cmd->add_option("--threshold-T", threshold_t, "QoS percentile T");
    cmd->add_option("--sustain", sustain, "sustained minutes D");
    cmd->add_option("--epochs", epochs, "training epochs");
  }

  PipelineConfig resolve() const {
    PipelineConfig pc;
    if (!config.empty()) {
      require_file(config, "config");
      pc = pipeline_config_from_json(read_json_file(config));
    }
    if (seed) pc.model.seed = *seed;
    if (gamma) pc.model.gamma = *gamma;
    if (window) pc.model.window = *window;
    if (loss) pc.model.loss = parse_loss(*loss);
    if (encoder) pc.model.encoder = parse_encoder(*encoder);
    if (lambda) pc.model.lambda = *lambda;
    if (task) pc.model.task = parse_task(*task);
    if (threshold_t) pc.labeling.percentile = *threshold_t;
    if (sustain) pc.sustain = *sustain;
    if (epochs) pc.training.options.epochs = *epochs;
    return pc;
  }
};

struct DataFlags {
  std::string data, alerts, schema;

  void attach(CLI::App* cmd, bool need_alerts = true) {
    cmd->add_option("--data", data, "metrics CSV or JSONL")->required();
    if (need_alerts) cmd->add_option("--alerts", alerts, "alerts JSONL")->required();
    cmd->add_option("--schema", schema, "metric schema JSON (default: schema.json beside the data)");
  }

  MetricFrame load(const MetricSchema& schema_override) const {
    require_file(data, "data");
    return load_metric_frame(data, schema_override);
  }

  MetricFrame load() const { return load(schema_for(data, schema)); }

  std::vector<AlertRecord> load_alert_file() const {
    require_file(alerts, "alerts");
    return load_alerts(alerts);
  }
};

EpochCallback epoch_logger() {
  return [](const EpochStats& e) {
    std::string msg = "epoch " + std::to_string(e.epoch) + " train " + fmt(e.train_loss) + " val " + fmt(e.val_total);
    if (e.val_nll) msg += " val_nll " + fmt(*e.val_nll);
    log_debug(msg);
  };
}

// ---------------------------------------------------------------------------
// generate

struct GenerateCmd {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  bool regime = false;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("generate", "write a synthetic scenario");
    cmd->add_option("--config", config, "scenario config JSON (default: built-in scenario)");
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_option("--seed", seed, "scenario seed");
    cmd->add_flag("--label-regime", regime, "tune fault cadence and magnitude for 4-8% label density");
    cmd->callback([this] { run(); });
  }

  void run() const {
    ScenarioConfig cfg = default_scenario(0);
    if (!config.empty()) {
      require_file(config, "config");
      cfg = scenario_from_json(read_json_file(config));
    }
    if (seed) cfg.seed = *seed;
    if (regime) cfg = make_label_regime(cfg);
    Scenario sc = generate(cfg);
    ensure_dir(out);
    const fs::path dir(out);
    {
      std::ofstream f(dir / "metrics.csv", std::ios::binary | std::ios::trunc);
      require(static_cast<bool>(f), ErrorCode::kIo, "cannot write metrics.csv");
      write_metric_csv(f, sc.raw);
    }
    {
      std::ofstream f(dir / "alerts.jsonl", std::ios::binary | std::ios::trunc);
      require(static_cast<bool>(f), ErrorCode::kIo, "cannot write alerts.jsonl");
      write_alerts(f, sc.alerts);
    }
    write_json(dir / "truth.json", truth_to_json(sc.truth));
    write_json(dir / "schema.json", schema_to_json(sc.schema));
    write_json(dir / "scenario.json", scenario_to_json(cfg));
    const double density = scenario_label_density(sc, LabelParams{}, TrainingSettings{}.train_frac);
    std::cout << "rows " << sc.raw.rows() << ", metrics " << sc.raw.cols() << ", alerts " << sc.alerts.size()
              << ", outages " << sc.truth.size() << ", label density " << fmt(density) << '\n';
  }
};

// ---------------------------------------------------------------------------
// prepare

struct PrepareCmd {
  DataFlags data;
  PipelineFlags pipeline;
  std::string out;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("prepare", "clean, select, normalize and label a dataset");
    data.attach(cmd);
    pipeline.attach(cmd);
    cmd->add_option("--out", out, "output directory")->required();
    cmd->callback([this] { run(); });
  }

  void run() const {
    const PipelineConfig pc = pipeline.resolve();
    const MetricFrame loaded = data.load();
    const auto alerts = data.load_alert_file();
    const Prepared p = prepare(loaded, alerts, pc.selection, pc.labeling, pc.training.train_frac);
    ensure_dir(out);
    const fs::path dir(out);
    {
      std::ofstream f(dir / "normalized.csv", std::ios::binary | std::ios::trunc);
      require(static_cast<bool>(f), ErrorCode::kIo, "cannot write normalized.csv");
      write_metric_csv(f, *p.norm);
    }
    std::ostringstream labels;
    labels << "timestamp";
    for (const auto& s : p.labels) labels << ',' << s.metric;
    labels << '\n';
    for (std::size_t r = 0; r < p.raw.rows(); ++r) {
      labels << p.raw.timestamps()[r] * 60;
      for (const auto& s : p.labels) labels << ',' << static_cast<int>(s.labels[r]);
      labels << '\n';
    }
    write_text(dir / "labels.csv", labels.str());
    json tau = json::object();
    for (const auto& [k, v] : p.tau) tau[k] = v;
    json summary{{"rows", p.raw.rows()},
                 {"train_rows", p.train_rows},
                 {"dropped_rows", p.missing.dropped_rows},
                 {"zero_filled", p.missing.zero_filled},
                 {"dropped_features", p.dropped_features},
                 {"tau", tau},
                 {"label_density", label_density(p.labels, p.train_rows)},
                 {"normalization", normalization_to_json(p.stats)},
                 {"schema", schema_to_json({p.raw.metrics(), {}})}};
    write_json(dir / "prepared.json", summary);
    std::cout << "rows " << p.raw.rows() << ", features " << p.raw.cols() << ", label density "
              << fmt(label_density(p.labels, p.train_rows)) << '\n';
  }
};

// ---------------------------------------------------------------------------
// train

struct TrainCmd {
  DataFlags data;
  PipelineFlags pipeline;
  std::string out;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("train", "train a model; writes model.json and train_report.json");
    data.attach(cmd);
    pipeline.attach(cmd);
    cmd->add_option("--out", out, "output directory")->required();
    cmd->callback([this] { run(); });
  }

  void run() const {
    const PipelineConfig pc = pipeline.resolve();
    const MetricFrame loaded = data.load();
    const auto alerts = data.load_alert_file();
    ensure_dir(out);
    Experiment ex = fit(loaded, alerts, pc, false, epoch_logger());
    log_info("trained " + std::to_string(ex.report.epochs_run) + " epochs in " + fmt(ex.report.wall_seconds) + " s");
    const fs::path dir(out);
    save_checkpoint(ex.bundle, (dir / "model.json").string());
    json report = train_report_to_json(ex.report);
    report["samples"] = {{"train", ex.splits.train.size()},
                         {"val", ex.splits.val.size()},
                         {"test", ex.splits.test.size()},
                         {"dropped_for_leakage", ex.splits.dropped_for_leakage}};
    report["label_density"] = label_density(ex.prep.labels, ex.prep.train_rows);
    write_json(dir / "train_report.json", report);
    std::cout << "best epoch " << ex.report.best_epoch << " of " << ex.report.epochs_run << '\n';
  }
};

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateCmd {
  DataFlags data;
  std::string checkpoint, out;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("calibrate", "pick the Youden threshold on the training split");
    cmd->add_option("--checkpoint", checkpoint, "model.json")->required();
    data.attach(cmd);
    cmd->add_option("--out", out, "updated checkpoint path (default: in place)");
    cmd->callback([this] { run(); });
  }

  void run() const {
    require_file(checkpoint, "checkpoint");
    ModelBundle b = load_checkpoint(checkpoint);
    const MetricFrame loaded = data.load(data.schema.empty() ? bundle_schema(b) : schema_for(data.data, data.schema));
    const auto alerts = data.load_alert_file();
    const Reconstructed r = reconstruct(loaded, alerts, b);
    const YoudenResult y = calibrate_bundle(b, r.calibration, bundle_forecaster(b));
    const std::string target = out.empty() ? checkpoint : out;
    if (fs::path(target).has_parent_path()) ensure_dir(fs::path(target).parent_path().string());
    save_checkpoint(b, target);
    std::cout << "theta " << fmt(y.theta) << " J " << fmt(y.j) << '\n';
  }
};

// ---------------------------------------------------------------------------
// predict

struct PredictCmd {
  std::string checkpoint, data, out;
  bool stream = false;
  std::optional<double> threshold_t;
  std::optional<std::size_t> sustain;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("predict", "score data; writes scores.jsonl and events.json");
    cmd->add_option("--checkpoint", checkpoint, "calibrated model.json")->required();
    cmd->add_option("--data", data, "metrics CSV or JSONL")->required();
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_flag("--stream", stream, "score row by row through the rolling scorer");
    cmd->add_option("--threshold-T", threshold_t, "QoS percentile T (re-derives tau, no retraining)");
    cmd->add_option("--sustain", sustain, "sustained minutes D");
    cmd->callback([this] { run(); });
  }

  void run() const {
    require_file(checkpoint, "checkpoint");
    require_file(data, "data");
    ModelBundle b = load_checkpoint(checkpoint);
    require(b.decision.theta.has_value(), ErrorCode::kInvalidConfig, "checkpoint is not calibrated; run calibrate");
    if (threshold_t) b.set_percentile(*threshold_t);
    if (sustain) b.decision.sustain = *sustain;
    b.decision.validate();
    const MetricFrame loaded = load_metric_frame(data, bundle_schema(b));
    const MetricFrame norm = normalize(frame_for_bundle(loaded, b), b.normalization);
    const auto series = stream ? score_stream(b, norm) : score_batch(b, norm);
    const double theta = *b.decision.theta;
    const auto events = detect_all(series, theta, b.decision.sustain);

    ensure_dir(out);
    const fs::path dir(out);
    std::string lines;
    if (!series.empty()) {
      for (std::size_t i = 0; i < series[0].timestamps.size(); ++i) {
        json row;
        row["timestamp"] = series[0].timestamps[i] * 60;
        json probs = json::object();
        for (const auto& s : series) probs[s.metric] = s.probs[i];
        row["probs"] = probs;
        lines += row.dump() + "\n";
      }
    }
    write_text(dir / "scores.jsonl", lines);
    json tau = json::object();
    for (const auto& [k, v] : b.decision.tau) tau[k] = v;
    json ev = json::array();
    for (const auto& e : events) ev.push_back(event_to_json(e));
    json runs = json::array();
    for (const auto& r : merge_events(events)) {
      runs.push_back({{"start", r.start * 60}, {"flagged", r.flagged * 60}, {"end", r.end * 60}, {"peak", r.peak},
                      {"metrics", r.metrics}});
    }
    write_json(dir / "events.json", {{"theta", theta},
                                     {"percentile", b.decision.percentile},
                                     {"tau", tau},
                                     {"sustain", b.decision.sustain},
                                     {"events", ev},
                                     {"system_runs", runs}});
    std::cout << "scored " << (series.empty() ? 0 : series[0].timestamps.size()) << " minutes, " << events.size()
              << " events\n";
  }
};

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateCmd {
  DataFlags data;
  std::string checkpoint, truth, out, percentiles = "95,97,99";

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("evaluate", "test-split report; writes report.json and pr_curve.csv");
    cmd->add_option("--checkpoint", checkpoint, "calibrated model.json")->required();
    data.attach(cmd);
    cmd->add_option("--truth", truth, "ground-truth outages JSON");
    cmd->add_option("--percentiles", percentiles, "comma-separated T values for per-T F1");
    cmd->add_option("--out", out, "output directory")->required();
    cmd->callback([this] { run(); });
  }

  void run() const {
    require_file(checkpoint, "checkpoint");
    const ModelBundle b = load_checkpoint(checkpoint);
    const MetricFrame loaded = data.load(data.schema.empty() ? bundle_schema(b) : schema_for(data.data, data.schema));
    const auto alerts = data.load_alert_file();
    std::vector<GroundTruthOutage> outages;
    if (!truth.empty()) {
      require_file(truth, "truth");
      outages = truth_from_json(read_json_file(truth));
    }
    const Reconstructed r = reconstruct(loaded, alerts, b);
    const auto ts = parse_list(percentiles);
    const Evaluation ev = evaluate_bundle(b, r.prep, alerts, r.calibration, r.test, outages, ts, bundle_forecaster(b));
    ensure_dir(out);
    const fs::path dir(out);
    write_json(dir / "report.json", eval_report_to_json(ev.report));
    std::ostringstream pr;
    const auto curve = pr_curve(ev.test_pooled.probs, ev.test_pooled.labels);
    write_pr_csv(pr, curve);
    write_text(dir / "pr_curve.csv", pr.str());
    std::cout << "AUC-PR " << fmt(ev.report.auc_pr) << " F1 " << fmt(ev.report.at_theta.f1) << '\n';
  }
};

// ---------------------------------------------------------------------------
// ablate

struct AblateCmd {
  PipelineFlags pipeline;
  std::string scenario, out;
  std::string encoders = "bilstm,lstm", losses = "evl,bce", gammas = "5,10", tasks = "multitask";
  bool regime = false;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("ablate", "train every encoder x loss x gamma x task cell; writes ablation.csv");
    pipeline.attach(cmd);
    cmd->add_option("--scenario", scenario, "scenario config JSON (default: built-in scenario)");
    cmd->add_flag("--label-regime", regime, "tune the scenario for 4-8% label density first");
    cmd->add_option("--encoders", encoders, "comma-separated encoders");
    cmd->add_option("--losses", losses, "comma-separated classifier losses");
    cmd->add_option("--gammas", gammas, "comma-separated look-aheads");
    cmd->add_option("--tasks", tasks, "comma-separated tasks: multitask, mdn_only, classifier_only");
    cmd->add_option("--out", out, "output directory")->required();
    cmd->callback([this] { run(); });
  }

  void run() const {
    const PipelineConfig base = pipeline.resolve();
    ScenarioConfig sc_cfg = default_scenario(0);
    if (!scenario.empty()) {
      require_file(scenario, "scenario");
      sc_cfg = scenario_from_json(read_json_file(scenario));
    }
    if (pipeline.seed) sc_cfg.seed = *pipeline.seed;
    if (regime) sc_cfg = make_label_regime(sc_cfg);
    const Scenario sc = generate(sc_cfg);

    std::vector<EncoderKind> enc;
    for (const auto& e : parse_words(encoders)) enc.push_back(parse_encoder(e));
    std::vector<ClassifierLoss> los;
    for (const auto& l : parse_words(losses)) los.push_back(parse_loss(l));
    std::vector<TaskMode> tsk;
    for (const auto& t : parse_words(tasks)) tsk.push_back(parse_task(t));
    std::vector<std::size_t> gam;
    for (double g : parse_list(gammas)) {
      require(g >= 1 && g == std::floor(g), ErrorCode::kInvalidConfig, "gammas must be positive integers");
      gam.push_back(static_cast<std::size_t>(g));
    }
    require(!enc.empty() && !los.empty() && !tsk.empty() && !gam.empty(), ErrorCode::kInvalidConfig,
            "every grid axis needs at least one value");

    std::ostringstream csv;
    csv << "encoder,loss,gamma,task,seed,auc_pr,f1,precision,recall,theta,youden_j,best_epoch,outages,detected,"
           "false_positive_runs\n";
    for (auto e : enc) {
      for (auto l : los) {
        for (auto g : gam) {
          for (auto t : tsk) {
            PipelineConfig pc = base;
            pc.model.encoder = e;
            pc.model.loss = l;
            pc.model.gamma = g;
            pc.model.task = t;
            log_info(std::string("cell ") + std::string(encoder_name(e)) + " " + std::string(loss_name(l)) + " " +
                     std::to_string(g) + " " + std::string(task_name(t)));
            Experiment ex = fit(sc.raw, sc.alerts, pc, true, epoch_logger());
            const Evaluation ev = evaluate_bundle(ex.bundle, ex.prep, sc.alerts, ex.calibration, ex.splits.test,
                                                  sc.truth, {}, bundle_forecaster(ex.bundle));
            const auto& d = ev.report.detection;
            csv << encoder_name(e) << ',' << loss_name(l) << ',' << g << ',' << task_name(t) << ',' << pc.model.seed
                << ',' << fmt(ev.report.auc_pr) << ',' << fmt(ev.report.at_theta.f1) << ','
                << fmt(ev.report.at_theta.precision) << ',' << fmt(ev.report.at_theta.recall) << ','
                << fmt(ev.report.theta) << ',' << fmt(ex.bundle.decision.youden_j.value_or(0.0)) << ','
                << ex.report.best_epoch << ',' << (d ? d->outages.size() : 0) << ',' << (d ? d->detected : 0) << ','
                << (d ? d->false_positive_runs : 0) << '\n';
          }
        }
      }
    }
    ensure_dir(out);
    write_text(fs::path(out) / "ablation.csv", csv.str());
    std::cout << csv.str();
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tailcast: outage prediction from QoS tail forecasts"};
  app.require_subcommand(1);
  GenerateCmd generate_cmd;
  PrepareCmd prepare_cmd;
  TrainCmd train_cmd;
  CalibrateCmd calibrate_cmd;
  PredictCmd predict_cmd;
  EvaluateCmd evaluate_cmd;
  AblateCmd ablate_cmd;
  generate_cmd.attach(app);
  prepare_cmd.attach(app);
  train_cmd.attach(app);
  calibrate_cmd.attach(app);
  predict_cmd.attach(app);
  evaluate_cmd.attach(app);
  ablate_cmd.attach(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
