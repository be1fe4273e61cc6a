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

// Supervised samples at horizon t + gamma, chronological splits and the
// training loop.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tailcast/autodiff.hpp"
#include "tailcast/error.hpp"
#include "tailcast/ingest.hpp"
#include "tailcast/labeling.hpp"
#include "tailcast/model.hpp"
#include "tailcast/rng.hpp"

namespace tailcast {

// One window anchored at minute t. The input rows live in the dataset's
// frame; y_true and label are per QoS metric, taken at t + gamma.
struct WindowedSample {
  std::int64_t t = 0;
  std::int64_t target_t = 0;
  std::int64_t window_start = 0;
  std::size_t end_row = 0;
  std::vector<double> y_true;
  std::vector<std::uint8_t> label;
};

struct SampleSet {
  std::shared_ptr<const MetricFrame> frame;
  std::size_t window = 0;
  std::vector<WindowedSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  // Row-major window x |M| block for sample i (rows are contiguous in the frame).
  const double* x(std::size_t i) const { return frame->row_data(samples[i].end_row + 1 - window); }

  SampleSet with(std::vector<WindowedSample> s) const { return {frame, window, std::move(s)}; }
};

// One sample per anchor row r >= w-1 whose window and target row r+gamma
// lie on an unbroken stretch of the grid. On a gap-free frame of n rows the
// count is floor((n - w - gamma) / stride) + 1.
inline SampleSet build_dataset(std::shared_ptr<const MetricFrame> frame, std::span<const ProxyLabelSeries> labels,
                               std::span<const std::string> qos, std::size_t w, std::size_t gamma,
                               std::size_t stride) {
  require(frame != nullptr, ErrorCode::kEmptyFrame, "build_dataset needs a frame");
  require(w >= 1 && gamma >= 1 && stride >= 1, ErrorCode::kInvalidConfig, "w, gamma and stride must be >= 1");
  const std::size_t n = frame->rows();
  require(n >= w + gamma, ErrorCode::kFrameTooShort,
          "frame has " + std::to_string(n) + " rows, need at least w + gamma = " + std::to_string(w + gamma));
  std::vector<std::size_t> qcol;
  std::vector<const ProxyLabelSeries*> qlab;
  for (const auto& name : qos) {
    qcol.push_back(frame->require_column(name));
    const ProxyLabelSeries* found = nullptr;
    for (const auto& s : labels) {
      if (s.metric == name) found = &s;
    }
    if (!found) fail(ErrorCode::kMissingQosMetric, "no labels for QoS metric '" + name + "'");
    qlab.push_back(found);
  }
  SampleSet set{frame, w, {}};
  const auto& ts = frame->timestamps();
  for (std::size_t end = w - 1; end + gamma < n; end += stride) {
    if (!frame->contiguous(end + 1 - w, end + gamma)) continue;
    WindowedSample s;
    s.t = ts[end];
    s.target_t = ts[end + gamma];
    s.window_start = ts[end + 1 - w];
    s.end_row = end;
    for (std::size_t y = 0; y < qcol.size(); ++y) {
      s.y_true.push_back(frame->at(end + gamma, qcol[y]));
      s.label.push_back(label_at(*qlab[y], s.target_t) ? 1 : 0);
    }
    set.samples.push_back(std::move(s));
  }
  return set;
}

// Every stride-th sample, starting with the first.
inline SampleSet thin(const SampleSet& set, std::size_t stride) {
  require(stride >= 1, ErrorCode::kInvalidConfig, "stride must be >= 1");
  std::vector<WindowedSample> out;
  for (std::size_t i = 0; i < set.size(); i += stride) out.push_back(set.samples[i]);
  return set.with(std::move(out));
}

struct Splits {
  SampleSet train;
  SampleSet val;
  SampleSet test;
  std::size_t dropped_for_leakage = 0;
};

// Contiguous chronological segments of floor(frac * N) samples for train and
// val; the rest is test. Train and val samples whose target minute reaches
// the first test window are dropped, so nothing before the boundary reads
// the test period.
inline Splits split_chronological(const SampleSet& set, double train_frac, double val_frac) {
  require(train_frac > 0.0 && val_frac >= 0.0, ErrorCode::kInvalidConfig, "split fractions must be positive");
  require(train_frac + val_frac < 1.0, ErrorCode::kEmptySplit, "train_frac + val_frac leaves no test samples");
  const std::size_t n = set.size();
  const auto n_train = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(n) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n) + 1e-9));
  require(n_train > 0, ErrorCode::kEmptySplit, "train split is empty");
  require(val_frac == 0.0 || n_val > 0, ErrorCode::kEmptySplit, "validation split is empty");
  require(n_train + n_val < n, ErrorCode::kEmptySplit, "test split is empty");

  const std::int64_t test_start = set.samples[n_train + n_val].window_start;
  Splits out;
  std::vector<WindowedSample> tr, va, te;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = set.samples[i];
    if (i >= n_train + n_val) {
      te.push_back(s);
    } else if (s.target_t >= test_start) {
      ++out.dropped_for_leakage;
    } else if (i < n_train) {
      tr.push_back(s);
    } else {
      va.push_back(s);
    }
  }
  require(!tr.empty(), ErrorCode::kEmptySplit, "train split is empty after the leakage guard");
  require(val_frac == 0.0 || !va.empty(), ErrorCode::kEmptySplit, "validation split is empty after the leakage guard");
  out.train = set.with(std::move(tr));
  out.val = set.with(std::move(va));
  out.test = set.with(std::move(te));
  return out;
}

// ---------------------------------------------------------------------------
// Batches.

struct Batch {
  std::vector<const double*> windows;
  std::vector<std::vector<double>> targets;        // per QoS metric
  std::vector<std::vector<std::uint8_t>> labels;   // per QoS metric
};

inline Batch make_batch(const SampleSet& set, std::span<const std::size_t> idx, std::size_t n_qos) {
  Batch b;
  b.targets.assign(n_qos, {});
  b.labels.assign(n_qos, {});
  for (std::size_t i : idx) {
    b.windows.push_back(set.x(i));
    const auto& s = set.samples[i];
    for (std::size_t y = 0; y < n_qos; ++y) {
      b.targets[y].push_back(s.y_true[y]);
      b.labels[y].push_back(s.label[y]);
    }
  }
  return b;
}

struct TrainOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  std::size_t patience = 5;
  ad::AdamHyper adam;
  // Cap on optimizer steps per epoch (0 = full pass). Each epoch still
  // visits a fresh shuffled prefix of the training set.
  std::size_t max_batches_per_epoch = 0;
  std::size_t eval_batch_size = 256;
};

inline nlohmann::json train_options_to_json(const TrainOptions& o) {
  return {{"epochs", o.epochs},
          {"batch_size", o.batch_size},
          {"patience", o.patience},
          {"lr", o.adam.lr},
          {"max_batches_per_epoch", o.max_batches_per_epoch}};
}

inline TrainOptions train_options_from_json(const nlohmann::json& j, TrainOptions o = {}) {
  try {
    o.epochs = j.value("epochs", o.epochs);
    o.batch_size = j.value("batch_size", o.batch_size);
    o.patience = j.value("patience", o.patience);
    o.adam.lr = j.value("lr", o.adam.lr);
    o.max_batches_per_epoch = j.value("max_batches_per_epoch", o.max_batches_per_epoch);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("training options: ") + e.what());
  }
  return o;
}

struct EpochStats {
  std::size_t epoch = 0;  // 0 is the untrained model
  double train_loss = 0.0;
  std::optional<double> val_nll;
  double val_total = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
  double wall_seconds = 0.0;  // logged, not serialized
};

inline nlohmann::json train_report_to_json(const TrainReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    nlohmann::json row{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_total", e.val_total}};
    row["val_nll"] = e.val_nll ? nlohmann::json(*e.val_nll) : nlohmann::json(nullptr);
    rows.push_back(std::move(row));
  }
  return {{"epochs", rows}, {"best_epoch", r.best_epoch}, {"epochs_run", r.epochs_run},
          {"stopped_early", r.stopped_early}};
}

struct LossValues {
  std::optional<double> nll;
  double total = 0.0;
};

// Eval-mode losses over a sample set, averaged over fixed-size batches
// weighted by batch size.
inline LossValues evaluate_loss(const ModelConfig& cfg, const ModelParams& params, const SampleSet& set,
                                std::size_t batch_size) {
  require(!set.empty(), ErrorCode::kEmptySplit, "cannot evaluate loss on an empty set");
  batch_size = std::max<std::size_t>(batch_size, 1);
  double total = 0.0, nll = 0.0;
  bool has_nll = false;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    const std::size_t end = std::min(set.size(), start + batch_size);
    idx.clear();
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    Batch b = make_batch(set, idx, cfg.qos.size());
    ad::Graph g;
    BoundParams bp = bind_frozen(g, params);
    auto steps = window_steps(g, b.windows, cfg.window, cfg.n_metrics);
    Rng unused(0);
    ForwardPass fp = forward(cfg, bp, steps, Mode::kEval, unused, cfg.task != TaskMode::kClassifierOnly,
                             cfg.task != TaskMode::kMdnOnly);
    LossParts parts = multitask_loss(cfg, fp, b.targets, b.labels);
    const double weight = static_cast<double>(end - start);
    total += parts.total.item() * weight;
    if (parts.nll.valid()) {
      nll += parts.nll.item() * weight;
      has_nll = true;
    }
  }
  const double n = static_cast<double>(set.size());
  LossValues out;
  out.total = total / n;
  if (has_nll) out.nll = nll / n;
  return out;
}

using EpochCallback = std::function<void(const EpochStats&)>;

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

// Adam on the multitask loss with a seeded shuffle per epoch and early
// stopping on validation total loss. Returns the best-epoch parameters.
// Without a validation set the last epoch wins.
inline TrainResult train(const ModelConfig& cfg, const SampleSet& train_set, const SampleSet& val_set,
                         const TrainOptions& opt, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(!train_set.empty(), ErrorCode::kEmptySplit, "training set is empty");
  require(opt.batch_size >= 1, ErrorCode::kInvalidConfig, "batch_size must be >= 1");
  require(train_set.window == cfg.window, ErrorCode::kShapeMismatch, "dataset window differs from model window");
  require(train_set.frame->cols() == cfg.n_metrics, ErrorCode::kShapeMismatch, "dataset metric count differs");

  const auto started = std::chrono::steady_clock::now();
  const bool want_mix = cfg.task != TaskMode::kClassifierOnly;
  const bool want_clf = cfg.task != TaskMode::kMdnOnly;
  ModelParams params = init_params(cfg);
  params.set_requires_grad(true);
  const auto tensors = params.tensors();
  ad::AdamState adam{opt.adam, 0, {}, {}};
  const Rng root = Rng(cfg.seed).split(7);
  const bool has_val = !val_set.empty();

  TrainResult result;
  result.params = params;
  TrainReport& report = result.report;

  auto record = [&](std::size_t epoch, double train_loss) {
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = train_loss;
    if (has_val) {
      LossValues v = evaluate_loss(cfg, params, val_set, opt.eval_batch_size);
      st.val_nll = v.nll;
      st.val_total = v.total;
    }
    report.epochs.push_back(st);
    if (on_epoch) on_epoch(st);
    return st;
  };

  EpochStats initial = record(0, std::nan(""));
  double best = has_val ? initial.val_total : std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t e = 1; e <= opt.epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng epoch_rng = root.split(e);
    shuffle(order, epoch_rng);
    std::size_t n_batches = (order.size() + opt.batch_size - 1) / opt.batch_size;
    if (opt.max_batches_per_epoch > 0) n_batches = std::min(n_batches, opt.max_batches_per_epoch);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      const std::size_t start = bi * opt.batch_size;
      const std::size_t end = std::min(order.size(), start + opt.batch_size);
      Batch b = make_batch(train_set, std::span(order).subspan(start, end - start), cfg.qos.size());
      Rng dropout_rng = epoch_rng.split(1000 + bi);
      ad::Graph g;
      BoundParams bp = bind_trainable(g, params);
      auto steps = window_steps(g, b.windows, cfg.window, cfg.n_metrics);
      ForwardPass fp = forward(cfg, bp, steps, Mode::kTrain, dropout_rng, want_mix, want_clf);
      LossParts parts = multitask_loss(cfg, fp, b.targets, b.labels);
      const double loss = parts.total.item();
      if (!std::isfinite(loss)) {
        fail(ErrorCode::kDivergedLoss, "non-finite training loss at epoch " + std::to_string(e) + ", batch " +
                                           std::to_string(bi));
      }
      params.zero_grad();
      g.backward(parts.total);
      ad::adam_step(tensors, adam);
      loss_sum += loss * static_cast<double>(end - start);
      loss_count += end - start;
    }
    const EpochStats st = record(e, loss_sum / static_cast<double>(loss_count));
    report.epochs_run = e;
    if (has_val && !std::isfinite(st.val_total)) {
      fail(ErrorCode::kDivergedLoss, "non-finite validation loss at epoch " + std::to_string(e));
    }
    if (!has_val || st.val_total < best) {
      best = has_val ? st.val_total : best;
      report.best_epoch = e;
      result.params = params;
      since_best = 0;
    } else if (++since_best >= opt.patience) {
      report.stopped_early = true;
      break;
    }
  }
  for (auto* t : result.params.tensors()) {
    t->grad.clear();
    t->requires_grad = false;
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace tailcast
