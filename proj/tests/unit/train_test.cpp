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

#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "tailcast/tailcast.hpp"

using namespace tailcast;

namespace {

// Gap-free frame: column 0 is the QoS metric, a lagged copy of column 1.
std::shared_ptr<const MetricFrame> toy_frame(std::size_t n, std::uint64_t seed = 1) {
  Rng rng(seed);
  std::vector<std::int64_t> ts(n);
  std::vector<double> drive(n + 4);
  for (std::size_t i = 0; i < drive.size(); ++i) drive[i] = 0.5 + 0.4 * std::sin(0.21 * i) + 0.05 * rng.normal();
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) {
    ts[i] = 1000 + static_cast<std::int64_t>(i);
    v.push_back(i >= 4 ? drive[i - 4] : drive[0]);
    v.push_back(drive[i]);
    v.push_back(rng.uniform());
  }
  std::vector<MetricColumn> cols{{"q", MetricCategory::kUtilizationLike, true},
                                 {"a", MetricCategory::kUtilizationLike, false},
                                 {"b", MetricCategory::kUtilizationLike, false}};
  return std::make_shared<const MetricFrame>(std::move(ts), cols, std::move(v));
}

std::vector<ProxyLabelSeries> toy_labels(const MetricFrame& f) {
  const std::vector<std::string> qos{"q"};
  std::vector<AlertRecord> alerts;
  for (std::int64_t t : f.timestamps()) {
    if (t % 7 == 0) alerts.push_back({t, "r", Severity::kHigh, "s"});
  }
  LabelParams p{3, 80, 0.5, 1};
  return generate_proxy_labels(f, qos, alerts, compute_thresholds(f, qos, 80, f.rows()), p);
}

SampleSet toy_set(std::size_t n, std::size_t w, std::size_t gamma, std::size_t stride = 1) {
  auto f = toy_frame(n);
  const std::vector<std::string> qos{"q"};
  return build_dataset(f, toy_labels(*f), qos, w, gamma, stride);
}

ModelConfig toy_config() {
  ModelConfig c;
  c.n_metrics = 3;
  c.qos = {"q"};
  c.window = 8;
  c.gamma = 2;
  c.hidden_per_direction = 4;
  c.mdn_hidden = {8};
  c.clf_hidden = {4};
  c.components = 2;
  c.dropout = 0.1;
  c.seed = 5;
  return c;
}

TrainOptions toy_options() {
  TrainOptions o;
  o.epochs = 6;
  o.batch_size = 16;
  o.patience = 10;
  o.adam.lr = 1e-2;
  return o;
}

}  // namespace

TEST(Train, SampleCounts) {
  EXPECT_EQ(toy_set(100, 60, 10).size(), 31u);
  EXPECT_EQ(toy_set(70, 60, 10).size(), 1u);
  try {
    toy_set(69, 60, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFrameTooShort);
  }
}

TEST(Train, CountFormulaMatchesBruteForce) {
  for (std::size_t n = 3; n <= 300; n += 7) {
    auto f = toy_frame(n);
    auto labels = toy_labels(*f);
    const std::vector<std::string> qos{"q"};
    for (std::size_t w : {1u, 2u, 5u, 17u}) {
      for (std::size_t gamma : {1u, 3u}) {
        for (std::size_t stride : {1u, 4u, 9u}) {
          if (n < w + gamma) continue;
          std::size_t brute = 0;
          for (std::size_t end = w - 1; end + gamma < n; end += stride) ++brute;
          const auto set = build_dataset(f, labels, qos, w, gamma, stride);
          ASSERT_EQ(set.size(), brute);
          ASSERT_EQ(brute, (n - w - gamma) / stride + 1);
        }
      }
    }
  }
}

TEST(Train, SampleTargetsComeFromGammaAhead) {
  auto set = toy_set(40, 5, 3);
  for (const auto& s : set.samples) {
    EXPECT_EQ(s.target_t, s.t + 3);
    EXPECT_EQ(s.window_start, s.t - 4);
    EXPECT_EQ(s.y_true[0], set.frame->at(s.end_row + 3, 0));
  }
  EXPECT_EQ(set.x(0), set.frame->row_data(0));
}

TEST(Train, ChronologicalSplitWithLeakageGuard) {
  auto set = toy_set(104, 3, 2);
  ASSERT_EQ(set.size(), 100u);
  Splits s = split_chronological(set, 0.7, 0.1);
  EXPECT_EQ(s.train.size(), 70u);
  EXPECT_EQ(s.test.size(), 20u);
  EXPECT_EQ(s.val.size(), 6u);
  EXPECT_EQ(s.dropped_for_leakage, 4u);
  const std::int64_t first_test = s.test.samples.front().window_start;
  for (const auto* part : {&s.train, &s.val}) {
    for (const auto& x : part->samples) EXPECT_LT(x.target_t, first_test);
  }
  EXPECT_LT(s.train.samples.back().t, s.val.samples.front().t);
}

TEST(Train, LeakageGuardOnWideWindows) {
  auto set = toy_set(400, 60, 10);
  Splits s = split_chronological(set, 0.5, 0.3);
  const std::int64_t first_test = s.test.samples.front().window_start;
  EXPECT_GT(s.dropped_for_leakage, 0u);
  for (const auto* part : {&s.train, &s.val}) {
    for (const auto& x : part->samples) EXPECT_LT(x.target_t, first_test);
  }
}

TEST(Train, DegenerateSplits) {
  auto set = toy_set(60, 3, 2);
  for (auto [tr, va] : {std::pair{1.0, 0.0}, std::pair{0.9, 0.1}, std::pair{0.001, 0.0}}) {
    try {
      split_chronological(set, tr, va);
      FAIL() << tr << " " << va;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kEmptySplit);
    }
  }
}

TEST(Train, TrainingIsDeterministic) {
  auto set = toy_set(300, 8, 2);
  Splits s = split_chronological(set, 0.7, 0.1);
  auto a = train(toy_config(), s.train, s.val, toy_options());
  auto b = train(toy_config(), s.train, s.val, toy_options());
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.report.best_epoch, b.report.best_epoch);
}

TEST(Train, ValidationNllDecreases) {
  auto set = toy_set(600, 8, 2);
  Splits s = split_chronological(set, 0.7, 0.1);
  TrainOptions o = toy_options();
  o.epochs = 10;
  auto r = train(toy_config(), s.train, s.val, o);
  ASSERT_EQ(r.report.epochs.size(), 11u);
  ASSERT_TRUE(r.report.epochs.front().val_nll.has_value());
  EXPECT_LT(*r.report.epochs.back().val_nll, *r.report.epochs.front().val_nll);
  for (const auto& e : r.report.epochs) {
    if (e.epoch > 0) EXPECT_TRUE(std::isfinite(e.train_loss));
  }
}

TEST(Train, LambdaChangesTheOptimum) {
  auto set = toy_set(300, 8, 2);
  Splits s = split_chronological(set, 0.7, 0.1);
  ModelConfig zero = toy_config(), one = toy_config();
  zero.lambda = 0.0;
  auto a = train(zero, s.train, s.val, toy_options());
  auto b = train(one, s.train, s.val, toy_options());
  ad::Tensor& wa = a.params.forward.wx;
  ad::Tensor& wb = b.params.forward.wx;
  EXPECT_FALSE(wa == wb);
}

TEST(Train, EarlyStoppingKeepsBestEpoch) {
  auto set = toy_set(300, 8, 2);
  Splits s = split_chronological(set, 0.7, 0.1);
  TrainOptions o = toy_options();
  o.epochs = 30;
  o.patience = 1;
  o.adam.lr = 0.2;
  auto r = train(toy_config(), s.train, s.val, o);
  double best = r.report.epochs.front().val_total;
  std::size_t best_epoch = 0;
  for (const auto& e : r.report.epochs) {
    if (e.val_total < best) {
      best = e.val_total;
      best_epoch = e.epoch;
    }
  }
  EXPECT_EQ(r.report.best_epoch, best_epoch);
  EXPECT_NEAR(evaluate_loss(toy_config(), r.params, s.val, 256).total, best, 1e-12);
}

TEST(Train, RejectsMismatchedInputs) {
  auto set = toy_set(100, 8, 2);
  ModelConfig c = toy_config();
  c.window = 9;
  EXPECT_THROW(train(c, set, {}, toy_options()), Error);
  EXPECT_THROW(train(toy_config(), set.with({}), {}, toy_options()), Error);
}

TEST(Train, OptionsJsonRoundTrip) {
  TrainOptions o = toy_options();
  TrainOptions back = train_options_from_json(train_options_to_json(o));
  EXPECT_EQ(back.epochs, o.epochs);
  EXPECT_EQ(back.batch_size, o.batch_size);
  EXPECT_EQ(back.adam.lr, o.adam.lr);
  EXPECT_THROW(train_options_from_json({{"epochs", "many"}}), Error);
}
