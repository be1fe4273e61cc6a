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

#include "../oracles.hpp"
#include "tailcast/tailcast.hpp"

using namespace tailcast;

namespace {

ModelBundle tiny_bundle(std::uint64_t seed = 3) {
  ModelBundle b;
  b.config.n_metrics = 2;
  b.config.qos = {"q"};
  b.config.window = 4;
  b.config.gamma = 2;
  b.config.hidden_per_direction = 3;
  b.config.mdn_hidden = {5};
  b.config.clf_hidden = {3};
  b.config.components = 2;
  b.config.seed = seed;
  b.params = init_params(b.config);
  b.metrics = {{"q", MetricCategory::kUtilizationLike, true}, {"m", MetricCategory::kUtilizationLike, false}};
  b.normalization.metrics = {{"q", 0.0, 10.0}, {"m", -1.0, 1.0}};
  b.qos_reference["q"] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  b.set_percentile(80);
  b.decision.theta = 0.4;
  return b;
}

MetricFrame random_norm_frame(std::size_t n, std::uint64_t seed, std::int64_t t0 = 500) {
  Rng rng(seed);
  std::vector<std::int64_t> ts(n);
  std::vector<double> v(2 * n);
  for (std::size_t i = 0; i < n; ++i) ts[i] = t0 + static_cast<std::int64_t>(i);
  for (double& x : v) x = rng.uniform();
  return MetricFrame(std::move(ts), tiny_bundle().metrics, std::move(v));
}

ProbabilitySeries series(std::vector<double> p, std::int64_t t0 = 0) {
  ProbabilitySeries s{"q", {}, std::move(p)};
  for (std::size_t i = 0; i < s.probs.size(); ++i) s.timestamps.push_back(t0 + static_cast<std::int64_t>(i));
  return s;
}

}  // namespace

TEST(Infer, TailProbabilityBasics) {
  EXPECT_NEAR(outage_probability({{1.0}, {0.7}, {0.3}}, 0.7), 0.5, 1e-15);
  EXPECT_NEAR(outage_probability({{0.5, 0.5}, {-1.0, 1.0}, {0.4, 0.4}}, 0.0), 0.5, 1e-15);
  EXPECT_NEAR(outage_probability({{1.0}, {0.0}, {1.0}}, 1.0), 0.15865525393145707, 1e-14);
  EXPECT_EQ(outage_probability({{1.0}, {0.0}, {1.0}}, -1e9), 1.0);
  EXPECT_EQ(outage_probability({{1.0}, {0.0}, {1.0}}, 1e9), 0.0);
  EXPECT_THROW(outage_probability({{0.9}, {0.0}, {1.0}}, 0.0), Error);
}

TEST(Infer, TailProbabilityDecreasesInTau) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    Mixture m = oracle::random_mixture(1 + rng.below(4), rng);
    double prev = 1.0;
    for (double tau = -3.0; tau <= 4.0; tau += 0.05) {
      const double p = outage_probability(m, tau);
      ASSERT_GE(p, 0.0);
      ASSERT_LE(p, prev + 1e-15);
      prev = p;
    }
  }
}

TEST(Infer, TailProbabilityMatchesMonteCarlo) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Mixture m = oracle::random_mixture(3, rng);
    const double tau = rng.uniform(-0.5, 1.5);
    auto mc = oracle::tail_mc(m, tau, 200000, rng);
    EXPECT_LT(std::abs(outage_probability(m, tau) - mc.p), 4.0 * mc.se + 1e-4);
  }
}

TEST(Infer, YoudenHandExamples) {
  auto a = youden_threshold(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<std::uint8_t>{0, 0, 1, 1});
  EXPECT_EQ(a.theta, 0.5);
  EXPECT_EQ(a.j, 1.0);
  // Two candidates reach J = 0.5; the smaller one wins.
  auto b = youden_threshold(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<std::uint8_t>{0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(b.theta, 0.225);
  EXPECT_EQ(b.j, 0.5);
  try {
    youden_threshold(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingleClass);
  }
}

TEST(Infer, YoudenMatchesExhaustiveOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> p(n);
    std::vector<std::uint8_t> y(n);
    const bool coarse = trial % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = coarse ? static_cast<double>(rng.below(6)) / 5.0 : rng.uniform();
      y[i] = rng.uniform() < 0.4;
    }
    y[0] = 1;
    y[1] = 0;
    const auto got = youden_threshold(p, y);
    const auto want = oracle::youden(p, y);
    ASSERT_EQ(got.theta, want.theta) << trial;
    ASSERT_NEAR(got.j, want.j, 1e-12);
  }
}

TEST(Infer, SustainedDetectionTraces) {
  auto ev = detect(series({0.1, 0.9, 0.9, 0.9, 0.2}), 0.5, 3);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].start, 1);
  EXPECT_EQ(ev[0].flagged, 3);
  EXPECT_EQ(ev[0].end, 3);
  EXPECT_TRUE(detect(series({0.9, 0.9, 0.1, 0.9, 0.9}), 0.5, 3).empty());
  auto two = detect(series({0.9, 0.9, 0.9, 0.1, 0.6, 0.7, 0.8, 0.9}), 0.5, 3);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].flagged, 2);
  EXPECT_EQ(two[1].start, 4);
  EXPECT_EQ(two[1].flagged, 6);
  EXPECT_EQ(two[1].end, 7);
  EXPECT_EQ(two[1].peak, 0.9);
  // Equal to theta is not above it.
  EXPECT_TRUE(detect(series({0.5, 0.5, 0.5}), 0.5, 1).empty());
}

TEST(Infer, TimestampGapEndsRun) {
  ProbabilitySeries s{"q", {0, 1, 3, 4}, {0.9, 0.9, 0.9, 0.9}};
  EXPECT_TRUE(detect(s, 0.5, 3).empty());
  EXPECT_EQ(detect(s, 0.5, 2).size(), 2u);
}

TEST(Infer, DetectionMatchesRunEnumeration) {
  Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<double> p(n);
    for (double& v : p) v = rng.uniform() < 0.7 ? 0.9 : 0.1;
    const std::size_t d = 1 + rng.below(5);
    // A minute is flagged iff it and the d-1 minutes before it are all above theta.
    std::vector<std::uint8_t> want(n, 0);
    for (std::size_t i = d - 1; i < n; ++i) {
      bool all = true;
      for (std::size_t k = i + 1 - d; k <= i; ++k) all = all && p[k] > 0.5;
      if (!all) continue;
      for (std::size_t k = i; k < n && p[k] > 0.5; ++k) want[k] = 1;
    }
    auto s = series(p);
    ASSERT_EQ(flag_series(s, detect(s, 0.5, d)), want);
  }
}

TEST(Infer, MergeEventsIntoSystemRuns) {
  std::vector<OutageEvent> ev{{"a", 10, 12, 20, 0.7}, {"b", 21, 25, 30, 0.9}, {"a", 40, 41, 45, 0.6},
                              {"b", 15, 18, 19, 0.8}};
  auto runs = merge_events(ev);
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[0].start, 10);
  EXPECT_EQ(runs[0].flagged, 12);
  EXPECT_EQ(runs[0].end, 30);
  EXPECT_EQ(runs[0].peak, 0.9);
  EXPECT_EQ(runs[0].metrics, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(runs[1].start, 40);
}

TEST(Infer, StreamMatchesBatchBitForBit) {
  ModelBundle b = tiny_bundle();
  MetricFrame f = random_norm_frame(300, 9);
  auto batch = score_batch(b, f);
  auto stream = score_stream(b, f);
  ASSERT_EQ(batch.size(), 1u);
  EXPECT_EQ(batch[0].timestamps, stream[0].timestamps);
  EXPECT_EQ(batch[0].probs, stream[0].probs);
  EXPECT_EQ(batch[0].probs.size(), 297u);
}

TEST(Infer, StreamOfWindowLengthGivesOneScore) {
  ModelBundle b = tiny_bundle();
  auto out = score_stream(b, random_norm_frame(4, 1));
  ASSERT_EQ(out[0].probs.size(), 1u);
  EXPECT_EQ(out[0].timestamps[0], 503);
  EXPECT_THROW(score_stream(b, random_norm_frame(3, 1)), Error);
}

TEST(Infer, StreamRestartsAfterGap) {
  ModelBundle b = tiny_bundle();
  StreamScorer s(b);
  const std::vector<double> row{0.3, 0.6};
  int scored = 0;
  for (std::int64_t m : {0, 1, 2, 3, 5, 6, 7, 8}) scored += s.push(m, row).has_value() ? 1 : 0;
  EXPECT_EQ(scored, 2);
}

TEST(Infer, ClassifierOnlyScoresWithClassifier) {
  ModelBundle b = tiny_bundle();
  b.config.task = TaskMode::kClassifierOnly;
  MetricFrame f = random_norm_frame(10, 4);
  auto probs = score_batch(b, f);
  const double* first = f.row_data(0);
  auto out = predict(b.config, b.params, std::span<const double* const>(&first, 1));
  EXPECT_EQ(probs[0].probs[0], out[0].clf_prob[0]);
}

TEST(Infer, SetPercentileRederivesTau) {
  ModelBundle b = tiny_bundle();
  EXPECT_EQ(b.decision.tau.at("q"), 8.0);
  b.set_percentile(50);
  EXPECT_EQ(b.decision.tau.at("q"), 5.0);
  EXPECT_NEAR(b.tau_normalized(b.decision.tau)[0], 0.5, 1e-9);
}
