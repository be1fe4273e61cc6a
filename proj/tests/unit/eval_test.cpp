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

#include <sstream>

#include "../oracles.hpp"
#include "tailcast/tailcast.hpp"

using namespace tailcast;

namespace {

using Scores = std::vector<double>;
using Labels = std::vector<std::uint8_t>;

}  // namespace

TEST(Eval, AveragePrecisionHandExample) {
  EXPECT_NEAR(auc_pr(Scores{0.9, 0.8, 0.7, 0.6}, Labels{1, 0, 1, 0}), 5.0 / 6.0, 1e-15);
  EXPECT_EQ(auc_pr(Scores{0.9, 0.8, 0.2, 0.1}, Labels{1, 1, 0, 0}), 1.0);
  EXPECT_THROW(auc_pr(Scores{0.1, 0.2}, Labels{0, 0}), Error);
}

TEST(Eval, TiedScoresEnterTogether) {
  // All tied: a single step at the base rate.
  EXPECT_NEAR(auc_pr(Scores{0.5, 0.5, 0.5, 0.5}, Labels{1, 0, 0, 0}), 0.25, 1e-15);
  EXPECT_NEAR(auc_pr(Scores{0.5, 0.5, 0.5, 0.5}, Labels{0, 0, 0, 1}), 0.25, 1e-15);
}

TEST(Eval, AveragePrecisionMatchesBruteForce) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(80);
    Scores s(n);
    Labels y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = trial % 3 == 0 ? static_cast<double>(rng.below(5)) : rng.uniform();
      y[i] = rng.uniform() < 0.3;
    }
    y[0] = 1;
    y[1] = 0;
    ASSERT_NEAR(auc_pr(s, y), oracle::average_precision(s, y), 1e-12);
  }
}

TEST(Eval, AveragePrecisionIgnoresMonotoneTransforms) {
  Rng rng(2);
  Scores s(50);
  Labels y(50);
  for (std::size_t i = 0; i < 50; ++i) {
    s[i] = rng.uniform();
    y[i] = rng.uniform() < 0.4;
  }
  y[0] = 1;
  y[1] = 0;
  Scores t = s;
  for (double& v : t) v = std::exp(3.0 * v) - 7.0;
  EXPECT_EQ(auc_pr(s, y), auc_pr(t, y));
}

TEST(Eval, PrCurveEndsAtFullRecall) {
  auto pts = pr_curve(Scores{0.9, 0.8, 0.7, 0.6}, Labels{1, 0, 1, 0});
  ASSERT_EQ(pts.size(), 4u);
  EXPECT_EQ(pts[0].precision, 1.0);
  EXPECT_EQ(pts.back().recall, 1.0);
  EXPECT_EQ(pts.back().precision, 0.5);
  std::ostringstream out;
  write_pr_csv(out, pts);
  EXPECT_EQ(out.str().substr(0, 26), "threshold,precision,recall");
}

TEST(Eval, PrecisionRecallF1AtTheta) {
  Scores s{0.9, 0.8, 0.7, 0.2, 0.6, 0.1, 0.3, 0.95};
  Labels y{1, 1, 0, 1, 1, 0, 0, 0};
  Prf r = prf_at(s, y, 0.5);
  // Predicted: 0.9, 0.8, 0.7, 0.6, 0.95 -> tp 3, fp 2, fn 1.
  EXPECT_NEAR(r.precision, 0.6, 1e-15);
  EXPECT_NEAR(r.recall, 0.75, 1e-15);
  EXPECT_NEAR(r.f1, 2 * 0.6 * 0.75 / 1.35, 1e-15);
  EXPECT_FALSE(r.degenerate);

  Prf even = prf_at(Scores{0.9, 0.8, 0.7, 0.6, 0.1, 0.2, 0.3, 0.4}, Labels{1, 1, 1, 0, 1, 0, 0, 0}, 0.5);
  EXPECT_EQ(even.precision, 0.75);
  EXPECT_EQ(even.recall, 0.75);
  EXPECT_EQ(even.f1, 0.75);
}

TEST(Eval, DegeneratePrfIsZeroNotNan) {
  Prf none = prf_at(Scores{0.1, 0.2}, Labels{1, 0}, 0.9);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.f1, 0.0);
  EXPECT_TRUE(none.degenerate);
  Prf no_pos = prf_at(Scores{0.1, 0.95}, Labels{0, 0}, 0.5);
  EXPECT_EQ(no_pos.recall, 0.0);
  EXPECT_TRUE(no_pos.degenerate);
}

TEST(Eval, MttdFractions) {
  GroundTruthOutage t{0, 100, 150, {"q"}};
  EXPECT_EQ(mttd_fraction(t, 25), 0.75);
  EXPECT_EQ(mttd_fraction(t, 100), 0.0);
  EXPECT_EQ(mttd_fraction(t, 0), 1.0);
}

TEST(Eval, OutageMatchingAndFalsePositives) {
  std::vector<GroundTruthOutage> truth{{100, 200, 250, {"q"}}, {1000, 1100, 1150, {"q"}}, {2000, 2100, 2200, {"q"}}};
  std::vector<OutageEvent> ev{
      {"q", 90, 125, 260, 0.9},     // outage 1, flagged at 125
      {"r", 110, 150, 170, 0.8},    // later event for the same outage
      {"q", 1095, 1110, 1130, 0.7},  // outage 2, flagged after C
      {"q", 1500, 1520, 1540, 0.6},  // false positive run
  };
  auto d = mttd_reduction(ev, truth);
  EXPECT_EQ(d.detected, 1u);
  ASSERT_TRUE(d.outages[0].reduction.has_value());
  EXPECT_EQ(*d.outages[0].reduction, 0.75);
  EXPECT_FALSE(d.outages[1].flagged.has_value());
  EXPECT_EQ(d.runs, 3u);
  EXPECT_EQ(d.false_positive_runs, 1u);
  EXPECT_NEAR(d.precision, 2.0 / 3.0, 1e-15);
  auto late = mttd_reduction(ev, truth, 10);
  EXPECT_EQ(late.detected, 2u);
  EXPECT_NEAR(*late.outages[1].reduction, -0.1, 1e-15);

  EvalReport rep;
  rep.detection = d;
  auto j = eval_report_to_json(rep);
  EXPECT_EQ(j["outages"][1]["mttd_reduction"], "-");
  EXPECT_EQ(j["outages"][0]["flagged"], 125 * 60);
}

TEST(Eval, TruthJsonUsesSeconds) {
  std::vector<GroundTruthOutage> truth{{10, 20, 30, {"a", "b"}}};
  auto j = truth_to_json(truth);
  EXPECT_EQ(j[0]["B"], 600);
  EXPECT_EQ(truth_from_json(j), truth);
  j[0]["C"] = 0;
  EXPECT_THROW(truth_from_json(j), Error);
}
