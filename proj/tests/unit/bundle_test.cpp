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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tailcast/tailcast.hpp"

using namespace tailcast;
namespace fs = std::filesystem;

namespace {

ModelBundle sample_bundle() {
  ModelBundle b;
  b.config.n_metrics = 2;
  b.config.qos = {"lat"};
  b.config.window = 5;
  b.config.hidden_per_direction = 3;
  b.config.mdn_hidden = {4};
  b.config.clf_hidden = {2};
  b.config.seed = 12;
  b.params = init_params(b.config);
  b.metrics = {{"lat", MetricCategory::kUtilizationLike, true}, {"err", MetricCategory::kErrorLike, false}};
  b.normalization.metrics = {{"lat", 1.0 / 3.0, 9.75}, {"err", 0.0, 2.0}};
  b.qos_reference["lat"] = {1.0 / 3.0, 2.0, 9.75};
  b.set_percentile(95);
  b.decision.theta = 0.123456789012345;
  b.decision.youden_j = 0.7;
  return b;
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("tailcast_bundle_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

using Checkpoint = TempDir;

}  // namespace

TEST_F(Checkpoint, SaveLoadSaveIsByteIdentical) {
  ModelBundle b = sample_bundle();
  save_checkpoint(b, path("a.json"));
  ModelBundle loaded = load_checkpoint(path("a.json"));
  save_checkpoint(loaded, path("b.json"));
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(loaded.params, b.params);
  EXPECT_EQ(loaded.config, b.config);
  EXPECT_EQ(loaded.decision, b.decision);
  EXPECT_EQ(loaded.qos_reference, b.qos_reference);
}

TEST_F(Checkpoint, LoadedBundlePredictsIdentically) {
  ModelBundle b = sample_bundle();
  save_checkpoint(b, path("a.json"));
  ModelBundle loaded = load_checkpoint(path("a.json"));
  std::vector<double> x(10);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * static_cast<double>(i);
  const double* p = x.data();
  auto a = predict(b.config, b.params, std::span<const double* const>(&p, 1));
  auto c = predict(loaded.config, loaded.params, std::span<const double* const>(&p, 1));
  EXPECT_EQ(a[0].mixtures, c[0].mixtures);
  EXPECT_EQ(a[0].clf_prob, c[0].clf_prob);
}

TEST_F(Checkpoint, TruncatedFileIsCorrupt) {
  ModelBundle b = sample_bundle();
  save_checkpoint(b, path("a.json"));
  const std::string full = slurp(path("a.json"));
  std::ofstream(path("cut.json"), std::ios::binary) << full.substr(0, full.size() / 2);
  try {
    load_checkpoint(path("cut.json"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCorruptFile);
  }
}

TEST_F(Checkpoint, FutureVersionIsRejected) {
  ModelBundle b = sample_bundle();
  auto j = bundle_to_json(b);
  j["version"] = kCheckpointVersion + 1;
  std::ofstream(path("v.json")) << j.dump();
  try {
    load_checkpoint(path("v.json"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kVersionMismatch);
  }
}

TEST_F(Checkpoint, WrongShapeIsCorrupt) {
  ModelBundle b = sample_bundle();
  auto j = bundle_to_json(b);
  j["config"]["hidden_per_direction"] = 4;
  std::ofstream(path("s.json")) << j.dump();
  EXPECT_THROW(load_checkpoint(path("s.json")), Error);
  try {
    load_checkpoint(path("missing.json"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

TEST(Bundle, TauFollowsTrainingReference) {
  ModelBundle b = sample_bundle();
  EXPECT_EQ(b.decision.tau.at("lat"), 9.75);
  EXPECT_THROW(b.tau_raw("nope", 50), Error);
  EXPECT_THROW(b.tau_normalized({}), Error);
}
