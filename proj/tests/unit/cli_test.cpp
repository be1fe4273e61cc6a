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
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "tailcast/tailcast.hpp"

using namespace tailcast;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(TAILCAST_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void fill_numbers(nlohmann::json& j, double v) {
  if (j.is_number()) {
    j = v;
  } else if (j.is_array() || j.is_object()) {
    for (auto& x : j) fill_numbers(x, v);
  }
}

// A fault-free scenario trained once for the whole suite: its proxy labels
// are all negative.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "tailcast_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ScenarioConfig sc;
    sc.seed = 2;
    sc.n_metrics = 4;
    sc.n_qos = 1;
    sc.duration = 2 * 1440;
    std::ofstream(dir_ / "quiet.json") << scenario_to_json(sc).dump();
    nlohmann::json pc = {
        {"model", {{"window", 10}, {"hidden_per_direction", 3}, {"mdn_hidden", {8}}, {"clf_hidden", {3}}}},
        {"training", {{"stride", 20}, {"epochs", 1}}}};
    std::ofstream(dir_ / "pipeline.json") << pc.dump();
    trained_ = run("generate --config " + p("quiet.json") + " --out " + p("data")) == 0 &&
               run("train" + data() + " --config " + p("pipeline.json") + " --out " + p("model")) == 0;
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string p(const std::string& rel) { return (dir_ / rel).string(); }
  static std::string data() { return " --data " + p("data/metrics.csv") + " --alerts " + p("data/alerts.jsonl"); }

  static inline fs::path dir_;
  static inline bool trained_ = false;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("train --out " + p("x")), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, InputErrorsExitTwo) {
  EXPECT_EQ(run("train" + data() + " --config " + p("missing.json") + " --out " + p("x")), 2);
  EXPECT_EQ(run("predict --checkpoint " + p("missing.json") + " --data " + p("data/metrics.csv") + " --out " + p("x")),
            2);
  // Uncalibrated checkpoints have no threshold to predict with.
  ASSERT_TRUE(trained_);
  EXPECT_EQ(run("predict --checkpoint " + p("model/model.json") + " --data " + p("data/metrics.csv") + " --out " +
                p("x")),
            2);
}

TEST_F(Cli, SingleClassCalibrationExitsFour) {
  ASSERT_TRUE(trained_);
  EXPECT_EQ(run("calibrate --checkpoint " + p("model/model.json") + data() + " --out " + p("cal.json")), 4);
}

TEST_F(Cli, NumericFailureExitsThree) {
  ASSERT_TRUE(trained_);
  nlohmann::json j;
  std::ifstream(p("model/model.json")) >> j;
  // Overflowing the output layer yields non-finite mixtures.
  fill_numbers(j["params"]["mdn.0.layer1.w"]["values"], 1e308);
  fill_numbers(j["params"]["mdn.0.layer1.b"]["values"], 1e308);
  j["decision"]["theta"] = 0.5;
  std::ofstream(p("broken.json")) << j.dump();
  EXPECT_EQ(run("predict --checkpoint " + p("broken.json") + " --data " + p("data/metrics.csv") + " --out " + p("x")),
            3);
}
