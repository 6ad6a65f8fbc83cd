// Copyright (c) 2026, The PSIS Toolkit Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "psis/commands.hpp"
#include "psis/config.hpp"
#include "psis/error.hpp"
#include "psis/progressive.hpp"
#include "psis/util.hpp"
#include "fixtures.hpp"

namespace psis {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::map<std::string, std::string> parse_summary(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (auto eq = line.find('='); eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  return kv;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PSIS_CLI_PATH) + " --quiet " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

TEST(RunConfig, ParsesFileWithComments) {
  RunConfig cfg;
  std::istringstream in("# settings\nepsilon = 0.25\n\nK=2\n  p = 5  # trailing\n");
  cfg.load_text(in, "test.cfg");
  EXPECT_DOUBLE_EQ(cfg.pipeline.match.epsilon, 0.25);
  EXPECT_EQ(cfg.pipeline.k, 2);
  EXPECT_DOUBLE_EQ(cfg.pipeline.p, 5.0);
}

TEST(RunConfig, ErrorsNameOriginAndLine) {
  RunConfig cfg;
  std::istringstream in("seed = 3\nbogus = 1\n");
  try {
    cfg.load_text(in, "x.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:2"), std::string::npos);
  }
  EXPECT_THROW(cfg.set("epsilon", "abc"), ConfigError);
  EXPECT_THROW(cfg.set("K", "2.5"), ConfigError);
  EXPECT_THROW(cfg.set("baseline", "median"), ConfigError);
  std::istringstream no_eq("seed 3\n");
  EXPECT_THROW(cfg.load_text(no_eq, "y.cfg"), ConfigError);
}

TEST(RunConfig, LaterSettingsWin) {
  RunConfig cfg;
  std::istringstream in("gamma = 0.5\n");
  cfg.load_text(in, "a");
  cfg.set("gamma", "0.25");
  EXPECT_DOUBLE_EQ(cfg.pipeline.gamma, 0.25);
}

TEST(RunConfig, HashIgnoresPathsAndJobs) {
  RunConfig a;
  RunConfig b;
  b.set("jobs", "4");
  b.set("out", "/elsewhere");
  b.set("annotations", "/x.json");
  EXPECT_EQ(a.hash(), b.hash());
  b.set("seed", "99");
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_NE(a.canonical().find("epsilon="), std::string::npos);
  EXPECT_EQ(a.canonical().find("jobs="), std::string::npos);
}

TEST(RunConfig, ValidateRejectsBadValues) {
  RunConfig cfg;
  cfg.set("epsilon", "0");
  EXPECT_THROW(cfg.validate(), ConfigError);
  RunConfig g;
  g.set("gamma", "0");
  EXPECT_THROW(g.validate(), ConfigError);
  RunConfig r;
  r.set("rho1", "4");
  EXPECT_THROW(r.validate(), ConfigError);
}

class DiskRun : public ::testing::Test {
 protected:
  void SetUp() override {
    set_log_quiet(true);
    root_ = fs::temp_directory_path() / ("psis_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    testing::skewed_fixture({3, 1}, 16, 8).write(root_ / "data");
    fs::create_directories(root_ / "ap");
  }
  void TearDown() override { fs::remove_all(root_); }

  RunConfig config(const std::string& out) const {
    RunConfig cfg;
    cfg.set("annotations", (root_ / "data" / "annotations.json").string());
    cfg.set("images", (root_ / "data" / "images").string());
    cfg.set("out", (root_ / out).string());
    cfg.set("ap_dir", (root_ / "ap").string());
    cfg.set("K", "1");
    cfg.set("p", "20");
    cfg.set("T", "2");
    cfg.set("T_total", "3");
    cfg.set("seed", "5");
    cfg.set("equal_target", "8");
    return cfg;
  }
  void write_ap(int epoch) const {
    save_ap_report({epoch, "stub", {{1, 0.7}, {2, 0.2}}}, root_ / "ap" / DirectoryApSource::file_name(epoch));
  }

  fs::path root_;
};

TEST_F(DiskRun, PipelineOutputsSatisfyAccountingIdentity) {
  write_ap(2);
  const RunConfig cfg = config("out");
  std::ostringstream log;
  ASSERT_EQ(run_pipeline(cfg, false, log), "complete");
  const auto m = read_json(root_ / "out" / "manifest.json");
  const auto& c = m.at("counts");
  EXPECT_EQ(c.at("psis").get<std::size_t>(),
            c.at("original").get<std::size_t>() + c.at("uniform").get<std::size_t>() +
                c.at("augmentation_total").get<std::size_t>());
  EXPECT_EQ(c.at("original").get<std::size_t>(), 32u);
  EXPECT_EQ(c.at("uniform").get<std::size_t>(), c.at("equalized").get<std::size_t>());
  EXPECT_GT(c.at("augmentation_total").get<std::size_t>(), 0u);
  EXPECT_EQ(m.at("config_hash").get<std::string>(), cfg.hash());

  const auto psis = read_json(root_ / "out" / "omega_psis.json");
  EXPECT_EQ(psis.at("images").size(), c.at("psis").get<std::size_t>());
  for (const auto& f : m.at("files")) EXPECT_TRUE(fs::exists(root_ / "out" / f.get<std::string>())) << f;
  for (const auto& im : psis.at("images")) {
    const std::string name = im.at("file_name").get<std::string>();
    if (name.rfind("images/", 0) == 0)
      EXPECT_TRUE(fs::exists(root_ / "out" / name)) << name;
    else
      EXPECT_TRUE(fs::exists(root_ / "data" / "images" / name)) << name;
  }
  const auto kv = parse_summary(log.str());
  EXPECT_EQ(kv.at("status"), "complete");
  EXPECT_EQ(kv.at("psis"), std::to_string(c.at("psis").get<std::size_t>()));
  EXPECT_TRUE(fs::exists(root_ / "out" / "weights_stage0.csv"));
  EXPECT_TRUE(fs::exists(root_ / "out" / "weights_stage1.csv"));
}

TEST_F(DiskRun, PauseThenResumeMatchesSingleRun) {
  write_ap(2);
  std::ostringstream sink;
  ASSERT_EQ(run_pipeline(config("full"), false, sink), "complete");
  fs::remove(root_ / "ap" / DirectoryApSource::file_name(2));

  const RunConfig cfg = config("split");
  std::ostringstream log;
  ASSERT_EQ(run_pipeline(cfg, false, log), "paused");
  EXPECT_EQ(parse_summary(log.str()).at("status"), "paused");
  EXPECT_EQ(read_json(root_ / "split" / "manifest.json").at("status"), "paused");
  EXPECT_FALSE(fs::exists(root_ / "split" / "omega_psis.json"));
  write_ap(2);
  ASSERT_EQ(run_pipeline(cfg, true, sink), "complete");
  for (const char* f : {"omega_psis.json", "omega_uni.json", "omega_aug_r1.json", "move_log.txt", "checkpoint.json"})
    EXPECT_EQ(slurp(root_ / "full" / f), slurp(root_ / "split" / f)) << f;
}

TEST_F(DiskRun, ResumeWithChangedConfigFails) {
  std::ostringstream sink;
  ASSERT_EQ(run_pipeline(config("out"), false, sink), "paused");
  RunConfig other = config("out");
  other.set("seed", "6");
  EXPECT_THROW(run_pipeline(other, true, sink), ConfigError);
}

TEST_F(DiskRun, WeightsWithGammaOneAreAllOne) {
  RunConfig cfg = config("w");
  cfg.set("gamma", "1");
  std::ostringstream sink;
  run_weights(cfg, sink);
  std::istringstream csv(slurp(root_ / "w" / "weights.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "class_id,name,n_c,w_c,gamma");
  int rows = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> cols;
    std::istringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cols.push_back(cell);
    ASSERT_EQ(cols.size(), 5u);
    EXPECT_EQ(cols[3], "1");
    ++rows;
  }
  EXPECT_EQ(rows, 2);
}

TEST_F(DiskRun, BalancingRaisesEntropy) {
  std::ostringstream before;
  run_stats(config("s0"), before);
  std::ostringstream sink;
  run_balance(config("b"), sink);
  RunConfig after_cfg = config("s1");
  after_cfg.set("annotations", (root_ / "b" / "omega_uni.json").string());
  after_cfg.set("images", (root_ / "b").string());
  std::ostringstream after;
  run_stats(after_cfg, after);
  const double h0 = std::stod(parse_summary(before.str()).at("entropy"));
  const double h1 = std::stod(parse_summary(after.str()).at("entropy"));
  EXPECT_GT(h1, h0);
}

TEST_F(DiskRun, PlanCommandWritesPlan) {
  write_ap(2);
  RunConfig cfg = config("plan");
  cfg.set("ap_report", (root_ / "ap" / DirectoryApSource::file_name(2)).string());
  std::ostringstream sink;
  run_plan(cfg, sink);
  const auto plan = AugmentationPlan::from_json(read_json(root_ / "plan" / "plan.json"));
  ASSERT_EQ(plan.entries.size(), 1u);
  EXPECT_EQ(plan.entries[0].class_id, 2);
  EXPECT_EQ(plan.entries[0].basis, 16);
}

TEST_F(DiskRun, ExitCodes) {
  const std::string data = " --annotations " + (root_ / "data" / "annotations.json").string() + " --images " +
                           (root_ / "data" / "images").string();
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("no-such-command"), 1);
  EXPECT_EQ(run_cli("stats" + data + " --epsilon -1 --out " + (root_ / "bad_eps").string()), 1);
  EXPECT_FALSE(fs::exists(root_ / "bad_eps"));

  std::ofstream(root_ / "broken.json") << "{\"images\": [";
  EXPECT_EQ(run_cli("stats --annotations " + (root_ / "broken.json").string() + " --out " + (root_ / "broken").string()), 2);
  EXPECT_FALSE(fs::exists(root_ / "broken"));

  EXPECT_EQ(run_cli("stats --annotations " + (root_ / "missing.json").string() + " --out " + (root_ / "m").string()), 3);
  EXPECT_EQ(run_cli("stats" + data + " --out " + (root_ / "ok").string()), 0);
  EXPECT_TRUE(fs::exists(root_ / "ok" / "histogram.csv"));

  // Config file first, flags override.
  std::ofstream(root_ / "run.cfg") << "epsilon = 0\n";
  EXPECT_EQ(run_cli("--config " + (root_ / "run.cfg").string() + " stats" + data + " --out " + (root_ / "c1").string()), 1);
  EXPECT_EQ(run_cli("--config " + (root_ / "run.cfg").string() + " stats" + data + " --epsilon 0.3 --out " +
                    (root_ / "c2").string()),
            0);
}

TEST(EmptyDataset, BuildCandidatesSucceeds) {
  set_log_quiet(true);
  const fs::path root = fs::temp_directory_path() / "psis_cli_empty";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "empty.json") << R"({"images": [], "annotations": [], "categories": [{"id": 1, "name": "a"}]})";
  RunConfig cfg;
  cfg.set("annotations", (root / "empty.json").string());
  cfg.set("out", (root / "out").string());
  std::ostringstream sink;
  EXPECT_NO_THROW(run_build_candidates(cfg, sink));
  const auto j = read_json(root / "out" / "candidates.json");
  EXPECT_TRUE(j.contains("config_hash"));
  EXPECT_EQ(run_cli("build-candidates --annotations " + (root / "empty.json").string() + " --out " +
                    (root / "out2").string()),
            0);
  fs::remove_all(root);
}

}  // namespace
}  // namespace psis
