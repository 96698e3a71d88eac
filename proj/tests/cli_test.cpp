/*
 * Copyright 2026 The GradOPS Authors.
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

#include "cli_app.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

namespace gradops::cli {
namespace {

namespace fs = std::filesystem;
const std::string kData = GRADOPS_DATA_DIR;

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun cli(std::initializer_list<std::string> args) {
  std::vector<std::string> owned{"gradops"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : owned) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gradops_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

ordered_json deconflict_doc(const std::string& input, const std::string& out,
                            std::initializer_list<std::string> extra = {}) {
  std::vector<std::string> args{"deconflict", "--input", input, "--output", out};
  args.insert(args.end(), extra.begin(), extra.end());
  std::vector<const char*> argv{"gradops"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  EXPECT_EQ(run_cli(static_cast<int>(argv.size()), argv.data(), o, e), kExitOk) << e.str();
  return ordered_json::parse(slurp(out));
}

TEST_F(CliTest, DeconflictConflictingPair) {
  const auto doc = deconflict_doc(kData + "/grads_conflict.csv", path("a.json"));
  EXPECT_EQ(doc["modified"][0], ordered_json::parse("[0.5,0.5]"));
  EXPECT_EQ(doc["modified"][1], ordered_json::parse("[0.0,1.0]"));
  EXPECT_EQ(doc["fallback"], false);
  EXPECT_EQ(doc["dots_after"][0][1], 0.0);
  EXPECT_EQ(doc["config"]["method"], "gradops");
}

TEST_F(CliTest, DeconflictNonConflictingRowsUnchanged) {
  const auto doc = deconflict_doc(kData + "/grads_no_conflict.csv", path("b.json"));
  std::ifstream in(kData + "/grads_no_conflict.csv");
  const TaskGradients g = read_gradient_csv(in);
  for (std::size_t i = 0; i < g.num_tasks(); ++i) EXPECT_EQ(doc["modified"][i].get<Vec>(), g[i]);
}

TEST_F(CliTest, DeconflictAntipodalFallback) {
  const auto doc = deconflict_doc(kData + "/grads_antipodal.csv", path("c.json"));
  EXPECT_EQ(doc["fallback"], true);
  for (const auto& x : doc["update"]) EXPECT_EQ(x.get<double>(), 0.0);
}

TEST_F(CliTest, DeconflictOtherMethods) {
  const auto doc = deconflict_doc(kData + "/grads_conflict.csv", path("d.json"), {"--method", "pcgrad"});
  EXPECT_EQ(doc["modified"][0], ordered_json::parse("[0.5,0.5]"));
  const auto gd = deconflict_doc(kData + "/grads_conflict.csv", path("e.json"), {"--method", "gd"});
  EXPECT_EQ(gd["update"], ordered_json::parse("[0.0,1.0]"));
}

TEST_F(CliTest, DeconflictParseErrorIsRowAddressed) {
  std::ofstream(path("bad.csv")) << "1,2\n3,x\n";
  const CliRun r = cli({"deconflict", "--input", path("bad.csv")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("row 2"), std::string::npos) << r.err;
  std::ofstream(path("ragged.csv")) << "1,2\n3\n";
  EXPECT_EQ(cli({"deconflict", "--input", path("ragged.csv")}).code, kExitUsage);
  EXPECT_EQ(cli({"deconflict", "--input", path("missing.csv")}).code, kExitUsage);
  EXPECT_EQ(cli({"deconflict", "--input", kData + "/grads_conflict.csv", "--method", "nope"}).code,
            kExitUsage);
}

TEST_F(CliTest, Toy2dConvergesAndIsReproducible) {
  const CliRun r = cli({"toy2d", "--method", "gradops", "--alpha", "0", "--init", "paper3", "--steps", "20000",
                     "--lr", "0.001", "--out", path("t.csv")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto summary = ordered_json::parse(slurp(path("t.csv.summary.json")));
  EXPECT_LT(summary["terminal_residual"].get<double>(), 1e-2);
  EXPECT_EQ(summary["converged"], true);
  EXPECT_EQ(summary["steps_completed"], 20000);
  const std::string csv = slurp(path("t.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,theta1,theta2,loss1,loss2,residual");
  ASSERT_EQ(cli({"toy2d", "--init", "paper3", "--steps", "20000", "--out", path("t2.csv")}).code, kExitOk);
  EXPECT_EQ(slurp(path("t2.csv")), csv);
}

TEST_F(CliTest, Toy2dGdFlagsNonConvergence) {
  ASSERT_EQ(cli({"toy2d", "--method", "gd", "--init", "paper1", "--out", path("g.csv")}).code, kExitOk);
  const auto summary = ordered_json::parse(slurp(path("g.csv.summary.json")));
  EXPECT_GE(summary["terminal_residual"].get<double>(), 1e-2);
  EXPECT_EQ(summary["converged"], false);
}

TEST_F(CliTest, Toy2dUsageAndDivergence) {
  EXPECT_EQ(cli({"toy2d", "--steps", "0", "--out", path("z.csv")}).code, kExitUsage);
  EXPECT_EQ(cli({"toy2d", "--init", "paper9", "--out", path("z.csv")}).code, kExitUsage);
  EXPECT_EQ(cli({"toy2d", "--init", "0.1", "--out", path("z.csv")}).code, kExitUsage);
  const CliRun r = cli({"toy2d", "--method", "gd", "--lr", "1e300", "--steps", "100", "--out", path("div.csv")});
  EXPECT_EQ(r.code, kExitDivergence);
  EXPECT_TRUE(fs::exists(path("div.csv")));
  const auto summary = ordered_json::parse(slurp(path("div.csv.summary.json")));
  EXPECT_EQ(summary["diverged"], true);
}

TEST_F(CliTest, Toy2dCustomInit) {
  ASSERT_EQ(cli({"toy2d", "--init", "0.2,-0.4", "--steps", "5", "--out", path("c.csv")}).code, kExitOk);
  const auto summary = ordered_json::parse(slurp(path("c.csv.summary.json")));
  EXPECT_EQ(summary["init"], ordered_json::parse("[0.2,-0.4]"));
}

TEST_F(CliTest, SweepWritesOneFilePerCell) {
  const CliRun r = cli({"sweep", "--alphas", "0,-2,-5", "--methods", "gradops", "--out-dir", path("sw")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::size_t csvs = 0;
  for (const auto& e : fs::directory_iterator(path("sw"))) {
    if (e.path().extension() == ".csv" && e.path().filename() != "summary.csv") ++csvs;
  }
  EXPECT_EQ(csvs, 9u);
  std::istringstream summary(slurp(dir_ / "sw" / "summary.csv"));
  std::string line;
  std::getline(summary, line);
  std::map<std::string, std::set<std::string>> points;
  while (std::getline(summary, line)) {
    const auto cols = detail::split_csv_line(line);
    ASSERT_EQ(cols.size(), 9u);
    EXPECT_EQ(cols[4], "ok");
    points[cols[2]].insert(cols[5] + "," + cols[6]);
  }
  ASSERT_EQ(points.size(), 3u);
  for (const auto& [init, ends] : points) EXPECT_GE(ends.size(), 2u) << init;
}

TEST_F(CliTest, SweepUsageErrors) {
  EXPECT_EQ(cli({"sweep", "--alphas", "", "--out-dir", path("e")}).code, kExitUsage);
  EXPECT_EQ(cli({"sweep", "--methods", "", "--out-dir", path("e")}).code, kExitUsage);
  EXPECT_EQ(cli({"sweep", "--alphas", "0"}).code, kExitUsage);
}

TEST_F(CliTest, SweepCollapsesAlphaForBaselines) {
  ASSERT_EQ(cli({"sweep", "--alphas", "0,-2", "--methods", "gd,mgda", "--inits", "paper2", "--steps", "10",
                 "--out-dir", path("b")})
                .code,
            kExitOk);
  EXPECT_TRUE(fs::exists(dir_ / "b" / "gd_init1.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "b" / "mgda_init1.csv"));
}

TEST_F(CliTest, MetricsTable1) {
  const CliRun r = cli({"metrics", "--table", kData + "/table1.csv", "--baseline", "Single-task"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("Uniform,0.0052,0.52%,14.00"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Single-task,0.0000,0.00%,4.33"), std::string::npos);
  const CliRun avg = cli({"metrics", "--table", kData + "/table1.csv", "--baseline", "Single-task", "--tie-rule",
                       "average"});
  EXPECT_NE(avg.out.find("Single-task,0.0000,0.00%,4.50"), std::string::npos);
}

TEST_F(CliTest, MetricsMissingBaseline) {
  const CliRun r = cli({"metrics", "--table", kData + "/table1.csv", "--baseline", "Oracle"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("Oracle"), std::string::npos);
}

TEST_F(CliTest, TrainWritesReportAndTable) {
  const CliRun r = cli({"train", "--config", kData + "/csv_gradops.conf", "--report", path("r.json"), "--table",
                     path("row.csv")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto report = ordered_json::parse(slurp(path("r.json")));
  EXPECT_EQ(report["tasks"], ordered_json::parse(R"(["task_a","task_b"])"));
  EXPECT_EQ(report["config"]["method"], "gradops");
  const MetricTable row = read_metric_table(path("row.csv"));
  EXPECT_EQ(row.methods, (std::vector<std::string>{"GradOPS(0)"}));
  EXPECT_EQ(row.values[0], report["final_test_auc"].get<std::vector<double>>());
}

TEST_F(CliTest, TrainSeedOverrideAndBadConfig) {
  const CliRun a = cli({"train", "--config", kData + "/csv_gradops.conf", "--seed", "99", "--report", path("a.json")});
  ASSERT_EQ(a.code, kExitOk);
  EXPECT_EQ(ordered_json::parse(slurp(path("a.json")))["config"]["seed"], "99");
  std::ofstream(path("bad.conf")) << "epochs = many\n";
  EXPECT_EQ(cli({"train", "--config", path("bad.conf")}).code, kExitUsage);
}

TEST_F(CliTest, HelpListsDefaults) {
  const CliRun r = cli({"toy2d", "--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("--steps UINT [20000]"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("--lr FLOAT [0.001]"), std::string::npos);
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
}

}  // namespace
}  // namespace gradops::cli
