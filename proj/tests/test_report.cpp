// Copyright 2026 The s2d Authors
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

#include <fstream>
#include <sstream>

#include "eval_fixtures.hpp"
#include "s2d/error.hpp"
#include "s2d/process.hpp"
#include "s2d/report.hpp"
// httplib after Eigen: <resolv.h> defines a macro that breaks Eigen.
#include "mock_sidecar.hpp"

namespace fs = std::filesystem;
using namespace s2d;
using nlohmann::json;

namespace {

class ReportTest : public ::testing::Test {
 protected:
  void SetUp() override { dir_ = make_temp_dir(fs::temp_directory_path(), "s2d-report-"); }
  void TearDown() override { fs::remove_all(dir_); }

  RunLog Eval(const std::string& sidecar_url, std::vector<MetricId> metrics = all_metrics()) {
    const auto dataset = testutil::WriteEvalFixture(dir_, sidecar_url);
    const auto cfg = load_config(dir_ / "config.toml");
    EvalOptions o;
    o.metrics = std::move(metrics);
    o.jobs = 3;
    o.log_path = dir_ / "out" / "runlog.jsonl";
    o.images_dir = dir_ / "out" / "images";
    fs::create_directories(dir_ / "out");
    return run_eval(load_eval_tasks(dataset, QueryKind::S2C), cfg, o);
  }

  fs::path dir_;
};

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Metrics, ListParsing) {
  EXPECT_EQ(parse_metric_list("chrf"), std::vector<MetricId>{MetricId::ChrF});
  EXPECT_EQ(parse_metric_list("ssim, bleu,bleu"), (std::vector<MetricId>{MetricId::BLEU, MetricId::SSIM}));
  EXPECT_EQ(parse_metric_list("all").size(), 13u);
  EXPECT_THROW((void)parse_metric_list("bleurt"), Error);
  for (const auto m : all_metrics()) EXPECT_EQ(parse_metric_list(metric_key(m)).front(), m);
}

TEST_F(ReportTest, PassAtOneIsSeventyFive) {
  const auto log = Eval("");
  const auto report = build_report(log, nullptr);
  EXPECT_EQ(report["aggregates"]["pass1"].get<double>(), 75.0);
  ASSERT_EQ(report["rows"].size(), 4u);
  EXPECT_EQ(report["rows"][3]["id"], "s4");
  EXPECT_EQ(report["rows"][3]["final"], "Failed");
  EXPECT_EQ(report["rows"][3]["attempts"], 2);
  EXPECT_EQ(report["rows"][3]["pass1"], false);
  EXPECT_EQ(report["rows"][0]["pass1"], true);
  EXPECT_EQ(report["exclusions"]["failed_runs"], 1);
  EXPECT_EQ(report["exclusions"]["skipped_checks"], 0);
}

TEST_F(ReportTest, AggregatesAreMacroAverages) {
  const auto report = build_report(Eval(""), nullptr);
  for (const char* key : {"bleu", "rouge_l", "chrf", "ed", "codebleu", "ruby", "ssim"}) {
    double sum = 0;
    int n = 0;
    for (const auto& r : report["rows"]) {
      if (!r[key].is_null()) {
        sum += r[key].get<double>();
        ++n;
      }
    }
    ASSERT_GT(n, 0) << key;
    EXPECT_DOUBLE_EQ(report["aggregates"][key].get<double>(), sum / n) << key;
  }
  // Identical code scores 100 on the three accepted samples.
  EXPECT_DOUBLE_EQ(report["rows"][0]["bleu"].get<double>(), 100.0);
  EXPECT_DOUBLE_EQ(report["rows"][0]["ssim"].get<double>(), 1.0);
  EXPECT_TRUE(report["rows"][3]["ssim"].is_null());
}

TEST_F(ReportTest, MetricSelection) {
  const auto report = build_report(Eval("", {MetricId::ChrF}), nullptr);
  EXPECT_EQ(report["aggregates"].size(), 1u);
  EXPECT_TRUE(report["aggregates"].contains("chrf"));
  EXPECT_EQ(report["meta"]["metrics"], json::array({"chrf"}));
  for (const auto& r : report["rows"]) {
    std::set<std::string> keys;
    for (const auto& [k, v] : r.items()) keys.insert(k);
    keys.erase("error_label");
    EXPECT_EQ(keys, (std::set<std::string>{"id", "final", "final_check", "attempts", "chrf"}));
  }
}

TEST_F(ReportTest, SidecarDownDegrades) {
  const auto log = Eval("http://127.0.0.1:9");
  const auto client = sidecar_for(log.header);
  ASSERT_TRUE(client);
  const auto report = build_report(log, client.get());
  EXPECT_EQ(report["absent"], json::array({"fid", "kid", "cfid", "is", "lpips"}));
  EXPECT_TRUE(report["aggregates"].contains("pass1"));
  EXPECT_TRUE(report["aggregates"].contains("ssim"));
  EXPECT_FALSE(report["aggregates"].contains("fid"));
  EXPECT_FALSE(report["rows"][0].contains("lpips"));
  ASSERT_FALSE(report["warnings"].empty());
  EXPECT_NE(report["warnings"][0].get<std::string>().find("sidecar unavailable"), std::string::npos);
}

TEST_F(ReportTest, SidecarMetrics) {
  testutil::MockSidecar mock;
  const auto log = Eval(mock.url());
  const auto client = sidecar_for(log.header);
  const auto report = build_report(log, client.get());
  EXPECT_TRUE(report["absent"].empty()) << report["absent"].dump();
  for (const char* k : {"fid", "kid", "cfid", "is", "lpips"}) EXPECT_TRUE(report["aggregates"].contains(k)) << k;
  EXPECT_GE(report["aggregates"]["fid"].get<double>(), 0.0);
  EXPECT_GE(report["aggregates"]["is"].get<double>(), 1.0);
  EXPECT_NEAR(report["rows"][0]["lpips"].get<double>(), 0.0, 1e-6);
  EXPECT_EQ(report["meta"]["sidecar_model_version"], "mock-1");
  EXPECT_TRUE(report["details"]["kid"].contains("std"));
}

TEST_F(ReportTest, ReplayIsByteIdentical) {
  const auto log = Eval("");
  const auto direct = build_report(log, nullptr).dump(2);
  const auto replayed = build_report(read_run_log(dir_ / "out" / "runlog.jsonl"), nullptr).dump(2);
  EXPECT_EQ(direct, replayed);
  EXPECT_EQ(render_table(json::parse(direct)), render_table(json::parse(replayed)));
}

TEST_F(ReportTest, LogShape) {
  (void)Eval("");
  std::ifstream in(dir_ / "out" / "runlog.jsonl");
  std::vector<json> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(json::parse(l));
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0]["type"], "header");
  EXPECT_EQ(lines[0]["v"], 1);
  EXPECT_EQ(lines[0]["config_hash"].get<std::string>().size(), 16u);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    EXPECT_EQ(lines[i]["type"], "sample");
    EXPECT_EQ(lines[i]["run"]["v"], 1);
    EXPECT_TRUE(fs::exists(dir_ / "out" / lines[i]["reference_image"].get<std::string>()));
  }
  const auto img = read_png(dir_ / "out" / lines[1]["candidate_image"].get<std::string>());
  EXPECT_EQ(img.width(), 800);
  EXPECT_EQ(img.height(), 600);
}

TEST_F(ReportTest, CorruptLogs) {
  (void)Eval("");
  const auto path = dir_ / "out" / "runlog.jsonl";
  auto text = Slurp(path);
  std::ofstream(dir_ / "trunc.jsonl") << text.substr(0, text.size() - 20);
  try {
    (void)read_run_log(dir_ / "trunc.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Parse);
    EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos) << e.what();
  }
  std::ofstream(dir_ / "empty.jsonl") << "";
  EXPECT_THROW((void)read_run_log(dir_ / "empty.jsonl"), Error);
  std::ofstream(dir_ / "headless.jsonl") << text.substr(text.find('\n') + 1);
  EXPECT_THROW((void)read_run_log(dir_ / "headless.jsonl"), Error);
}

TEST_F(ReportTest, Table) {
  const auto table = render_table(build_report(Eval(""), nullptr));
  EXPECT_NE(table.find("Pass@1↑"), std::string::npos);
  EXPECT_NE(table.find("75.00"), std::string::npos);
  EXPECT_NE(table.find("absent"), std::string::npos);
  EXPECT_NE(table.find("s4"), std::string::npos);
}

TEST_F(ReportTest, TaskKindMismatch) {
  const auto dataset = testutil::WriteEvalFixture(dir_);
  try {
    (void)load_eval_tasks(dataset, QueryKind::C2C);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
  }
}

TEST_F(ReportTest, C2CTasksFromQueries) {
  const auto [s2c, c2c] = build_queries("\\begin{tikzpicture}\\node (a) {A};\\end{tikzpicture}\n",
                                        testutil::kValidCode, "images/x.png");
  auto rec = c2c;
  rec.id = "x";
  std::ofstream(dir_ / "c2c.jsonl") << to_json(rec).dump() << "\n";
  const auto tasks = load_eval_tasks(dir_ / "c2c.jsonl", QueryKind::C2C);
  ASSERT_EQ(tasks.size(), 1u);
  EXPECT_EQ(*tasks[0].task.initial_code, "\\begin{tikzpicture}\\node (a) {A};\\end{tikzpicture}");
  EXPECT_FALSE(tasks[0].task.edit_instructions->empty());
  EXPECT_EQ(tasks[0].reference, testutil::kValidCode);
}
