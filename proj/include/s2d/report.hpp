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

#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "s2d/config.hpp"
#include "s2d/dataset.hpp"
#include "s2d/orchestrator.hpp"
#include "s2d/sidecar_client.hpp"

namespace s2d {

inline constexpr int kReportSchemaVersion = 1;

enum class MetricId { Pass1, BLEU, ROUGE_L, ChrF, ED, CodeBLEU, RUBY, FID, KID, CFID, IS, LPIPS, SSIM };

/// Lowercase key used on the command line and in report.json.
std::string_view metric_key(MetricId m);
/// Column title in the text table, with the better direction.
std::string_view metric_title(MetricId m);
[[nodiscard]] std::vector<MetricId> all_metrics();
/// Comma-separated keys, or "all". Throws Config on an unknown key.
[[nodiscard]] std::vector<MetricId> parse_metric_list(std::string_view text);

/// First line of an evaluation run log.
struct EvalHeader {
  std::string task;  // "s2c" or "c2c"
  std::string config_hash;
  nlohmann::json config;  // canonical AppConfig
  std::string checker;    // checker used for the final Pass@1 check and renders
  std::vector<MetricId> metrics;
};

/// One evaluated sample. Image paths are relative to the log's directory.
struct EvalSample {
  std::string id;
  std::string reference;
  RunRecord record;
  CompileStatus final_check = CompileStatus::Skipped;
  std::optional<std::string> reference_image;
  std::optional<std::string> candidate_image;
};

struct RunLog {
  EvalHeader header;
  std::vector<EvalSample> samples;
  std::filesystem::path base_dir;  // resolves image paths
};

[[nodiscard]] nlohmann::json to_json(const EvalHeader& h);
[[nodiscard]] nlohmann::json to_json(const EvalSample& s);

/// Throws Parse naming the 1-based line for a corrupt line, a missing
/// header or an empty log.
[[nodiscard]] RunLog read_run_log(const std::filesystem::path& path);
/// Replaces the file, then appends the header and one line per sample.
void write_run_log(const std::filesystem::path& path, const RunLog& log);

/// Rows sorted by id; text metrics macro-averaged over the rows where they
/// are defined; Pass@1 over final checks that were not Skipped; FID, KID,
/// C-FID and IS over the whole image set. Metrics that need the sidecar are
/// listed under "absent" when `sidecar` is null or unreachable.
[[nodiscard]] nlohmann::json build_report(const RunLog& log, SidecarClient* sidecar);

/// Aggregate row and per-sample rows as aligned columns.
[[nodiscard]] std::string render_table(const nlohmann::json& report);

/// Sidecar client for the config recorded in a log header, or nullptr.
[[nodiscard]] std::unique_ptr<SidecarClient> sidecar_for(const EvalHeader& header);

struct EvalTask {
  SketchTask task;
  std::string reference;
};

/// Records of one kind from a dataset JSONL file. S2C sketches come from
/// image_path; C2C tasks take the sketch code and edit bullets from the
/// query. Throws Parse or Config on malformed input or a kind mismatch.
[[nodiscard]] std::vector<EvalTask> load_eval_tasks(const std::filesystem::path& dataset, QueryKind kind);

struct EvalOptions {
  std::string task = "s2c";
  std::vector<MetricId> metrics = all_metrics();
  int jobs = 1;
  std::filesystem::path log_path;    // run log written here
  std::filesystem::path images_dir;  // normalized renders of references and candidates
};

/// Runs the pipeline on every task, checks and renders each final code and
/// reference with the evaluation checker, and writes the run log.
[[nodiscard]] RunLog run_eval(const std::vector<EvalTask>& tasks, const AppConfig& cfg, const EvalOptions& opts);

}  // namespace s2d
