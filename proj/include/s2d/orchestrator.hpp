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
#include <functional>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "s2d/agents.hpp"
#include "s2d/verify.hpp"

namespace s2d {

inline constexpr int kRunSchemaVersion = 1;

enum class Phase { Generate, Edit };

std::string_view to_string(Phase phase);

struct Attempt {
  Phase phase = Phase::Generate;
  std::string code;
  CompileResult compile;
  std::optional<JudgeVerdict> verdict;
  std::optional<std::string> error;  // backend or extraction failure
};

enum class FinalStatus { Accepted, Failed };

enum class ErrorLabel { MisalignedStructure, MisidentifiedElement, MisconnectedRelationship };

std::string_view to_string(ErrorLabel label);
ErrorLabel error_label_from_string(std::string_view text);

struct RunRecord {
  std::string task_id;
  std::vector<Attempt> attempts;
  FinalStatus status = FinalStatus::Failed;
  std::string final_code;    // accepted code, or the best attempt's code on failure
  std::string diagram_path;  // saved render or compile artifact of the accepted code
  std::string reason;        // why the run failed
  std::optional<int> best_attempt;
  std::optional<ErrorLabel> error_label;
  std::map<std::string, double> timings;  // seconds per phase
};

struct PipelineConfig {
  int retry_budget = 3;
  bool judge_enabled = true;
  bool compiler_enabled = true;
  double temperature = 0.0;
  std::shared_ptr<AgentBackend> generator;
  std::shared_ptr<AgentBackend> editor;
  std::shared_ptr<AgentBackend> judge;
  std::shared_ptr<Checker> checker;
  // Where renders of accepted code are written; empty to skip.
  std::filesystem::path diagram_dir;
};

/// Throws Config when a backend needed by an enabled stage is missing.
void validate(const PipelineConfig& cfg, const SketchTask& task);

/// Generate, optionally edit, compile-check and judge, retrying the
/// responsible phase until accepted or 1 + retry_budget attempts are spent.
/// Backend and compiler failures are recorded in the attempts, never thrown.
[[nodiscard]] RunRecord run_pipeline(const SketchTask& task, const PipelineConfig& cfg);

[[nodiscard]] nlohmann::json to_json(const RunRecord& record);
[[nodiscard]] RunRecord run_record_from_json(const nlohmann::json& j);

/// Appends `line` plus a newline to `path` with one write(2) under O_APPEND,
/// so concurrent writers never interleave within a line. Throws Io.
void append_line(const std::filesystem::path& path, const std::string& line);

/// One JSON line per call; re-running a task appends a new line.
void persist_run(const RunRecord& record, const std::filesystem::path& log_path);

/// Runs tasks on `jobs` worker threads. Results come back in input order;
/// `on_done` (if set) is called from worker threads as each run finishes.
[[nodiscard]] std::vector<RunRecord> run_batch(const std::vector<SketchTask>& tasks, const PipelineConfig& cfg,
                                               int jobs,
                                               const std::function<void(const RunRecord&)>& on_done = {});

/// Classifies a failed run against the reference code by node graph:
/// vertex count, then labels, then edges. nullopt when nothing differs or
/// either side has no graph.
[[nodiscard]] std::optional<ErrorLabel> classify_failure(const DiagramCode& produced, const DiagramCode& reference);

}  // namespace s2d
