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
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "s2d/agents.hpp"
#include "s2d/image_metrics.hpp"
#include "s2d/orchestrator.hpp"
#include "s2d/sidecar_client.hpp"
#include "s2d/verify.hpp"

namespace s2d {

enum class CompilerMode { Tex, Fast, Auto, Off };

std::string_view to_string(CompilerMode mode);

struct BackendSpec {
  std::string type;                   // "scripted" or "remote"
  std::filesystem::path script;       // scripted: JSON script, resolved against the config directory
  RemoteOptions remote;               // remote
};

/// Resolved contents of a config file. Roles are "generator", "editor",
/// "judge" and "sketcher"; a role without its own table falls back to
/// [backends.default] when present.
struct AppConfig {
  int retry_budget = 3;
  bool judge_enabled = true;
  CompilerMode compiler = CompilerMode::Auto;
  double temperature = 0.0;
  int jobs = 0;  // 0: hardware concurrency
  ToolchainConfig toolchain;
  int dpi = 150;
  std::map<std::string, BackendSpec> backends;
  std::optional<SidecarOptions> sidecar;  // absent: image metrics needing features are skipped
  KidOptions kid;
};

/// Throws Config with the offending key on unknown keys, wrong types or
/// out-of-range values.
[[nodiscard]] AppConfig parse_config(std::string_view text, const std::filesystem::path& base_dir);
[[nodiscard]] AppConfig load_config(const std::filesystem::path& path);

/// Canonical form; the config hash is FNV-1a of its compact dump.
[[nodiscard]] nlohmann::json to_json(const AppConfig& cfg);
[[nodiscard]] std::string config_hash(const AppConfig& cfg);

[[nodiscard]] int effective_jobs(const AppConfig& cfg);

/// nullptr when the role is not configured.
[[nodiscard]] std::shared_ptr<AgentBackend> make_backend(const AppConfig& cfg, const std::string& role);

/// Tex or Fast resolved against PATH for Auto; nullptr for Off.
[[nodiscard]] std::shared_ptr<Checker> make_checker(CompilerMode mode, const AppConfig& cfg,
                                                    const std::filesystem::path& workdir);

[[nodiscard]] PipelineConfig make_pipeline_config(const AppConfig& cfg, const std::filesystem::path& workdir,
                                                  const std::filesystem::path& diagram_dir);

}  // namespace s2d
