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

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace s2d {

struct ProcessResult {
  bool spawned = false;
  bool timed_out = false;
  int exit_code = -1;
  std::string output;  // combined stdout+stderr, only when captured
};

/// Runs argv[0] (PATH lookup) in cwd with a wall-clock limit. On timeout the
/// whole process group is killed. stdin is /dev/null.
ProcessResult run_process(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
                          std::chrono::milliseconds timeout, bool capture_output = false);

/// PATH lookup; names containing '/' are checked directly.
std::optional<std::filesystem::path> find_executable(const std::string& name);

/// Creates a fresh private directory under parent (mkdtemp).
std::filesystem::path make_temp_dir(const std::filesystem::path& parent, const std::string& prefix);

/// Removes a directory tree when it goes out of scope.
class TempDirGuard {
 public:
  explicit TempDirGuard(std::filesystem::path dir) : dir_(std::move(dir)) {}
  TempDirGuard(const TempDirGuard&) = delete;
  TempDirGuard& operator=(const TempDirGuard&) = delete;
  ~TempDirGuard() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  [[nodiscard]] const std::filesystem::path& path() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
};

}  // namespace s2d
