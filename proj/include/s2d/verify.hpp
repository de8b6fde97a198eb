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
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "s2d/diagram_code.hpp"
#include "s2d/raster.hpp"

namespace s2d {

enum class CompileStatus { Success, CompileError, Timeout, ToolMissing, Skipped };

std::string_view to_string(CompileStatus status);
CompileStatus compile_status_from_string(std::string_view text);

struct CompileDiagnostic {
  int line = 0;  // 1-based line in the diagram code, 0 when unknown
  std::string message;

  friend bool operator==(const CompileDiagnostic&, const CompileDiagnostic&) = default;
};

struct CompileResult {
  CompileStatus status = CompileStatus::Skipped;
  std::vector<CompileDiagnostic> diagnostics;
  std::optional<std::filesystem::path> artifact;
  double duration_s = 0.0;
};

/// External TeX toolchain. Argument lists may use the placeholders {input},
/// {output} and {dpi}.
struct ToolchainConfig {
  std::string compiler = "pdflatex";
  std::vector<std::string> compiler_args = {"-interaction=nonstopmode", "-halt-on-error", "{input}"};
  // Prepended when the code is not already a full document.
  std::string preamble =
      "\\documentclass[tikz,border=4pt]{standalone}\n"
      "\\usetikzlibrary{arrows.meta,positioning,shapes,calc}\n"
      "\\begin{document}\n";
  std::string postamble = "\n\\end{document}\n";
  double timeout_s = 30.0;
  std::string rasterizer = "pdftoppm";
  std::vector<std::string> rasterizer_args = {"-r", "{dpi}", "-png", "-singlefile", "{input}", "{output}"};
};

/// Full document text handed to the compiler, and the number of lines the
/// wrapper adds before the code.
struct WrappedDocument {
  std::string text;
  int header_lines = 0;
};
[[nodiscard]] WrappedDocument wrap_document(const DiagramCode& code, const ToolchainConfig& cfg);

/// Extracts `! message` lines and attaches the following `l.<num>` line number,
/// shifted by line_offset. Messages without a line number get line 0.
[[nodiscard]] std::vector<CompileDiagnostic> parse_tex_log(std::string_view log, int line_offset);

/// Compiles in a private temp directory under workdir; on success the page is
/// copied to workdir and returned as the artifact. Never throws for
/// toolchain outcomes; the temp directory is removed on every path.
[[nodiscard]] CompileResult compile(const DiagramCode& code, const std::filesystem::path& workdir,
                                    const ToolchainConfig& cfg);

/// In-process approximation of "compiles": parser diagnostics plus bracket and
/// environment balance. Empty means plausibly compilable.
[[nodiscard]] std::vector<Diagnostic> validate_fast(const DiagramCode& code);

/// Converts a compiled page to an RGB raster. Throws ToolMissing,
/// ConversionFailed or Precondition (dpi <= 0).
[[nodiscard]] Raster rasterize(const std::filesystem::path& artifact, int dpi, const ToolchainConfig& cfg);

inline constexpr int kPreviewWidth = 800;
inline constexpr int kPreviewHeight = 600;

/// Schematic 800x600 drawing of the node graph and numeric path segments.
/// Stands in for rasterize when no TeX toolchain is present.
[[nodiscard]] Raster render_preview(const DiagramCode& code);

/// First line of `<tool> --version`, or "unavailable".
[[nodiscard]] std::string tool_version(const std::string& tool);

/// Compile-and-render strategy used by the orchestrator and evaluators.
class Checker {
 public:
  virtual ~Checker() = default;
  [[nodiscard]] virtual CompileResult check(const DiagramCode& code) = 0;
  /// Raster of the code's diagram, if one can be produced.
  [[nodiscard]] virtual std::optional<Raster> render(const DiagramCode& code, const CompileResult& result) = 0;
  /// Toolchain identity recorded in logs and reports.
  [[nodiscard]] virtual std::string describe() const = 0;
};

class TexChecker final : public Checker {
 public:
  TexChecker(ToolchainConfig cfg, std::filesystem::path workdir, int dpi = 150);
  CompileResult check(const DiagramCode& code) override;
  std::optional<Raster> render(const DiagramCode& code, const CompileResult& result) override;
  std::string describe() const override;

 private:
  ToolchainConfig cfg_;
  std::filesystem::path workdir_;
  int dpi_;
};

/// validate_fast as the compile check, render_preview as the renderer.
class FastChecker final : public Checker {
 public:
  CompileResult check(const DiagramCode& code) override;
  std::optional<Raster> render(const DiagramCode& code, const CompileResult& result) override;
  std::string describe() const override { return "fast-validator"; }
};

}  // namespace s2d
