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

#include "s2d/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "s2d/error.hpp"
#include "s2d/process.hpp"

namespace s2d {

namespace fs = std::filesystem;

std::string_view to_string(CompileStatus status) {
  switch (status) {
    case CompileStatus::Success: return "Success";
    case CompileStatus::CompileError: return "CompileError";
    case CompileStatus::Timeout: return "Timeout";
    case CompileStatus::ToolMissing: return "ToolMissing";
    case CompileStatus::Skipped: return "Skipped";
  }
  return "?";
}

CompileStatus compile_status_from_string(std::string_view text) {
  for (auto s : {CompileStatus::Success, CompileStatus::CompileError, CompileStatus::Timeout,
                 CompileStatus::ToolMissing, CompileStatus::Skipped}) {
    if (to_string(s) == text) return s;
  }
  throw Error(ErrorCode::Parse, "unknown compile status '" + std::string(text) + "'");
}

namespace {

std::vector<std::string> substitute(const std::vector<std::string>& args, const std::string& input,
                                    const std::string& output, int dpi) {
  std::vector<std::string> out;
  for (auto a : args) {
    for (const auto& [key, value] :
         {std::pair<std::string, std::string>{"{input}", input}, {"{output}", output},
          {"{dpi}", std::to_string(dpi)}}) {
      for (auto pos = a.find(key); pos != std::string::npos; pos = a.find(key, pos + value.size())) {
        a.replace(pos, key.size(), value);
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(std::string_view s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

int line_of_offset(std::string_view s, std::size_t offset) {
  return 1 + static_cast<int>(std::count(s.begin(), s.begin() + std::min(offset, s.size()), '\n'));
}

}  // namespace

WrappedDocument wrap_document(const DiagramCode& code, const ToolchainConfig& cfg) {
  if (code.source().find("\\documentclass") != std::string::npos) return {code.source(), 0};
  return {cfg.preamble + code.source() + cfg.postamble, count_lines(cfg.preamble)};
}

std::vector<CompileDiagnostic> parse_tex_log(std::string_view log, int line_offset) {
  std::vector<CompileDiagnostic> out;
  std::optional<std::size_t> pending;
  std::size_t pos = 0;
  while (pos < log.size()) {
    auto end = log.find('\n', pos);
    if (end == std::string_view::npos) end = log.size();
    auto line = log.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    if (line.starts_with("! ")) {
      out.push_back({0, std::string(line.substr(2))});
      pending = out.size() - 1;
    } else if (pending && line.starts_with("l.")) {
      std::size_t i = 2;
      int num = 0;
      bool digits = false;
      while (i < line.size() && line[i] >= '0' && line[i] <= '9') {
        num = num * 10 + (line[i] - '0');
        ++i;
        digits = true;
      }
      if (digits) {
        const int shifted = num - line_offset;
        out[*pending].line = shifted > 0 ? shifted : 0;
        pending.reset();
      }
    }
  }
  return out;
}

CompileResult compile(const DiagramCode& code, const fs::path& workdir, const ToolchainConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  CompileResult result;
  auto finish = [&](CompileResult r) {
    r.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return r;
  };
  if (!find_executable(cfg.compiler)) {
    result.status = CompileStatus::ToolMissing;
    result.diagnostics.push_back({0, "compiler '" + cfg.compiler + "' not found"});
    return finish(std::move(result));
  }
  std::error_code ec;
  fs::create_directories(workdir, ec);
  TempDirGuard tmp(make_temp_dir(workdir, ".s2d-compile-"));
  const auto doc = wrap_document(code, cfg);
  {
    std::ofstream out(tmp.path() / "diagram.tex", std::ios::binary);
    out << doc.text;
  }
  std::vector<std::string> argv{cfg.compiler};
  for (auto& a : substitute(cfg.compiler_args, "diagram.tex", "diagram", 0)) argv.push_back(std::move(a));
  const auto timeout = std::chrono::milliseconds(static_cast<long long>(cfg.timeout_s * 1000.0));
  const auto proc = run_process(argv, tmp.path(), timeout);

  if (!proc.spawned) {
    result.status = CompileStatus::ToolMissing;
    result.diagnostics.push_back({0, "failed to start '" + cfg.compiler + "'"});
  } else if (proc.timed_out) {
    result.status = CompileStatus::Timeout;
    std::ostringstream msg;
    msg << "compiler exceeded " << cfg.timeout_s << " s";
    result.diagnostics.push_back({0, msg.str()});
  } else if (proc.exit_code == 0 && fs::exists(tmp.path() / "diagram.pdf")) {
    const auto suffix = tmp.path().filename().string().substr(std::string(".s2d-compile-").size());
    const auto artifact = workdir / ("diagram-" + suffix + ".pdf");
    fs::copy_file(tmp.path() / "diagram.pdf", artifact, fs::copy_options::overwrite_existing);
    result.status = CompileStatus::Success;
    result.artifact = artifact;
  } else {
    result.status = CompileStatus::CompileError;
    result.diagnostics = parse_tex_log(read_file(tmp.path() / "diagram.log"), doc.header_lines);
    if (result.diagnostics.empty()) {
      result.diagnostics.push_back({0, "compiler exited with status " + std::to_string(proc.exit_code)});
    }
  }
  return finish(std::move(result));
}

std::vector<Diagnostic> validate_fast(const DiagramCode& code) {
  auto pr = parse(code);
  auto diags = std::move(pr.diagnostics);
  // Parentheses must balance inside every declaration.
  auto check = [&](const ParseNode& node, auto&& self) -> void {
    if (node.kind == NodeKind::NodeDecl || node.kind == NodeKind::EdgeDecl) {
      std::vector<std::size_t> open;
      for (std::size_t i = node.first_token; i < node.last_token; ++i) {
        const auto& t = pr.tree.tokens[i];
        if (t.kind != TokenKind::Punct) continue;
        if (t.text == "(") {
          open.push_back(t.span.begin);
        } else if (t.text == ")") {
          if (open.empty()) {
            diags.push_back({DiagnosticKind::BraceMismatch, t.span.begin, "unmatched ')'"});
          } else {
            open.pop_back();
          }
        }
      }
      for (const auto off : open) diags.push_back({DiagnosticKind::BraceMismatch, off, "unmatched '('"});
      return;
    }
    for (const auto& c : node.children) self(c, self);
  };
  check(pr.tree.root, check);
  std::stable_sort(diags.begin(), diags.end(),
                   [](const Diagnostic& a, const Diagnostic& b) { return a.offset < b.offset; });
  return diags;
}

Raster rasterize(const fs::path& artifact, int dpi, const ToolchainConfig& cfg) {
  if (dpi <= 0) throw Error(ErrorCode::Precondition, "dpi must be positive");
  if (!fs::is_regular_file(artifact)) {
    throw Error(ErrorCode::ConversionFailed, "artifact not found: " + artifact.string());
  }
  if (!find_executable(cfg.rasterizer)) {
    throw Error(ErrorCode::ToolMissing, "rasterizer '" + cfg.rasterizer + "' not found");
  }
  TempDirGuard tmp(make_temp_dir(fs::temp_directory_path(), "s2d-raster-"));
  const auto prefix = tmp.path() / "page";
  std::vector<std::string> argv{cfg.rasterizer};
  for (auto& a : substitute(cfg.rasterizer_args, fs::absolute(artifact).string(), prefix.string(), dpi)) {
    argv.push_back(std::move(a));
  }
  const auto timeout = std::chrono::milliseconds(static_cast<long long>(cfg.timeout_s * 1000.0));
  const auto proc = run_process(argv, tmp.path(), timeout);
  if (!proc.spawned) throw Error(ErrorCode::ToolMissing, "failed to start '" + cfg.rasterizer + "'");
  const auto png = fs::path(prefix.string() + ".png");
  if (proc.timed_out || proc.exit_code != 0 || !fs::exists(png)) {
    throw Error(ErrorCode::ConversionFailed, "rasterizer failed on " + artifact.string());
  }
  return read_png(png);
}

std::string tool_version(const std::string& tool) {
  if (!find_executable(tool)) return "unavailable";
  for (const char* flag : {"--version", "-v"}) {
    const auto r = run_process({tool, flag}, fs::temp_directory_path(), std::chrono::seconds(5), true);
    if (!r.spawned || r.timed_out) continue;
    std::istringstream lines(r.output);
    std::string line;
    while (std::getline(lines, line)) {
      if (!line.empty()) return tool + ": " + line;
    }
  }
  return tool + ": unknown version";
}

// ---------------------------------------------------------------------------
// Preview renderer

namespace {

struct Box {
  double cx, cy, w, h;
};

double label_width_units(const std::string& label) {
  return std::clamp(0.5 + 0.18 * static_cast<double>(label.size()), 0.8, 4.0);
}

}  // namespace

Raster render_preview(const DiagramCode& code) {
  Raster img(kPreviewWidth, kPreviewHeight);
  const auto pr = parse(code);
  const auto graph = extract_node_graph(pr.tree);
  const auto segments = extract_segments(pr.tree);

  std::vector<Box> boxes;
  boxes.reserve(graph.vertices.size());
  bool any_positioned = false;
  double min_y = 0.0;
  double min_x = 0.0;
  for (const auto& v : graph.vertices) {
    if (v.position) {
      min_x = any_positioned ? std::min(min_x, v.position->first) : v.position->first;
      min_y = any_positioned ? std::min(min_y, v.position->second) : v.position->second;
      any_positioned = true;
    }
  }
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(graph.vertices.size()))));
  std::size_t unplaced = 0;
  for (const auto& v : graph.vertices) {
    Box b{0, 0, label_width_units(v.label), 0.7};
    if (v.position) {
      b.cx = v.position->first;
      b.cy = v.position->second;
    } else if (any_positioned) {
      b.cx = min_x + 2.5 * static_cast<double>(unplaced);
      b.cy = min_y - 2.0;
      ++unplaced;
    } else {
      b.cx = 3.0 * static_cast<double>(unplaced % std::max<std::size_t>(cols, 1));
      b.cy = -2.0 * static_cast<double>(unplaced / std::max<std::size_t>(cols, 1));
      ++unplaced;
    }
    boxes.push_back(b);
  }
  if (boxes.empty() && segments.empty()) return img;

  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto& b : boxes) {
    x0 = std::min(x0, b.cx - b.w / 2);
    x1 = std::max(x1, b.cx + b.w / 2);
    y0 = std::min(y0, b.cy - b.h / 2);
    y1 = std::max(y1, b.cy + b.h / 2);
  }
  for (const auto& s : segments) {
    x0 = std::min({x0, s.x0, s.x1});
    x1 = std::max({x1, s.x0, s.x1});
    y0 = std::min({y0, s.y0, s.y1});
    y1 = std::max({y1, s.y0, s.y1});
  }
  constexpr double kMargin = 40.0;
  const double wu = std::max(x1 - x0, 1e-6);
  const double hu = std::max(y1 - y0, 1e-6);
  const double scale = std::min({(kPreviewWidth - 2 * kMargin) / wu, (kPreviewHeight - 2 * kMargin) / hu, 80.0});
  const double ox = (kPreviewWidth - wu * scale) / 2.0;
  const double oy = (kPreviewHeight - hu * scale) / 2.0;
  auto px = [&](double x) { return static_cast<int>(std::lround(ox + (x - x0) * scale)); };
  auto py = [&](double y) { return static_cast<int>(std::lround(oy + (y1 - y) * scale)); };

  for (const auto& s : segments) draw_line(img, px(s.x0), py(s.y0), px(s.x1), py(s.y1), kBlack, 2);
  auto index_of = [&](const std::string& id) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < graph.vertices.size(); ++i) {
      if (graph.vertices[i].id == id) return i;
    }
    return std::nullopt;
  };
  for (const auto& e : graph.edges) {
    const auto a = index_of(e.source);
    const auto b = index_of(e.target);
    if (!a || !b) continue;
    draw_line(img, px(boxes[*a].cx), py(boxes[*a].cy), px(boxes[*b].cx), py(boxes[*b].cy), kBlack, 2);
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    const int l = px(b.cx - b.w / 2), r = px(b.cx + b.w / 2);
    const int t = py(b.cy + b.h / 2), bot = py(b.cy - b.h / 2);
    fill_rect(img, l, t, r, bot, kWhite);
    draw_rect(img, l, t, r, bot, kBlack, 2);
    // Glyph marks so that labels influence the picture.
    const auto& label = graph.vertices[i].label;
    const int inner = std::max(r - l - 8, 1);
    const int n = static_cast<int>(std::min<std::size_t>(label.size(), static_cast<std::size_t>(inner / 4)));
    const int mid = (t + bot) / 2;
    for (int k = 0; k < n; ++k) {
      const int gx = l + 4 + k * 4 + (inner - n * 4) / 2;
      const int gh = 3 + static_cast<unsigned char>(label[k]) % 5;
      fill_rect(img, gx, mid - gh, gx + 1, mid + gh, kBlack);
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Checkers

TexChecker::TexChecker(ToolchainConfig cfg, fs::path workdir, int dpi)
    : cfg_(std::move(cfg)), workdir_(std::move(workdir)), dpi_(dpi) {}

CompileResult TexChecker::check(const DiagramCode& code) { return compile(code, workdir_, cfg_); }

std::optional<Raster> TexChecker::render(const DiagramCode&, const CompileResult& result) {
  if (result.status != CompileStatus::Success || !result.artifact) return std::nullopt;
  try {
    return rasterize(*result.artifact, dpi_, cfg_);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string TexChecker::describe() const {
  return tool_version(cfg_.compiler) + "; " + tool_version(cfg_.rasterizer);
}

CompileResult FastChecker::check(const DiagramCode& code) {
  const auto started = std::chrono::steady_clock::now();
  CompileResult r;
  const auto diags = validate_fast(code);
  r.status = diags.empty() ? CompileStatus::Success : CompileStatus::CompileError;
  for (const auto& d : diags) {
    r.diagnostics.push_back({line_of_offset(code.source(), d.offset),
                             std::string(to_string(d.kind)) + ": " + d.message});
  }
  r.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

std::optional<Raster> FastChecker::render(const DiagramCode& code, const CompileResult& result) {
  if (result.status != CompileStatus::Success && result.status != CompileStatus::Skipped) return std::nullopt;
  return render_preview(code);
}

}  // namespace s2d
