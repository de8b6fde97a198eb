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

#include "s2d/orchestrator.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <set>
#include <thread>

#include "s2d/error.hpp"

namespace s2d {

using nlohmann::json;

std::string_view to_string(Phase phase) { return phase == Phase::Generate ? "Generate" : "Edit"; }

std::string_view to_string(ErrorLabel label) {
  switch (label) {
    case ErrorLabel::MisalignedStructure: return "MisalignedStructure";
    case ErrorLabel::MisidentifiedElement: return "MisidentifiedElement";
    case ErrorLabel::MisconnectedRelationship: return "MisconnectedRelationship";
  }
  return "?";
}

ErrorLabel error_label_from_string(std::string_view text) {
  for (auto l : {ErrorLabel::MisalignedStructure, ErrorLabel::MisidentifiedElement,
                 ErrorLabel::MisconnectedRelationship}) {
    if (to_string(l) == text) return l;
  }
  throw Error(ErrorCode::Parse, "unknown error label: " + std::string(text));
}

void validate(const PipelineConfig& cfg, const SketchTask& task) {
  if (cfg.retry_budget < 0) throw Error(ErrorCode::Config, "retry_budget must be >= 0");
  const bool edits = task.edit_instructions && !task.edit_instructions->empty();
  if (!task.initial_code && !cfg.generator) throw Error(ErrorCode::Config, "no generator backend configured");
  if (edits && !cfg.editor) throw Error(ErrorCode::Config, "no editor backend configured");
  if (cfg.judge_enabled && !cfg.judge) throw Error(ErrorCode::Config, "no judge backend configured");
  if (cfg.compiler_enabled && !cfg.checker) throw Error(ErrorCode::Config, "no checker configured");
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string describe_diagnostics(const CompileResult& r) {
  std::string out = std::string(to_string(r.status));
  for (const auto& d : r.diagnostics) {
    out += "; ";
    if (d.line > 0) out += "line " + std::to_string(d.line) + ": ";
    out += d.message;
  }
  return out;
}

bool compiled(const Attempt& a, bool compiler_enabled) {
  return a.compile.status == CompileStatus::Success || (!compiler_enabled && a.compile.status == CompileStatus::Skipped);
}

}  // namespace

RunRecord run_pipeline(const SketchTask& task, const PipelineConfig& cfg) {
  validate(cfg, task);
  validate(task);
  RunRecord rec;
  rec.task_id = task.id;
  const bool has_edits = task.edit_instructions && !task.edit_instructions->empty();
  const int limit = 1 + cfg.retry_budget;

  Phase phase = task.initial_code ? Phase::Edit : Phase::Generate;
  std::optional<DiagramCode> base;  // C_k, the input to the edit phase
  if (task.initial_code) base = DiagramCode(*task.initial_code);
  std::optional<Feedback> feedback;
  auto add_time = [&](const char* key, Clock::time_point t) { rec.timings[key] += since(t); };

  for (int n = 1; n <= limit; ++n) {
    const AttemptInfo at{n, limit};
    Attempt attempt;
    attempt.phase = phase;
    attempt.compile.status = CompileStatus::Skipped;
    bool edited = false;
    Phase source = phase;  // phase that produced (or failed to produce) the code
    std::optional<DiagramCode> code;

    try {
      if (phase == Phase::Generate) {
        const auto t = Clock::now();
        base = generate_code(task, *cfg.generator, at, feedback, cfg.temperature);
        add_time("generate", t);
        code = base;
        attempt.code = base->source();
      }
      if (has_edits) {
        source = Phase::Edit;
        const auto t = Clock::now();
        // A generate attempt edits the fresh C_k; feedback belongs to the phase being retried.
        const auto fb = phase == Phase::Edit ? feedback : std::nullopt;
        code = edit_code(*base, *task.edit_instructions, *cfg.editor, at, fb, cfg.temperature);
        add_time("edit", t);
        edited = true;
        attempt.code = code->source();
      }
    } catch (const Error& e) {
      attempt.error = e.what();
      rec.attempts.push_back(std::move(attempt));
      rec.reason = std::string("backend: ") + e.what();
      phase = source;
      feedback = Feedback{base ? base->source() : "", e.what()};
      continue;
    }

    if (cfg.compiler_enabled) {
      const auto t = Clock::now();
      attempt.compile = cfg.checker->check(*code);
      add_time("compile", t);
      if (attempt.compile.status == CompileStatus::ToolMissing) {
        rec.attempts.push_back(std::move(attempt));
        rec.reason = "compiler not available";
        break;
      }
      if (attempt.compile.status != CompileStatus::Success) {
        rec.reason = "compile: " + describe_diagnostics(attempt.compile);
        feedback = Feedback{code->source(), rec.reason};
        rec.attempts.push_back(std::move(attempt));
        phase = edited ? Phase::Edit : Phase::Generate;
        continue;
      }
    }

    std::optional<Raster> diagram;
    if (cfg.compiler_enabled && (cfg.judge_enabled || !cfg.diagram_dir.empty())) {
      const auto t = Clock::now();
      try {
        diagram = cfg.checker->render(*code, attempt.compile);
      } catch (const Error&) {
        diagram.reset();
      }
      add_time("render", t);
    }

    if (cfg.judge_enabled) {
      const auto t = Clock::now();
      try {
        auto verdict = judge(diagram, task, *code, *cfg.judge, cfg.temperature);
        add_time("judge", t);
        if (!verdict.aligned) {
          // Only an edit that actually ran can be blamed; C2C tasks have no generator step.
          if (!edited) verdict.blame = Blame::SketchToCode;
          if (task.initial_code) verdict.blame = Blame::EditingCode;
        }
        attempt.verdict = verdict;
      } catch (const Error& e) {
        add_time("judge", t);
        attempt.error = std::string("judge: ") + e.what();
        rec.reason = std::string("backend: ") + e.what();
        feedback = Feedback{code->source(), e.what()};
        rec.attempts.push_back(std::move(attempt));
        phase = edited ? Phase::Edit : Phase::Generate;
        continue;
      }
      if (!attempt.verdict->aligned) {
        rec.reason = "judge: " + attempt.verdict->rationale;
        feedback = Feedback{code->source(), "the diagram does not match the sketch: " + attempt.verdict->rationale};
        phase = attempt.verdict->blame == Blame::EditingCode ? Phase::Edit : Phase::Generate;
        rec.attempts.push_back(std::move(attempt));
        continue;
      }
    }

    rec.status = FinalStatus::Accepted;
    rec.final_code = code->source();
    rec.reason.clear();
    if (diagram && !cfg.diagram_dir.empty()) {
      std::filesystem::create_directories(cfg.diagram_dir);
      const auto path = cfg.diagram_dir / (task.id + ".png");
      write_png(*diagram, path);
      rec.diagram_path = path.string();
    } else if (attempt.compile.artifact) {
      rec.diagram_path = attempt.compile.artifact->string();
    }
    rec.attempts.push_back(std::move(attempt));
    rec.best_attempt = static_cast<int>(rec.attempts.size()) - 1;
    return rec;
  }

  rec.status = FinalStatus::Failed;
  // Latest attempt that compiled, else latest attempt that produced code.
  for (int i = static_cast<int>(rec.attempts.size()) - 1; i >= 0 && !rec.best_attempt; --i) {
    if (compiled(rec.attempts[i], cfg.compiler_enabled) && !rec.attempts[i].code.empty()) rec.best_attempt = i;
  }
  for (int i = static_cast<int>(rec.attempts.size()) - 1; i >= 0 && !rec.best_attempt; --i) {
    if (!rec.attempts[i].code.empty()) rec.best_attempt = i;
  }
  if (rec.best_attempt) rec.final_code = rec.attempts[*rec.best_attempt].code;
  if (rec.reason.empty()) rec.reason = "retry budget exhausted";
  return rec;
}

json to_json(const RunRecord& r) {
  json attempts = json::array();
  for (const auto& a : r.attempts) {
    json diags = json::array();
    for (const auto& d : a.compile.diagnostics) diags.push_back({{"line", d.line}, {"message", d.message}});
    json compile{{"status", std::string(to_string(a.compile.status))}, {"diagnostics", diags},
                 {"duration_s", a.compile.duration_s}};
    if (a.compile.artifact) compile["artifact"] = a.compile.artifact->string();
    json j{{"phase", std::string(to_string(a.phase))}, {"code", a.code}, {"compile", compile}};
    if (a.verdict) {
      j["verdict"] = {{"aligned", a.verdict->aligned}, {"rationale", a.verdict->rationale},
                      {"blame", std::string(to_string(a.verdict->blame))}};
    }
    if (a.error) j["error"] = *a.error;
    attempts.push_back(std::move(j));
  }
  json j{{"v", kRunSchemaVersion},
         {"task_id", r.task_id},
         {"attempts", attempts},
         {"final", r.status == FinalStatus::Accepted ? "Accepted" : "Failed"},
         {"final_code", r.final_code},
         {"timings", r.timings}};
  if (r.status == FinalStatus::Accepted) j["diagram_path"] = r.diagram_path;
  else j["reason"] = r.reason;
  if (r.best_attempt) j["best_attempt"] = *r.best_attempt;
  if (r.error_label) j["error_label"] = std::string(to_string(*r.error_label));
  return j;
}

RunRecord run_record_from_json(const json& j) {
  try {
    if (j.at("v").get<int>() != kRunSchemaVersion) throw Error(ErrorCode::Parse, "unsupported run schema version");
    RunRecord r;
    r.task_id = j.at("task_id").get<std::string>();
    for (const auto& ja : j.at("attempts")) {
      Attempt a;
      a.phase = ja.at("phase").get<std::string>() == "Edit" ? Phase::Edit : Phase::Generate;
      a.code = ja.at("code").get<std::string>();
      const auto& c = ja.at("compile");
      a.compile.status = compile_status_from_string(c.at("status").get<std::string>());
      a.compile.duration_s = c.value("duration_s", 0.0);
      for (const auto& d : c.value("diagnostics", json::array())) {
        a.compile.diagnostics.push_back({d.at("line").get<int>(), d.at("message").get<std::string>()});
      }
      if (c.contains("artifact")) a.compile.artifact = c["artifact"].get<std::string>();
      if (ja.contains("verdict")) {
        const auto& v = ja["verdict"];
        a.verdict = JudgeVerdict{v.at("aligned").get<bool>(), v.value("rationale", ""),
                                 blame_from_string(v.at("blame").get<std::string>())};
      }
      if (ja.contains("error")) a.error = ja["error"].get<std::string>();
      r.attempts.push_back(std::move(a));
    }
    r.status = j.at("final").get<std::string>() == "Accepted" ? FinalStatus::Accepted : FinalStatus::Failed;
    r.final_code = j.value("final_code", "");
    r.diagram_path = j.value("diagram_path", "");
    r.reason = j.value("reason", "");
    if (j.contains("best_attempt")) r.best_attempt = j["best_attempt"].get<int>();
    if (j.contains("error_label")) r.error_label = error_label_from_string(j["error_label"].get<std::string>());
    r.timings = j.value("timings", std::map<std::string, double>{});
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("bad run record: ") + e.what());
  }
}

void append_line(const std::filesystem::path& path, const std::string& line) {
  static std::mutex mu;
  std::string buf = line;
  buf += '\n';
  std::lock_guard lock(mu);
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorCode::Io, "cannot open " + path.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < buf.size()) {
    const auto n = ::write(fd, buf.data() + done, buf.size() - done);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      const int err = errno;
      ::close(fd);
      throw Error(ErrorCode::Io, "write to " + path.string() + " failed: " + std::strerror(err));
    }
    done += static_cast<std::size_t>(n);
  }
  ::close(fd);
}

void persist_run(const RunRecord& record, const std::filesystem::path& log_path) {
  append_line(log_path, to_json(record).dump());
}

std::vector<RunRecord> run_batch(const std::vector<SketchTask>& tasks, const PipelineConfig& cfg, int jobs,
                                 const std::function<void(const RunRecord&)>& on_done) {
  std::vector<RunRecord> out(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        out[i] = run_pipeline(tasks[i], cfg);
        if (on_done) on_done(out[i]);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const int n = std::clamp(jobs, 1, std::max(1, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

std::optional<ErrorLabel> classify_failure(const DiagramCode& produced, const DiagramCode& reference) {
  const auto p = parse(produced);
  const auto r = parse(reference);
  if (!r.ok()) return std::nullopt;
  const auto gr = extract_node_graph(r.tree);
  if (gr.empty()) return std::nullopt;
  if (!p.ok()) return ErrorLabel::MisalignedStructure;
  const auto gp = extract_node_graph(p.tree);
  if (gp.vertices.size() != gr.vertices.size()) return ErrorLabel::MisalignedStructure;
  std::multiset<std::string> lp, lr;
  for (const auto& v : gp.vertices) lp.insert(v.label);
  for (const auto& v : gr.vertices) lr.insert(v.label);
  if (lp != lr) return ErrorLabel::MisidentifiedElement;
  std::multiset<std::pair<std::string, std::string>> ep, er;
  for (const auto& e : gp.edges) ep.emplace(e.source, e.target);
  for (const auto& e : gr.edges) er.emplace(e.source, e.target);
  if (ep != er) return ErrorLabel::MisconnectedRelationship;
  return std::nullopt;
}

}  // namespace s2d
