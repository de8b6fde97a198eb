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

// s2d: sketch-to-diagram pipeline, dataset builder and evaluator.
//
// Exit codes: 0 success (run: Accepted), 1 usage, config or input error,
// 2 run finished Failed.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "s2d/config.hpp"
#include "s2d/dataset.hpp"
#include "s2d/error.hpp"
#include "s2d/orchestrator.hpp"
#include "s2d/process.hpp"
#include "s2d/report.hpp"

namespace fs = std::filesystem;
using namespace s2d;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFailed = 2;

struct RunArgs {
  std::string sketch, config, out, code;
  std::vector<std::string> instructions, edits;
  std::string id = "task";
};

struct DatasetArgs {
  std::string src, out, metadata, config;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  int jobs = 0;
};

struct EvalArgs {
  std::string dataset, task, config, out, metrics = "all";
  int jobs = 0;
};

struct ReportArgs {
  std::string from, out;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  auto stem = p;
  stem.replace_extension();
  return fs::path(stem.string() + suffix);
}

int cmd_run(const RunArgs& a) {
  const auto cfg = load_config(a.config);
  SketchTask task;
  task.id = a.id;
  task.sketch = read_png(a.sketch);
  task.instructions = a.instructions;
  if (!a.edits.empty()) task.edit_instructions = a.edits;
  if (!a.code.empty()) task.initial_code = read_text(a.code);
  validate(task);

  const fs::path out(a.out);
  fs::create_directories(out);
  const auto workdir = out / ".work";
  fs::create_directories(workdir);
  const auto pipeline = make_pipeline_config(cfg, workdir, out);
  validate(pipeline, task);

  auto record = run_pipeline(task, pipeline);
  fs::remove_all(workdir);
  persist_run(record, out / "runs.jsonl");
  if (!record.final_code.empty()) write_text(out / "final.tex", record.final_code);

  if (record.status == FinalStatus::Accepted) {
    std::cout << "accepted after " << record.attempts.size() << " attempt(s)";
    if (!record.diagram_path.empty()) std::cout << "; diagram " << record.diagram_path;
    std::cout << "\n";
    return kExitOk;
  }
  std::cout << "failed after " << record.attempts.size() << " attempt(s): " << record.reason << "\n";
  return kExitFailed;
}

int cmd_dataset(const DatasetArgs& a) {
  BuildOptions o;
  o.input_dir = a.src;
  o.output_dir = a.out;
  o.seed = a.seed;
  o.train_fraction = a.train_fraction;
  if (!a.metadata.empty()) o.metadata_csv = a.metadata;
  o.jobs = a.jobs > 0 ? a.jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (!a.config.empty()) {
    const auto cfg = load_config(a.config);
    o.dpi = cfg.dpi;
    const bool tex = cfg.compiler == CompilerMode::Tex ||
                     (cfg.compiler == CompilerMode::Auto && find_executable(cfg.toolchain.compiler));
    if (tex) o.toolchain = cfg.toolchain;
    o.sketch_backend = make_backend(cfg, "sketcher");
  }
  const auto r = build_corpus(o);
  for (const auto& s : r.skipped) std::cerr << "skipped " << s << "\n";
  std::cout << "sources " << r.stats.sources << ", skipped " << r.stats.skipped << ", rejected " << r.stats.rejected
            << "; train " << r.stats.train_s2c.count << " S2C / " << r.stats.train_c2c.count << " C2C, test "
            << r.stats.test_s2c.count << " S2C / " << r.stats.test_c2c.count << " C2C\n";
  return kExitOk;
}

void emit_report(const RunLog& log, const fs::path& out) {
  const auto sidecar = sidecar_for(log.header);
  const auto report = build_report(log, sidecar.get());
  for (const auto& w : report.at("warnings")) std::cerr << "warning: " << w.get<std::string>() << "\n";
  write_text(out, report.dump(2) + "\n");
  write_text(with_suffix(out, ".txt"), render_table(report));
}

int cmd_eval(const EvalArgs& a) {
  if (a.task != "s2c" && a.task != "c2c") throw Error(ErrorCode::Config, "--task must be s2c or c2c");
  const auto cfg = load_config(a.config);
  EvalOptions o;
  o.task = a.task;
  o.metrics = parse_metric_list(a.metrics);
  o.jobs = a.jobs > 0 ? a.jobs : effective_jobs(cfg);
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  o.log_path = with_suffix(out, ".runlog.jsonl");
  o.images_dir = with_suffix(out, ".images");
  const auto tasks = load_eval_tasks(a.dataset, a.task == "s2c" ? QueryKind::S2C : QueryKind::C2C);
  (void)run_eval(tasks, cfg, o);
  // The report is always rebuilt from the persisted log, exactly as `report` does.
  emit_report(read_run_log(o.log_path), out);
  std::cout << "run log " << o.log_path.string() << "\nreport " << out.string() << "\n";
  return kExitOk;
}

int cmd_report(const ReportArgs& a) {
  emit_report(read_run_log(a.from), a.out);
  std::cout << "report " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketch-to-diagram pipeline, dataset builder and evaluator"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run the generate/edit/check loop on one sketch");
  run_cmd->add_option("--sketch", run.sketch, "Sketch image (PNG)")->required();
  run_cmd->add_option("--instructions", run.instructions, "Instruction text")->required();
  run_cmd->add_option("--edits", run.edits, "Edit instructions");
  run_cmd->add_option("--code", run.code, "Starting code for a code-to-code task");
  run_cmd->add_option("--id", run.id, "Task id recorded in the run log");
  run_cmd->add_option("--config", run.config, "Config file")->required();
  run_cmd->add_option("--out", run.out, "Output directory")->required();

  DatasetArgs ds;
  auto* ds_cmd = app.add_subcommand("dataset", "Dataset tools");
  ds_cmd->require_subcommand(1);
  auto* build_cmd = ds_cmd->add_subcommand("build", "Build S2C/C2C splits from TikZ sources");
  build_cmd->add_option("--src", ds.src, "Directory of .tex sources")->required();
  build_cmd->add_option("--out", ds.out, "Output directory")->required();
  build_cmd->add_option("--split-seed", ds.seed, "Train/test split seed");
  build_cmd->add_option("--train-fraction", ds.train_fraction, "Share of provenances in train")
      ->check(CLI::Range(0.0, 1.0));
  build_cmd->add_option("--metadata", ds.metadata, "CSV with file,category,provenance columns");
  build_cmd->add_option("--config", ds.config, "Config (compiler mode, sketcher backend)");
  build_cmd->add_option("--jobs", ds.jobs, "Worker threads (default: CPU count)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Run the pipeline over a dataset split and score it");
  eval_cmd->add_option("--dataset", ev.dataset, "Split JSONL file")->required();
  eval_cmd->add_option("--task", ev.task, "s2c or c2c")->required();
  eval_cmd->add_option("--config", ev.config, "Config file")->required();
  eval_cmd->add_option("--out", ev.out, "Report JSON path")->required();
  eval_cmd->add_option("--metrics", ev.metrics, "Comma-separated metric keys, or all");
  eval_cmd->add_option("--jobs", ev.jobs, "Worker threads (default: config, then CPU count)");

  ReportArgs rp;
  auto* report_cmd = app.add_subcommand("report", "Rebuild a report from an evaluation run log");
  report_cmd->add_option("--from", rp.from, "Run log JSONL")->required();
  report_cmd->add_option("--out", rp.out, "Report JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* target = &app;
    for (auto* sub : {run_cmd, build_cmd, eval_cmd, report_cmd}) {
      if (sub->parsed()) target = sub;
    }
    std::cerr << target->help();
    return kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*build_cmd) return cmd_dataset(ds);
    if (*eval_cmd) return cmd_eval(ev);
    if (*report_cmd) return cmd_report(rp);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
