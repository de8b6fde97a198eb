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
#include <random>
#include <set>
#include <map>
#include <mutex>
#include <thread>

#include "pipeline_fixtures.hpp"
#include "s2d/error.hpp"
#include "s2d/process.hpp"

using namespace s2d;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> ReadLines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::shared_ptr<AgentBackend> Script(const std::string& json) { return ScriptedBackend::from_json(json); }

// Every retry must start in the phase blamed by the attempt before it.
void ExpectRoutingSound(const RunRecord& r, bool has_edits, bool c2c) {
  for (std::size_t i = 1; i < r.attempts.size(); ++i) {
    const auto& prev = r.attempts[i - 1];
    Phase want;
    if (prev.verdict && !prev.verdict->aligned) {
      want = prev.verdict->blame == Blame::EditingCode ? Phase::Edit : Phase::Generate;
    } else if (prev.error && prev.code.empty()) {
      want = prev.phase;
    } else {
      want = has_edits ? Phase::Edit : Phase::Generate;
    }
    if (c2c) want = Phase::Edit;
    EXPECT_EQ(r.attempts[i].phase, want) << "attempt " << i;
  }
}

}  // namespace

TEST(Pipeline, FailThenRetryThenAccept) {
  auto cfg = FastConfig();
  cfg.generator = Script(R"({"rules":[{"match":"Attempt 1 of","reply":)" + nlohmann::json(Fence(kInvalidCode)).dump() +
                         R"(}],"default":)" + nlohmann::json(Fence(kValidCode)).dump() + "}");
  const auto r = run_pipeline(MakeTask("t"), cfg);
  EXPECT_EQ(r.status, FinalStatus::Accepted);
  ASSERT_EQ(r.attempts.size(), 2u);
  EXPECT_EQ(r.attempts[0].compile.status, CompileStatus::CompileError);
  EXPECT_EQ(r.attempts[1].compile.status, CompileStatus::Success);
  EXPECT_EQ(r.attempts[1].phase, Phase::Generate);
  EXPECT_EQ(r.final_code, kValidCode);
  EXPECT_EQ(r.best_attempt, 1);
}

TEST(Pipeline, RetryPromptCarriesCompilerFeedback) {
  auto cfg = FastConfig();
  std::vector<std::string> texts;
  std::mutex mu;
  cfg.generator = std::make_shared<CallbackBackend>("g", true, [&](const ChatRequest& r) {
    std::lock_guard lock(mu);
    texts.push_back(request_text(r));
    return Fence(texts.size() == 1 ? kInvalidCode : kValidCode);
  });
  (void)run_pipeline(MakeTask("t"), cfg);
  ASSERT_EQ(texts.size(), 2u);
  EXPECT_EQ(texts[0].find("rejected"), std::string::npos);
  EXPECT_NE(texts[1].find("UnterminatedStatement"), std::string::npos);
}

TEST(Pipeline, BudgetExhaustion) {
  for (int budget : {0, 1, 2, 5}) {
    auto cfg = FastConfig();
    cfg.retry_budget = budget;
    cfg.generator = Always(Fence(kInvalidCode));
    const auto r = run_pipeline(MakeTask("t"), cfg);
    EXPECT_EQ(r.status, FinalStatus::Failed);
    EXPECT_EQ(r.attempts.size(), static_cast<std::size_t>(1 + budget));
    EXPECT_NE(r.reason.find("compile"), std::string::npos);
    ASSERT_TRUE(r.best_attempt);
    EXPECT_EQ(r.final_code, kInvalidCode);
  }
}

TEST(Pipeline, CompilerAndJudgeOff) {
  PipelineConfig cfg;
  cfg.judge_enabled = false;
  cfg.compiler_enabled = false;
  cfg.generator = Always(Fence(kValidCode));
  const auto r = run_pipeline(MakeTask("t"), cfg);
  EXPECT_EQ(r.status, FinalStatus::Accepted);
  ASSERT_EQ(r.attempts.size(), 1u);
  EXPECT_EQ(r.attempts[0].compile.status, CompileStatus::Skipped);
  EXPECT_FALSE(r.attempts[0].verdict);
}

TEST(Pipeline, JudgeBlamesEditor) {
  auto cfg = FastConfig();
  cfg.judge_enabled = true;
  auto gen = std::make_shared<CountingBackend>(true, [](const ChatRequest&) { return Fence(kValidCode); });
  auto editor = std::make_shared<CountingBackend>(false, [](const ChatRequest& r) {
    std::string code = kValidCode;
    const bool first = request_text(r).find("Attempt 1 of") != std::string::npos;
    code.replace(code.find("{B}"), 3, first ? "{X}" : "{Y}");
    return Fence(code);
  });
  cfg.generator = gen;
  cfg.editor = editor;
  cfg.judge = Script(R"({"rules":[{"match":"{X}","reply":)" +
                     nlohmann::json(Verdict(false, "EditingCode", "label X is wrong")).dump() + R"(}],"default":)" +
                     nlohmann::json(Verdict(true, "None")).dump() + "}");
  const auto r = run_pipeline(MakeTask("t", true), cfg);
  EXPECT_EQ(r.status, FinalStatus::Accepted);
  ASSERT_EQ(r.attempts.size(), 2u);
  EXPECT_EQ(r.attempts[0].phase, Phase::Generate);
  EXPECT_EQ(r.attempts[0].verdict->blame, Blame::EditingCode);
  EXPECT_EQ(r.attempts[1].phase, Phase::Edit);
  EXPECT_EQ(gen->calls.load(), 1);
  EXPECT_EQ(editor->calls.load(), 2);
  EXPECT_NE(r.final_code.find("{Y}"), std::string::npos);
  ExpectRoutingSound(r, true, false);
}

TEST(Pipeline, JudgeBlamesGenerator) {
  auto cfg = FastConfig();
  cfg.judge_enabled = true;
  auto gen = std::make_shared<CountingBackend>(true, [](const ChatRequest&) { return Fence(kValidCode); });
  auto editor = std::make_shared<CountingBackend>(false, [](const ChatRequest& r) {
    return Fence(extract_code(r.messages.back().text));
  });
  int judged = 0;
  cfg.judge = std::make_shared<CallbackBackend>("j", true, [&](const ChatRequest&) {
    return ++judged == 1 ? Verdict(false, "SketchToCode", "missing node") : Verdict(true, "None");
  });
  cfg.generator = gen;
  cfg.editor = editor;
  const auto r = run_pipeline(MakeTask("t", true), cfg);
  ASSERT_EQ(r.attempts.size(), 2u);
  EXPECT_EQ(r.attempts[1].phase, Phase::Generate);
  EXPECT_EQ(gen->calls.load(), 2);
  ExpectRoutingSound(r, true, false);
}

TEST(Pipeline, BlameCoercedWithoutEditPhase) {
  auto cfg = FastConfig();
  cfg.judge_enabled = true;
  cfg.retry_budget = 1;
  cfg.generator = Always(Fence(kValidCode));
  cfg.judge = Always(Verdict(false, "EditingCode", "nope"));
  const auto r = run_pipeline(MakeTask("t"), cfg);
  EXPECT_EQ(r.status, FinalStatus::Failed);
  ASSERT_EQ(r.attempts.size(), 2u);
  EXPECT_EQ(r.attempts[0].verdict->blame, Blame::SketchToCode);
  EXPECT_EQ(r.attempts[1].phase, Phase::Generate);
  EXPECT_NE(r.reason.find("nope"), std::string::npos);
}

TEST(Pipeline, CodeToCodeTasksOnlyEdit) {
  auto cfg = FastConfig();
  cfg.judge_enabled = true;
  cfg.retry_budget = 2;
  auto task = MakeTask("c2c", true);
  task.initial_code = kValidCode;
  cfg.editor = Always(Fence(kValidCode), false);
  cfg.judge = Always(Verdict(false, "SketchToCode", "still wrong"));
  const auto r = run_pipeline(task, cfg);
  ASSERT_EQ(r.attempts.size(), 3u);
  for (const auto& a : r.attempts) {
    EXPECT_EQ(a.phase, Phase::Edit);
    EXPECT_EQ(a.verdict->blame, Blame::EditingCode);
  }
}

TEST(Pipeline, AblationsProduceDistinctRecords) {
  auto base = FastConfig();
  base.generator = Always(Fence(kValidCode));
  base.judge = Always(Verdict(true, "None"));
  auto full = base;
  full.judge_enabled = true;
  auto no_judge = base;
  no_judge.judge_enabled = false;
  auto no_compiler = base;
  no_compiler.judge_enabled = true;
  no_compiler.compiler_enabled = false;

  const auto rf = run_pipeline(MakeTask("t"), full);
  const auto rj = run_pipeline(MakeTask("t"), no_judge);
  const auto rc = run_pipeline(MakeTask("t"), no_compiler);
  EXPECT_TRUE(rf.attempts[0].verdict);
  EXPECT_EQ(rf.attempts[0].compile.status, CompileStatus::Success);
  EXPECT_FALSE(rj.attempts[0].verdict);
  EXPECT_EQ(rj.attempts[0].compile.status, CompileStatus::Success);
  EXPECT_TRUE(rc.attempts[0].verdict);
  EXPECT_EQ(rc.attempts[0].compile.status, CompileStatus::Skipped);
  auto shape = [](const RunRecord& r) {
    auto j = to_json(r);
    j.erase("timings");
    return j.dump();
  };
  EXPECT_NE(shape(rf), shape(rj));
  EXPECT_NE(shape(rf), shape(rc));
  EXPECT_NE(shape(rj), shape(rc));
}

TEST(Pipeline, BackendErrorsAreRecordedNotThrown) {
  auto cfg = FastConfig();
  cfg.retry_budget = 2;
  cfg.generator = std::make_shared<CallbackBackend>("g", true, [](const ChatRequest&) -> std::string {
    throw BackendError("connection reset", 3);
  });
  RunRecord r;
  ASSERT_NO_THROW(r = run_pipeline(MakeTask("t"), cfg));
  EXPECT_EQ(r.status, FinalStatus::Failed);
  ASSERT_EQ(r.attempts.size(), 3u);
  for (const auto& a : r.attempts) {
    ASSERT_TRUE(a.error);
    EXPECT_EQ(a.compile.status, CompileStatus::Skipped);
  }
  EXPECT_FALSE(r.best_attempt);
  EXPECT_NE(r.reason.find("connection reset"), std::string::npos);
}

TEST(Pipeline, MissingCompilerStopsImmediately) {
  auto dir = make_temp_dir(fs::temp_directory_path(), "s2d-orch");
  auto cfg = FastConfig();
  ToolchainConfig tc;
  tc.compiler = "no-such-tex-engine-s2d";
  cfg.checker = std::make_shared<TexChecker>(tc, dir);
  cfg.generator = Always(Fence(kValidCode));
  const auto r = run_pipeline(MakeTask("t"), cfg);
  EXPECT_EQ(r.status, FinalStatus::Failed);
  EXPECT_EQ(r.attempts.size(), 1u);
  EXPECT_EQ(r.reason, "compiler not available");
  fs::remove_all(dir);
}

TEST(Pipeline, MissingBackendIsConfigError) {
  auto cfg = FastConfig();
  try {
    (void)run_pipeline(MakeTask("t"), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
  }
  cfg.generator = Always(Fence(kValidCode));
  cfg.judge_enabled = true;
  EXPECT_THROW((void)run_pipeline(MakeTask("t"), cfg), Error);
  cfg.judge_enabled = false;
  EXPECT_THROW((void)run_pipeline(MakeTask("t", true), cfg), Error);
}

TEST(Pipeline, AcceptedRenderIsSaved) {
  auto dir = make_temp_dir(fs::temp_directory_path(), "s2d-orch");
  auto cfg = FastConfig();
  cfg.generator = Always(Fence(kValidCode));
  cfg.diagram_dir = dir / "diagrams";
  const auto r = run_pipeline(MakeTask("saved"), cfg);
  ASSERT_EQ(r.status, FinalStatus::Accepted);
  EXPECT_EQ(r.diagram_path, (dir / "diagrams" / "saved.png").string());
  const auto img = read_png(r.diagram_path);
  EXPECT_EQ(img.width(), kPreviewWidth);
  fs::remove_all(dir);
}

TEST(Pipeline, TerminationAndRoutingUnderRandomBehaviour) {
  std::mt19937_64 seed_rng(77);
  for (int run = 0; run < 300; ++run) {
    const std::uint64_t seed = seed_rng();
    auto rng = std::make_shared<std::mt19937_64>(seed);
    auto mu = std::make_shared<std::mutex>();
    auto coin = [rng, mu](double p) {
      std::lock_guard lock(*mu);
      return std::uniform_real_distribution<double>(0, 1)(*rng) < p;
    };
    auto cfg = FastConfig();
    cfg.retry_budget = static_cast<int>(seed % 4);
    cfg.judge_enabled = seed % 3 != 0;
    cfg.compiler_enabled = seed % 5 != 0;
    const bool edits = seed % 2 == 0;
    const bool c2c = edits && seed % 7 == 0;
    auto reply = [coin](const ChatRequest&) -> std::string {
      if (coin(0.1)) throw BackendError("flaky", 1);
      return Fence(coin(0.5) ? kValidCode : kInvalidCode);
    };
    cfg.generator = std::make_shared<CallbackBackend>("g", true, reply);
    cfg.editor = std::make_shared<CallbackBackend>("e", false, reply);
    cfg.judge = std::make_shared<CallbackBackend>("j", true, [coin](const ChatRequest&) {
      if (coin(0.4)) return Verdict(true, "None");
      return Verdict(false, coin(0.5) ? "EditingCode" : "SketchToCode");
    });
    auto task = MakeTask("r" + std::to_string(run), edits);
    if (c2c) task.initial_code = kValidCode;
    const auto r = run_pipeline(task, cfg);
    ASSERT_GE(r.attempts.size(), 1u);
    ASSERT_LE(r.attempts.size(), static_cast<std::size_t>(1 + cfg.retry_budget));
    ExpectRoutingSound(r, edits, c2c);
    if (!cfg.judge_enabled) {
      for (const auto& a : r.attempts) EXPECT_FALSE(a.verdict);
    }
    if (!cfg.compiler_enabled) {
      for (const auto& a : r.attempts) EXPECT_EQ(a.compile.status, CompileStatus::Skipped);
    }
    if (r.status == FinalStatus::Accepted) {
      const auto& last = r.attempts.back();
      EXPECT_TRUE(last.compile.status == CompileStatus::Success ||
                  (!cfg.compiler_enabled && last.compile.status == CompileStatus::Skipped));
      EXPECT_FALSE(r.error_label);
    }
    const auto back = run_record_from_json(to_json(r));
    EXPECT_EQ(to_json(back), to_json(r));
  }
}

TEST(RunLog, OneLinePerRecord) {
  auto dir = make_temp_dir(fs::temp_directory_path(), "s2d-log");
  const auto log = dir / "runs.jsonl";
  auto cfg = FastConfig();
  cfg.retry_budget = 0;
  cfg.generator = Always(Fence(kValidCode));
  persist_run(run_pipeline(MakeTask("a"), cfg), log);
  persist_run(run_pipeline(MakeTask("a"), cfg), log);
  cfg.generator = Always(Fence(kInvalidCode));
  persist_run(run_pipeline(MakeTask("b"), cfg), log);
  const auto lines = ReadLines(log);
  ASSERT_EQ(lines.size(), 3u);
  for (const auto& l : lines) {
    const auto j = nlohmann::json::parse(l);
    EXPECT_EQ(j["v"], kRunSchemaVersion);
  }
  EXPECT_EQ(nlohmann::json::parse(lines[0])["task_id"], "a");
  EXPECT_EQ(nlohmann::json::parse(lines[1])["task_id"], "a");
  const auto failed = nlohmann::json::parse(lines[2]);
  EXPECT_EQ(failed["final"], "Failed");
  EXPECT_NE(failed["reason"].get<std::string>().find("compile"), std::string::npos);
  fs::remove_all(dir);
}

TEST(RunLog, ConcurrentAppendsStayIntact) {
  auto dir = make_temp_dir(fs::temp_directory_path(), "s2d-log");
  const auto log = dir / "runs.jsonl";
  constexpr int kWorkers = 16, kEach = 40;
  std::vector<std::thread> threads;
  for (int w = 0; w < kWorkers; ++w) {
    threads.emplace_back([&, w] {
      RunRecord r;
      r.task_id = "w" + std::to_string(w);
      r.final_code = std::string(2000 + w * 37, 'x');
      r.reason = "budget";
      for (int i = 0; i < kEach; ++i) persist_run(r, log);
    });
  }
  for (auto& t : threads) t.join();
  const auto lines = ReadLines(log);
  ASSERT_EQ(lines.size(), static_cast<std::size_t>(kWorkers * kEach));
  std::map<std::string, int> per;
  for (const auto& l : lines) {
    const auto r = run_record_from_json(nlohmann::json::parse(l));
    const int w = std::stoi(r.task_id.substr(1));
    EXPECT_EQ(r.final_code.size(), static_cast<std::size_t>(2000 + w * 37));
    ++per[r.task_id];
  }
  for (const auto& [id, n] : per) EXPECT_EQ(n, kEach) << id;
  fs::remove_all(dir);
}

TEST(RunBatch, OrderAndCallbacks) {
  auto cfg = FastConfig();
  cfg.generator = Always(Fence(kValidCode));
  std::vector<SketchTask> tasks;
  for (int i = 0; i < 20; ++i) tasks.push_back(MakeTask("id" + std::to_string(i)));
  std::atomic<int> done{0};
  const auto out = run_batch(tasks, cfg, 4, [&](const RunRecord&) { ++done; });
  ASSERT_EQ(out.size(), 20u);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(out[i].task_id, "id" + std::to_string(i));
  EXPECT_EQ(done.load(), 20);
}

TEST(ClassifyFailure, Labels) {
  const DiagramCode ref(kValidCode);
  std::string fewer = kValidCode;
  fewer.erase(fewer.find("\\node[draw] (b)"), std::string("\\node[draw] (b) at (2,0) {B};\n").size());
  EXPECT_EQ(classify_failure(DiagramCode(fewer), ref), ErrorLabel::MisalignedStructure);
  std::string relabel = kValidCode;
  relabel.replace(relabel.find("{B}"), 3, "{C}");
  EXPECT_EQ(classify_failure(DiagramCode(relabel), ref), ErrorLabel::MisidentifiedElement);
  std::string flipped = kValidCode;
  flipped.replace(flipped.find("(a) -- (b)"), 10, "(b) -- (a)");
  EXPECT_EQ(classify_failure(DiagramCode(flipped), ref), ErrorLabel::MisconnectedRelationship);
  EXPECT_FALSE(classify_failure(ref, ref));
  EXPECT_EQ(classify_failure(DiagramCode(kInvalidCode), ref), ErrorLabel::MisalignedStructure);
}
