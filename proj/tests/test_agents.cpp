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

#include <atomic>
#include <cstdlib>
#include <random>
#include <thread>

#include "s2d/agents.hpp"
#include "s2d/error.hpp"
#include "test_util.hpp"

#include <httplib.h>

#include <json.hpp>

using namespace s2d;

namespace {

const char* kCode =
    "\\begin{tikzpicture}\n"
    "\\node (a) {A};\n"
    "\\node (b) {B};\n"
    "\\draw[->] (a) -- (b);\n"
    "\\end{tikzpicture}";

SketchTask Task() {
  SketchTask t;
  t.id = "t1";
  t.sketch = Raster(8, 6);
  t.sketch.set(2, 2, kBlack);
  t.instructions = {"Use rounded boxes."};
  return t;
}

// Pulls the first fenced block out of the request, i.e. the code being edited.
std::string CodeInRequest(const ChatRequest& r) { return extract_code(r.messages.back().text); }

class LocalServer {
 public:
  explicit LocalServer(std::function<void(httplib::Server&)> setup) {
    setup(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string url(const std::string& path = "") const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST(ExtractCode, FencedBlockIsTakenExactly) {
  EXPECT_EQ(extract_code("Here you go:\n```latex\n\\begin{tikzpicture}\n\\end{tikzpicture}\n```\nDone."),
            "\\begin{tikzpicture}\n\\end{tikzpicture}");
  EXPECT_EQ(extract_code("```\n\\begin{tikzpicture}...\n```"), "\\begin{tikzpicture}...");
  EXPECT_EQ(extract_code("```a```"), "a");
  EXPECT_EQ(extract_code("```\nfirst\n```\n```\nsecond\n```"), "first");
  EXPECT_EQ(extract_code("```tikz\nunclosed"), "unclosed");
}

TEST(ExtractCode, ProseFallsBackToWholeReply) {
  EXPECT_EQ(extract_code("\\node (a) {A};"), "\\node (a) {A};");
}

TEST(ExtractCode, Idempotent) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 500; ++i) {
    std::string reply = testutil::random_tex_like(rng, 10);
    if (i % 3 == 0) reply = "text\n```latex\n" + reply + "\n```\nmore " + testutil::random_tex_like(rng, 4);
    if (i % 5 == 0) reply += "```";
    const auto once = extract_code(reply);
    EXPECT_EQ(extract_code(once), once);
  }
}

TEST(ScriptedBackend, RulesAreAPureFunctionOfTheRequest) {
  auto b = ScriptedBackend::from_json(R"({
    "name": "gen", "vision": true,
    "rules": [
      {"match": ["Attempt 1 of", "rounded"], "reply": "first"},
      {"match": "Attempt 2 of", "error": "simulated timeout"}
    ],
    "default": "later"})");
  EXPECT_EQ(b->name(), "gen");
  EXPECT_TRUE(b->capabilities().vision);
  const auto t = Task();
  const auto r1 = generation_request(t, {1, 3}, std::nullopt);
  EXPECT_EQ(b->complete(r1), "first");
  EXPECT_EQ(b->complete(r1), "first");
  EXPECT_THROW((void)b->complete(generation_request(t, {2, 3}, std::nullopt)), BackendError);
  EXPECT_EQ(b->complete(generation_request(t, {3, 3}, std::nullopt)), "later");
  auto strict = ScriptedBackend::from_json(R"({"rules": []})");
  EXPECT_THROW((void)strict->complete(r1), BackendError);
  EXPECT_THROW((void)ScriptedBackend::from_json("{"), Error);
  EXPECT_THROW((void)ScriptedBackend::from_json(R"({"rules":[{"match":"x"}]})"), Error);
}

TEST(Prompts, DeterministicAndTaskUntouched) {
  const auto t = Task();
  const auto copy = t;
  EXPECT_EQ(to_json(generation_request(t, {1, 4}, std::nullopt)), to_json(generation_request(t, {1, 4}, std::nullopt)));
  const Feedback fb{"x", "line 2: Undefined control sequence."};
  const auto with_fb = generation_request(t, {2, 4}, fb);
  EXPECT_NE(request_text(with_fb).find("Undefined control sequence"), std::string::npos);
  EXPECT_NE(request_text(with_fb).find("Attempt 2 of 4"), std::string::npos);
  EXPECT_EQ(with_fb.messages.back().images.size(), 1u);
  EXPECT_EQ(t.sketch, copy.sketch);
  EXPECT_EQ(t.instructions, copy.instructions);
  EXPECT_EQ(to_json(judge_request(std::nullopt, t, DiagramCode(kCode))),
            to_json(judge_request(std::nullopt, t, DiagramCode(kCode))));
}

TEST(GenerateCode, ExtractsFencedReply) {
  auto b = ScriptedBackend::from_json(R"({"default": "Sure.\n```latex\n\\node (a) {A};\n```"})");
  EXPECT_EQ(generate_code(Task(), *b).source(), "\\node (a) {A};");
}

TEST(GenerateCode, EmptyReplyIsEmptyCode) {
  auto b = ScriptedBackend::from_json(R"({"default": "```\n   \n```"})");
  try {
    (void)generate_code(Task(), *b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCode);
  }
}

TEST(GenerateCode, NoVisionFailsBeforeCalling) {
  int calls = 0;
  CallbackBackend b("text-only", false, [&](const ChatRequest&) {
    ++calls;
    return std::string(kCode);
  });
  try {
    (void)generate_code(Task(), b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Precondition);
  }
  EXPECT_EQ(calls, 0);
}

TEST(EditCode, AddsExactlyOneEdge) {
  CallbackBackend b("editor", false, [](const ChatRequest& r) {
    std::string code = CodeInRequest(r);
    code.insert(code.find("\\end{tikzpicture}"), "\\draw[->] (b) -- (a);\n");
    return "```latex\n" + code + "\n```";
  });
  const DiagramCode x(kCode);
  const auto out = edit_code(x, {"add arrow b->a"}, b);
  const auto before = extract_node_graph(parse(x).tree);
  const auto after = extract_node_graph(parse(out).tree);
  EXPECT_EQ(after.edges.size(), before.edges.size() + 1);
  EXPECT_EQ(after.vertices.size(), before.vertices.size());
}

TEST(EditCode, NoEditsIsPrecondition) {
  CallbackBackend b("editor", false, [](const ChatRequest&) { return std::string(kCode); });
  try {
    (void)edit_code(DiagramCode(kCode), {}, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Precondition);
  }
}

TEST(Judge, SchemaMapping) {
  auto aligned = ScriptedBackend::from_json(R"({"default": "{\"aligned\":true,\"rationale\":\"ok\",\"blame\":\"None\"}"})");
  const auto v = judge(std::nullopt, Task(), DiagramCode(kCode), *aligned);
  EXPECT_TRUE(v.aligned);
  EXPECT_EQ(v.blame, Blame::None);
  auto edit = ScriptedBackend::from_json(
      R"({"default": "Verdict: {\"aligned\":false,\"rationale\":\"arrow missing\",\"blame\":\"EditingCode\"}"})");
  const auto w = judge(Raster(4, 4), Task(), DiagramCode(kCode), *edit);
  EXPECT_FALSE(w.aligned);
  EXPECT_EQ(w.blame, Blame::EditingCode);
  EXPECT_EQ(w.rationale, "arrow missing");
}

TEST(Judge, MalformedTwiceIsConservative) {
  int calls = 0;
  CallbackBackend b("judge", true, [&](const ChatRequest&) {
    ++calls;
    return std::string("looks fine to me");
  });
  const auto v = judge(std::nullopt, Task(), DiagramCode(kCode), b);
  EXPECT_EQ(calls, 2);
  EXPECT_FALSE(v.aligned);
  EXPECT_EQ(v.blame, Blame::SketchToCode);
}

TEST(Judge, ReaskRecovers) {
  auto b = ScriptedBackend::from_json(R"({
    "rules": [{"match": "not a JSON object", "reply": "{\"aligned\": true}"}],
    "default": "yes"})");
  EXPECT_TRUE(judge(std::nullopt, Task(), DiagramCode(kCode), *b).aligned);
}

TEST(Judge, NeedsVision) {
  CallbackBackend b("judge", false, [](const ChatRequest&) { return std::string("{}"); });
  EXPECT_THROW((void)judge(std::nullopt, Task(), DiagramCode(kCode), b), Error);
}

TEST(ParseVerdict, Invariants) {
  EXPECT_FALSE(parse_verdict("{\"aligned\": \"yes\"}"));
  EXPECT_FALSE(parse_verdict("{\"aligned\": false, \"blame\": \"Someone\"}"));
  EXPECT_EQ(parse_verdict("{\"aligned\": true, \"blame\": \"EditingCode\"}")->blame, Blame::None);
  EXPECT_EQ(parse_verdict("{\"aligned\": false, \"blame\": \"None\"}")->blame, Blame::SketchToCode);
  EXPECT_EQ(parse_verdict("{\"aligned\": false}")->blame, Blame::SketchToCode);
}

TEST(RemoteBackend, SpeaksChatCompletions) {
  nlohmann::json seen;
  std::string auth;
  LocalServer server([&](httplib::Server& s) {
    s.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
      seen = nlohmann::json::parse(req.body);
      auth = req.get_header_value("Authorization");
      res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"```\n\\node (a) {A};\n```"}}]})",
                      "application/json");
    });
  });
  ::setenv("S2D_TEST_KEY", "sk-test", 1);
  RemoteBackend b({server.url("/v1"), "some-model", "S2D_TEST_KEY"});
  EXPECT_EQ(generate_code(Task(), b).source(), "\\node (a) {A};");
  EXPECT_EQ(auth, "Bearer sk-test");
  EXPECT_EQ(seen["model"], "some-model");
  EXPECT_EQ(seen["temperature"], 0.0);
  const auto& user = seen["messages"][1]["content"];
  ASSERT_TRUE(user.is_array());
  EXPECT_EQ(user[1]["type"], "image_url");
  EXPECT_EQ(user[1]["image_url"]["url"].get<std::string>().rfind("data:image/png;base64,", 0), 0u);
}

TEST(RemoteBackend, TimeoutCarriesAttempts) {
  LocalServer server([](httplib::Server& s) {
    s.Post("/chat/completions", [](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(600));
      res.set_content("{}", "application/json");
    });
  });
  RemoteOptions opts{server.url(), "m"};
  opts.timeout_s = 0.1;
  opts.retries = 2;
  RemoteBackend b(opts);
  try {
    (void)b.complete(generation_request(Task(), {}, std::nullopt));
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.attempts(), 3);
  }
}

TEST(RemoteBackend, ClientErrorsAreNotRetried) {
  std::atomic<int> calls{0};
  LocalServer server([&](httplib::Server& s) {
    s.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
      ++calls;
      res.status = 401;
      res.set_content(R"({"error":"bad key"})", "application/json");
    });
  });
  RemoteBackend b({server.url(), "m"});
  EXPECT_THROW((void)b.complete(generation_request(Task(), {}, std::nullopt)), BackendError);
  EXPECT_EQ(calls.load(), 1);
}

TEST(RemoteBackend, MaxInFlight) {
  std::atomic<int> active{0}, peak{0};
  LocalServer server([&](httplib::Server& s) {
    s.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
      const int now = ++active;
      for (int seen = peak.load(); now > seen && !peak.compare_exchange_weak(seen, now);) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      --active;
      res.set_content(R"({"choices":[{"message":{"content":"x"}}]})", "application/json");
    });
  });
  RemoteOptions opts{server.url(), "m"};
  opts.max_in_flight = 2;
  RemoteBackend b(opts);
  std::vector<std::thread> threads;
  for (int i = 0; i < 6; ++i) threads.emplace_back([&] { (void)b.complete(ChatRequest{}); });
  for (auto& t : threads) t.join();
  EXPECT_LE(peak.load(), 2);
}

TEST(SketchTask, Validation) {
  auto t = Task();
  EXPECT_NO_THROW(validate(t));
  t.instructions.push_back("");
  EXPECT_THROW(validate(t), Error);
  t = Task();
  t.initial_code = "x";
  EXPECT_THROW(validate(t), Error);
  t.edit_instructions = std::vector<std::string>{"rename a"};
  EXPECT_NO_THROW(validate(t));
}
