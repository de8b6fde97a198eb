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
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "s2d/diagram_code.hpp"
#include "s2d/raster.hpp"

namespace s2d {

/// One benchmark sample as seen by the agents.
struct SketchTask {
  std::string id;
  Raster sketch{1, 1};
  std::vector<std::string> instructions;
  std::optional<std::vector<std::string>> edit_instructions;
  // Code-to-code tasks start from this code and skip generation.
  std::optional<std::string> initial_code;
};

/// Throws Precondition on an empty sketch, empty instruction strings, or
/// initial_code without edit instructions.
void validate(const SketchTask& task);

struct ChatImage {
  std::string mime = "image/png";
  std::string base64;
};

struct ChatMessage {
  std::string role;  // "system", "user" or "assistant"
  std::string text;
  std::vector<ChatImage> images;
};

struct ChatRequest {
  std::string agent;  // "generator", "editor" or "judge"
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
};

/// Canonical JSON payload; identical requests give identical bytes.
[[nodiscard]] std::string to_json(const ChatRequest& request);

/// All message texts joined by newlines (images omitted).
[[nodiscard]] std::string request_text(const ChatRequest& request);

struct BackendCapabilities {
  bool vision = false;
};

/// Chat-completion backend. Implementations must be callable from several
/// threads at once and hold no per-conversation state.
class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual BackendCapabilities capabilities() const = 0;
  /// Throws BackendError on transport or protocol failure.
  [[nodiscard]] virtual std::string complete(const ChatRequest& request) = 0;
};

/// Replies from a JSON script, as a pure function of the request text:
///
///   {"name": "gen", "vision": true,
///    "rules": [{"match": ["Attempt 1 of"], "reply": "..."},
///              {"match": "timeout", "error": "simulated timeout"}],
///    "default": "..."}
///
/// The first rule whose match strings all occur in request_text() wins; an
/// "error" rule throws BackendError. With no match and no default, throws.
class ScriptedBackend final : public AgentBackend {
 public:
  struct Rule {
    std::vector<std::string> match;
    std::optional<std::string> reply;
    std::optional<std::string> error;
  };

  ScriptedBackend(std::string name, bool vision, std::vector<Rule> rules, std::optional<std::string> fallback);
  static std::shared_ptr<ScriptedBackend> from_json(std::string_view text);
  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  std::string name() const override { return name_; }
  BackendCapabilities capabilities() const override { return {vision_}; }
  std::string complete(const ChatRequest& request) override;

 private:
  std::string name_;
  bool vision_;
  std::vector<Rule> rules_;
  std::optional<std::string> fallback_;
};

/// Wraps a function; for tests.
class CallbackBackend final : public AgentBackend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  CallbackBackend(std::string name, bool vision, Fn fn);
  std::string name() const override { return name_; }
  BackendCapabilities capabilities() const override { return {vision_}; }
  std::string complete(const ChatRequest& request) override { return fn_(request); }

 private:
  std::string name_;
  bool vision_;
  Fn fn_;
};

struct RemoteOptions {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  bool vision = true;
  int max_in_flight = 4;
  int retries = 2;
  double timeout_s = 120.0;
};

/// OpenAI-style POST {base_url}/chat/completions. The API key is read from
/// the environment variable named by api_key_env at call time.
class RemoteBackend final : public AgentBackend {
 public:
  explicit RemoteBackend(RemoteOptions opts);
  ~RemoteBackend() override;
  std::string name() const override { return opts_.model; }
  BackendCapabilities capabilities() const override { return {opts_.vision}; }
  std::string complete(const ChatRequest& request) override;

 private:
  struct Slots;
  RemoteOptions opts_;
  std::unique_ptr<Slots> slots_;
};

/// Content of the first ``` fenced block, without the info string and the
/// newline before the closing fence; the whole reply when there is no fence.
[[nodiscard]] std::string extract_code(std::string_view reply);

/// What went wrong with the previous attempt, fed into the next prompt.
struct Feedback {
  std::string previous_code;
  std::string problem;
};

/// Position of a request within the retry loop, echoed in the prompt.
struct AttemptInfo {
  int number = 1;
  int limit = 1;
};

[[nodiscard]] ChatRequest generation_request(const SketchTask& task, const AttemptInfo& at,
                                             const std::optional<Feedback>& feedback, double temperature = 0.0);
[[nodiscard]] ChatRequest editing_request(const DiagramCode& code, const std::vector<std::string>& edits,
                                          const AttemptInfo& at, const std::optional<Feedback>& feedback,
                                          double temperature = 0.0);

/// Sketch + instructions -> code. Throws Precondition when the backend has no
/// vision, EmptyCode when the reply holds no code, BackendError on transport.
[[nodiscard]] DiagramCode generate_code(const SketchTask& task, AgentBackend& backend, const AttemptInfo& at = {},
                                        const std::optional<Feedback>& feedback = std::nullopt,
                                        double temperature = 0.0);

/// Code + edit instructions -> edited code.
[[nodiscard]] DiagramCode edit_code(const DiagramCode& code, const std::vector<std::string>& edits,
                                    AgentBackend& backend, const AttemptInfo& at = {},
                                    const std::optional<Feedback>& feedback = std::nullopt,
                                    double temperature = 0.0);

enum class Blame { SketchToCode, EditingCode, None };

std::string_view to_string(Blame blame);
Blame blame_from_string(std::string_view text);

struct JudgeVerdict {
  bool aligned = false;
  std::string rationale;
  Blame blame = Blame::SketchToCode;
};

/// Parses a judge reply: the outermost {...} in the text must be an object
/// with a boolean "aligned". Returns nullopt when it is not.
[[nodiscard]] std::optional<JudgeVerdict> parse_verdict(std::string_view reply);

[[nodiscard]] ChatRequest judge_request(const std::optional<Raster>& diagram, const SketchTask& task,
                                        const DiagramCode& code, double temperature = 0.0);

/// Asks the backend to compare the rendered diagram (when there is one) and
/// the code against the sketch. An unparseable reply is re-asked once, then
/// mapped to {aligned: false, blame: SketchToCode}.
[[nodiscard]] JudgeVerdict judge(const std::optional<Raster>& diagram, const SketchTask& task,
                                 const DiagramCode& code, AgentBackend& backend, double temperature = 0.0);

}  // namespace s2d
