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

#include "s2d/agents.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <semaphore>
#include <sstream>

#include "s2d/error.hpp"

namespace s2d {

using nlohmann::json;

namespace {

constexpr const char* kGenerateSystem =
    "You turn hand-drawn diagram sketches into TikZ code. Reproduce every node, label and connection "
    "in the sketch. Reply with one complete tikzpicture environment inside a ```latex fenced block.";

constexpr const char* kEditSystem =
    "You edit TikZ diagram code. Apply every requested change and keep everything else as it is. "
    "Reply with the full updated code inside a ```latex fenced block.";

constexpr const char* kJudgeSystem =
    "You check whether a diagram matches the sketch it was made from. Answer with only a JSON object: "
    "{\"aligned\": true|false, \"rationale\": \"...\", \"blame\": \"SketchToCode\"|\"EditingCode\"|\"None\"}. "
    "Use SketchToCode when the structure taken from the sketch is wrong, EditingCode when a requested edit "
    "is missing or wrong, None when aligned.";

constexpr const char* kJudgeReask =
    "Your previous reply was not a JSON object in the required schema. Answer again with only the JSON object.";

std::string bullets(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += "- " + s + "\n";
  return out;
}

std::string fenced(std::string_view code) {
  std::string out = "```latex\n";
  out += code;
  if (out.back() != '\n') out += '\n';
  return out + "```\n";
}

std::string attempt_line(const AttemptInfo& at) {
  return "Attempt " + std::to_string(at.number) + " of " + std::to_string(at.limit) + ".\n";
}

std::string feedback_block(const std::optional<Feedback>& fb) {
  if (!fb) return "";
  return "\nThe previous code was rejected: " + fb->problem + "\nPrevious code:\n" + fenced(fb->previous_code) +
         "Produce a corrected version.\n";
}

ChatImage png_image(const Raster& img) { return {"image/png", base64_encode(encode_png(img))}; }

DiagramCode code_from_reply(const std::string& reply) {
  auto code = extract_code(reply);
  if (code.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::EmptyCode, "reply contained no code");
  }
  return DiagramCode(std::move(code));
}

}  // namespace

void validate(const SketchTask& task) {
  if (task.sketch.width() <= 0 || task.sketch.height() <= 0) throw Error(ErrorCode::Precondition, "empty sketch");
  for (const auto& q : task.instructions) {
    if (q.empty()) throw Error(ErrorCode::Precondition, "empty instruction string");
  }
  if (task.edit_instructions) {
    for (const auto& q : *task.edit_instructions) {
      if (q.empty()) throw Error(ErrorCode::Precondition, "empty edit instruction string");
    }
  }
  if (task.initial_code && (!task.edit_instructions || task.edit_instructions->empty())) {
    throw Error(ErrorCode::Precondition, "initial code given without edit instructions");
  }
}

std::string to_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    json images = json::array();
    for (const auto& img : m.images) images.push_back({{"mime", img.mime}, {"base64", img.base64}});
    messages.push_back({{"role", m.role}, {"text", m.text}, {"images", images}});
  }
  return json{{"agent", request.agent}, {"messages", messages}, {"temperature", request.temperature}}.dump();
}

std::string request_text(const ChatRequest& request) {
  std::string out;
  for (const auto& m : request.messages) {
    if (!out.empty()) out += '\n';
    out += m.text;
  }
  return out;
}

ScriptedBackend::ScriptedBackend(std::string name, bool vision, std::vector<Rule> rules,
                                 std::optional<std::string> fallback)
    : name_(std::move(name)), vision_(vision), rules_(std::move(rules)), fallback_(std::move(fallback)) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(std::string_view text) {
  try {
    const auto j = json::parse(text);
    std::vector<Rule> rules;
    for (const auto& r : j.value("rules", json::array())) {
      Rule rule;
      const auto& m = r.at("match");
      if (m.is_string()) rule.match.push_back(m.get<std::string>());
      else rule.match = m.get<std::vector<std::string>>();
      if (r.contains("reply")) rule.reply = r["reply"].get<std::string>();
      if (r.contains("error")) rule.error = r["error"].get<std::string>();
      if (!rule.reply && !rule.error) throw Error(ErrorCode::Config, "script rule needs reply or error");
      rules.push_back(std::move(rule));
    }
    std::optional<std::string> fallback;
    if (j.contains("default")) fallback = j["default"].get<std::string>();
    return std::make_shared<ScriptedBackend>(j.value("name", "scripted"), j.value("vision", true), std::move(rules),
                                             std::move(fallback));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("bad backend script: ") + e.what());
  }
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read backend script " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string ScriptedBackend::complete(const ChatRequest& request) {
  const auto text = request_text(request);
  for (const auto& rule : rules_) {
    const bool hit = std::all_of(rule.match.begin(), rule.match.end(),
                                 [&](const std::string& m) { return text.find(m) != std::string::npos; });
    if (!hit) continue;
    if (rule.error) throw BackendError(*rule.error, 1);
    return *rule.reply;
  }
  if (fallback_) return *fallback_;
  throw BackendError("scripted backend " + name_ + " has no reply for this request", 1);
}

CallbackBackend::CallbackBackend(std::string name, bool vision, Fn fn)
    : name_(std::move(name)), vision_(vision), fn_(std::move(fn)) {}

struct RemoteBackend::Slots {
  explicit Slots(int n) : sem(n) {}
  std::counting_semaphore<1024> sem;
};

RemoteBackend::RemoteBackend(RemoteOptions opts)
    : opts_(std::move(opts)), slots_(std::make_unique<Slots>(std::clamp(opts_.max_in_flight, 1, 1024))) {
  if (opts_.base_url.empty() || opts_.model.empty()) throw Error(ErrorCode::Config, "remote backend needs url and model");
}

RemoteBackend::~RemoteBackend() = default;

std::string RemoteBackend::complete(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    if (m.images.empty()) {
      messages.push_back({{"role", m.role}, {"content", m.text}});
      continue;
    }
    json parts = json::array({{{"type", "text"}, {"text", m.text}}});
    for (const auto& img : m.images) {
      parts.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:" + img.mime + ";base64," + img.base64}}}});
    }
    messages.push_back({{"role", m.role}, {"content", parts}});
  }
  const std::string body =
      json{{"model", opts_.model}, {"messages", messages}, {"temperature", request.temperature}}.dump();

  // Split "scheme://host[:port]/path" for httplib.
  std::string host = opts_.base_url, prefix;
  if (const auto scheme = host.find("://"); scheme != std::string::npos) {
    if (const auto slash = host.find('/', scheme + 3); slash != std::string::npos) {
      prefix = host.substr(slash);
      host.resize(slash);
    }
  }
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  httplib::Headers headers;
  if (const char* key = std::getenv(opts_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  slots_->sem.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots_->sem};

  std::string last = "no attempt made";
  int attempts = 0;
  for (int i = 0; i <= std::max(0, opts_.retries); ++i) {
    ++attempts;
    httplib::Client cli(host);
    const auto secs = static_cast<time_t>(opts_.timeout_s);
    const auto usecs = static_cast<time_t>((opts_.timeout_s - secs) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    auto res = cli.Post(prefix + "/chat/completions", headers, body, "application/json");
    if (!res) {
      last = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw BackendError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500), attempts);
    }
    try {
      const auto j = json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw BackendError(std::string("malformed completion: ") + e.what(), attempts);
    }
  }
  throw BackendError(opts_.model + ": " + last, attempts);
}

std::string extract_code(std::string_view reply) {
  const auto open = reply.find("```");
  if (open == std::string_view::npos) return std::string(reply);
  auto body = open + 3;
  const auto eol = reply.find('\n', body);
  const auto close_same_line = reply.find("```", body);
  if (close_same_line != std::string_view::npos && (eol == std::string_view::npos || close_same_line < eol)) {
    return std::string(reply.substr(body, close_same_line - body));
  }
  if (eol == std::string_view::npos) return "";
  body = eol + 1;
  const auto close = reply.find("```", body);
  std::string out(reply.substr(body, close == std::string_view::npos ? std::string_view::npos : close - body));
  if (close != std::string_view::npos && !out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

ChatRequest generation_request(const SketchTask& task, const AttemptInfo& at, const std::optional<Feedback>& feedback,
                               double temperature) {
  ChatRequest req{"generator", {}, temperature};
  req.messages.push_back({"system", kGenerateSystem, {}});
  std::string text = attempt_line(at) + "Draw the attached sketch as TikZ code.\n";
  if (!task.instructions.empty()) text += "Instructions:\n" + bullets(task.instructions);
  text += feedback_block(feedback);
  req.messages.push_back({"user", text, {png_image(task.sketch)}});
  return req;
}

ChatRequest editing_request(const DiagramCode& code, const std::vector<std::string>& edits, const AttemptInfo& at,
                            const std::optional<Feedback>& feedback, double temperature) {
  ChatRequest req{"editor", {}, temperature};
  req.messages.push_back({"system", kEditSystem, {}});
  std::string text = attempt_line(at) + "Code:\n" + fenced(code.source()) + "Edits:\n" + bullets(edits);
  text += feedback_block(feedback);
  req.messages.push_back({"user", text, {}});
  return req;
}

DiagramCode generate_code(const SketchTask& task, AgentBackend& backend, const AttemptInfo& at,
                          const std::optional<Feedback>& feedback, double temperature) {
  if (!backend.capabilities().vision) {
    throw Error(ErrorCode::Precondition, "generator backend " + backend.name() + " cannot read images");
  }
  validate(task);
  return code_from_reply(backend.complete(generation_request(task, at, feedback, temperature)));
}

DiagramCode edit_code(const DiagramCode& code, const std::vector<std::string>& edits, AgentBackend& backend,
                      const AttemptInfo& at, const std::optional<Feedback>& feedback, double temperature) {
  if (edits.empty()) throw Error(ErrorCode::Precondition, "no edit instructions");
  return code_from_reply(backend.complete(editing_request(code, edits, at, feedback, temperature)));
}

std::string_view to_string(Blame blame) {
  switch (blame) {
    case Blame::SketchToCode: return "SketchToCode";
    case Blame::EditingCode: return "EditingCode";
    case Blame::None: return "None";
  }
  return "?";
}

Blame blame_from_string(std::string_view text) {
  if (text == "SketchToCode") return Blame::SketchToCode;
  if (text == "EditingCode") return Blame::EditingCode;
  if (text == "None") return Blame::None;
  throw Error(ErrorCode::Parse, "unknown blame: " + std::string(text));
}

std::optional<JudgeVerdict> parse_verdict(std::string_view reply) {
  const auto lo = reply.find('{');
  const auto hi = reply.rfind('}');
  if (lo == std::string_view::npos || hi == std::string_view::npos || hi < lo) return std::nullopt;
  const auto j = json::parse(reply.substr(lo, hi - lo + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("aligned") || !j["aligned"].is_boolean()) return std::nullopt;
  JudgeVerdict v;
  v.aligned = j["aligned"].get<bool>();
  if (j.contains("rationale") && j["rationale"].is_string()) v.rationale = j["rationale"].get<std::string>();
  Blame blame = Blame::SketchToCode;
  if (j.contains("blame") && j["blame"].is_string()) {
    try {
      blame = blame_from_string(j["blame"].get<std::string>());
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  if (v.aligned) v.blame = Blame::None;
  else v.blame = blame == Blame::None ? Blame::SketchToCode : blame;
  return v;
}

ChatRequest judge_request(const std::optional<Raster>& diagram, const SketchTask& task, const DiagramCode& code,
                          double temperature) {
  ChatRequest req{"judge", {}, temperature};
  req.messages.push_back({"system", kJudgeSystem, {}});
  std::string text = diagram ? "The first image is the sketch, the second is the compiled diagram.\n"
                             : "The image is the sketch. No compiled diagram is available; judge from the code.\n";
  if (!task.instructions.empty()) text += "Instructions:\n" + bullets(task.instructions);
  if (task.edit_instructions) text += "Requested edits:\n" + bullets(*task.edit_instructions);
  text += "Code:\n" + fenced(code.source());
  std::vector<ChatImage> images{png_image(task.sketch)};
  if (diagram) images.push_back(png_image(*diagram));
  req.messages.push_back({"user", text, std::move(images)});
  return req;
}

JudgeVerdict judge(const std::optional<Raster>& diagram, const SketchTask& task, const DiagramCode& code,
                   AgentBackend& backend, double temperature) {
  if (!backend.capabilities().vision) {
    throw Error(ErrorCode::Precondition, "judge backend " + backend.name() + " cannot read images");
  }
  auto req = judge_request(diagram, task, code, temperature);
  const auto first = backend.complete(req);
  if (auto v = parse_verdict(first)) return *v;
  req.messages.push_back({"assistant", first, {}});
  req.messages.push_back({"user", kJudgeReask, {}});
  if (auto v = parse_verdict(backend.complete(req))) return *v;
  return {false, "judge reply could not be parsed", Blame::SketchToCode};
}

}  // namespace s2d
