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

#include "s2d/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "s2d/error.hpp"
#include "s2d/hash.hpp"
#include "s2d/process.hpp"

namespace s2d {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(CompilerMode mode) {
  switch (mode) {
    case CompilerMode::Tex: return "tex";
    case CompilerMode::Fast: return "fast";
    case CompilerMode::Auto: return "auto";
    case CompilerMode::Off: return "off";
  }
  return "auto";
}

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::Config, "config key '" + key + "': " + what);
}

// Reads a table while tracking which keys were consumed.
class Section {
 public:
  Section(const toml::table* table, std::string prefix) : table_(table), prefix_(std::move(prefix)) {}

  [[nodiscard]] bool present() const { return table_ != nullptr; }

  template <class T>
  void get(const char* key, T& out) {
    const toml::node* n = find(key);
    if (!n) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!n->is_boolean()) bad(full(key), "expected a boolean");
      out = n->as_boolean()->get();
    } else if constexpr (std::is_integral_v<T>) {
      if (!n->is_integer()) bad(full(key), "expected an integer");
      const auto v = n->as_integer()->get();
      if (v < 0) bad(full(key), "must be non-negative");
      out = static_cast<T>(v);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!n->is_number()) bad(full(key), "expected a number");
      out = n->value<double>().value();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!n->is_string()) bad(full(key), "expected a string");
      out = n->as_string()->get();
    } else {
      static_assert(std::is_same_v<T, std::vector<std::string>>);
      const auto* arr = n->as_array();
      if (!arr) bad(full(key), "expected an array of strings");
      out.clear();
      for (const auto& e : *arr) {
        if (!e.is_string()) bad(full(key), "expected an array of strings");
        out.push_back(e.as_string()->get());
      }
    }
  }

  void done() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!used_.count(std::string(k.str())) && !v.is_table()) bad(full(std::string(k.str()).c_str()), "unknown key");
    }
  }

 private:
  const toml::node* find(const char* key) {
    if (!table_) return nullptr;
    used_.insert(key);
    return table_->get(key);
  }
  [[nodiscard]] std::string full(const char* key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  const toml::table* table_;
  std::string prefix_;
  std::set<std::string> used_;
};

const toml::table* subtable(const toml::table& t, const char* key) {
  const auto* n = t.get(key);
  if (!n) return nullptr;
  if (!n->is_table()) bad(key, "expected a table");
  return n->as_table();
}

CompilerMode mode_from_string(const std::string& s) {
  for (auto m : {CompilerMode::Tex, CompilerMode::Fast, CompilerMode::Auto, CompilerMode::Off}) {
    if (to_string(m) == s) return m;
  }
  bad("pipeline.compiler", "expected tex, fast, auto or off, got '" + s + "'");
}

BackendSpec read_backend(const toml::table* t, const std::string& prefix, const fs::path& base_dir) {
  Section s(t, prefix);
  BackendSpec b;
  s.get("type", b.type);
  if (b.type == "scripted") {
    std::string script;
    s.get("script", script);
    if (script.empty()) bad(prefix + ".script", "required for a scripted backend");
    b.script = fs::path(script).is_absolute() ? fs::path(script) : base_dir / script;
  } else if (b.type == "remote") {
    s.get("base_url", b.remote.base_url);
    s.get("model", b.remote.model);
    s.get("api_key_env", b.remote.api_key_env);
    s.get("vision", b.remote.vision);
    s.get("max_in_flight", b.remote.max_in_flight);
    s.get("retries", b.remote.retries);
    s.get("timeout_s", b.remote.timeout_s);
    if (b.remote.base_url.empty()) bad(prefix + ".base_url", "required for a remote backend");
    if (b.remote.model.empty()) bad(prefix + ".model", "required for a remote backend");
    if (b.remote.max_in_flight < 1) bad(prefix + ".max_in_flight", "must be at least 1");
  } else {
    bad(prefix + ".type", "expected scripted or remote");
  }
  s.done();
  return b;
}

}  // namespace

AppConfig parse_config(std::string_view text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config parse error at line " << e.source().begin.line << ": " << e.description();
    throw Error(ErrorCode::Config, msg.str());
  }
  for (const auto& [k, v] : root) {
    static const std::set<std::string> kKnown = {"pipeline", "toolchain", "backends", "sidecar", "metrics"};
    if (!kKnown.count(std::string(k.str()))) bad(std::string(k.str()), "unknown section");
  }

  AppConfig cfg;
  {
    Section s(subtable(root, "pipeline"), "pipeline");
    std::string mode = "auto";
    s.get("retry_budget", cfg.retry_budget);
    s.get("judge", cfg.judge_enabled);
    s.get("compiler", mode);
    s.get("temperature", cfg.temperature);
    s.get("jobs", cfg.jobs);
    s.done();
    cfg.compiler = mode_from_string(mode);
    if (cfg.temperature < 0) bad("pipeline.temperature", "must be non-negative");
  }
  {
    Section s(subtable(root, "toolchain"), "toolchain");
    auto& tc = cfg.toolchain;
    s.get("compiler", tc.compiler);
    s.get("compiler_args", tc.compiler_args);
    s.get("preamble", tc.preamble);
    s.get("postamble", tc.postamble);
    s.get("timeout_s", tc.timeout_s);
    s.get("rasterizer", tc.rasterizer);
    s.get("rasterizer_args", tc.rasterizer_args);
    s.get("dpi", cfg.dpi);
    s.done();
    if (cfg.dpi <= 0) bad("toolchain.dpi", "must be positive");
    if (tc.timeout_s <= 0) bad("toolchain.timeout_s", "must be positive");
  }
  if (const auto* backends = subtable(root, "backends")) {
    for (const auto& [k, v] : *backends) {
      const std::string role(k.str());
      static const std::set<std::string> kRoles = {"default", "generator", "editor", "judge", "sketcher"};
      if (!kRoles.count(role)) bad("backends." + role, "unknown role");
      if (!v.is_table()) bad("backends." + role, "expected a table");
      cfg.backends[role] = read_backend(v.as_table(), "backends." + role, base_dir);
    }
    if (const auto it = cfg.backends.find("default"); it != cfg.backends.end()) {
      for (const char* role : {"generator", "editor", "judge"}) cfg.backends.try_emplace(role, it->second);
      cfg.backends.erase("default");
    }
  }
  if (const auto* t = subtable(root, "sidecar")) {
    Section s(t, "sidecar");
    SidecarOptions o;
    bool enabled = true;
    s.get("enabled", enabled);
    s.get("url", o.url);
    s.get("retries", o.retries);
    s.get("timeout_s", o.timeout_s);
    s.get("max_in_flight", o.max_in_flight);
    s.get("batch_size", o.batch_size);
    s.done();
    if (o.max_in_flight < 1) bad("sidecar.max_in_flight", "must be at least 1");
    if (o.batch_size < 1) bad("sidecar.batch_size", "must be at least 1");
    if (enabled) cfg.sidecar = o;
  }
  {
    Section s(subtable(root, "metrics"), "metrics");
    s.get("kid_subsets", cfg.kid.subsets);
    s.get("kid_subset_size", cfg.kid.max_subset_size);
    s.get("kid_seed", cfg.kid.seed);
    s.done();
    if (cfg.kid.subsets < 1) bad("metrics.kid_subsets", "must be at least 1");
    if (cfg.kid.max_subset_size < 2) bad("metrics.kid_subset_size", "must be at least 2");
  }
  return cfg;
}

AppConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Config, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

json to_json(const AppConfig& cfg) {
  json backends = json::object();
  for (const auto& [role, b] : cfg.backends) {
    json j{{"type", b.type}};
    if (b.type == "scripted") {
      j["script"] = b.script.filename().string();
      // The script's content, not its location, is what affects results.
      std::ifstream in(b.script, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      j["script_fnv"] = hex64(fnv1a64(ss.str()));
    } else {
      j.update({{"base_url", b.remote.base_url},
                {"model", b.remote.model},
                {"api_key_env", b.remote.api_key_env},
                {"vision", b.remote.vision},
                {"max_in_flight", b.remote.max_in_flight},
                {"retries", b.remote.retries},
                {"timeout_s", b.remote.timeout_s}});
    }
    backends[role] = j;
  }
  const auto& tc = cfg.toolchain;
  json out{{"pipeline",
            {{"retry_budget", cfg.retry_budget},
             {"judge", cfg.judge_enabled},
             {"compiler", std::string(to_string(cfg.compiler))},
             {"temperature", cfg.temperature}}},
           {"toolchain",
            {{"compiler", tc.compiler},
             {"compiler_args", tc.compiler_args},
             {"preamble", tc.preamble},
             {"postamble", tc.postamble},
             {"timeout_s", tc.timeout_s},
             {"rasterizer", tc.rasterizer},
             {"rasterizer_args", tc.rasterizer_args},
             {"dpi", cfg.dpi}}},
           {"backends", backends},
           {"metrics",
            {{"kid_subsets", cfg.kid.subsets},
             {"kid_subset_size", cfg.kid.max_subset_size},
             {"kid_seed", cfg.kid.seed}}}};
  if (cfg.sidecar) {
    out["sidecar"] = {{"url", cfg.sidecar->url},
                      {"retries", cfg.sidecar->retries},
                      {"timeout_s", cfg.sidecar->timeout_s},
                      {"max_in_flight", cfg.sidecar->max_in_flight},
                      {"batch_size", cfg.sidecar->batch_size}};
  } else {
    out["sidecar"] = nullptr;
  }
  return out;
}

std::string config_hash(const AppConfig& cfg) { return hex64(fnv1a64(to_json(cfg).dump())); }

int effective_jobs(const AppConfig& cfg) {
  if (cfg.jobs > 0) return cfg.jobs;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::shared_ptr<AgentBackend> make_backend(const AppConfig& cfg, const std::string& role) {
  const auto it = cfg.backends.find(role);
  if (it == cfg.backends.end()) return nullptr;
  const auto& b = it->second;
  if (b.type == "scripted") return ScriptedBackend::from_file(b.script);
  return std::make_shared<RemoteBackend>(b.remote);
}

std::shared_ptr<Checker> make_checker(CompilerMode mode, const AppConfig& cfg, const fs::path& workdir) {
  if (mode == CompilerMode::Auto) {
    mode = find_executable(cfg.toolchain.compiler) ? CompilerMode::Tex : CompilerMode::Fast;
  }
  switch (mode) {
    case CompilerMode::Tex: return std::make_shared<TexChecker>(cfg.toolchain, workdir, cfg.dpi);
    case CompilerMode::Fast: return std::make_shared<FastChecker>();
    default: return nullptr;
  }
}

PipelineConfig make_pipeline_config(const AppConfig& cfg, const fs::path& workdir, const fs::path& diagram_dir) {
  PipelineConfig p;
  p.retry_budget = cfg.retry_budget;
  p.judge_enabled = cfg.judge_enabled;
  p.compiler_enabled = cfg.compiler != CompilerMode::Off;
  p.temperature = cfg.temperature;
  p.generator = make_backend(cfg, "generator");
  p.editor = make_backend(cfg, "editor");
  p.judge = make_backend(cfg, "judge");
  p.checker = make_checker(cfg.compiler, cfg, workdir);
  p.diagram_dir = diagram_dir;
  return p;
}

}  // namespace s2d
