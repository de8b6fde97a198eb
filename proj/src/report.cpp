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

#include "s2d/report.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "s2d/error.hpp"
#include "s2d/image_metrics.hpp"
#include "s2d/text_metrics.hpp"

namespace s2d {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct MetricInfo {
  MetricId id;
  const char* key;
  const char* title;
};

constexpr MetricInfo kMetrics[] = {
    {MetricId::Pass1, "pass1", "Pass@1↑"}, {MetricId::BLEU, "bleu", "BLEU↑"},
    {MetricId::ROUGE_L, "rouge_l", "ROUGE-L↑"}, {MetricId::ChrF, "chrf", "chrF↑"},
    {MetricId::ED, "ed", "ED↓"}, {MetricId::CodeBLEU, "codebleu", "CodeBLEU↑"},
    {MetricId::RUBY, "ruby", "RUBY↑"}, {MetricId::FID, "fid", "FID↓"},
    {MetricId::KID, "kid", "KID↓"}, {MetricId::CFID, "cfid", "C-FID↓"},
    {MetricId::IS, "is", "IS↑"}, {MetricId::LPIPS, "lpips", "LPIPS↓"},
    {MetricId::SSIM, "ssim", "SSIM↑"},
};

const MetricInfo& info(MetricId m) { return kMetrics[static_cast<int>(m)]; }

std::optional<MetricId> metric_from_key(std::string_view key) {
  for (const auto& m : kMetrics) {
    if (key == m.key) return m.id;
  }
  return std::nullopt;
}

bool needs_sidecar(MetricId m) {
  return m == MetricId::FID || m == MetricId::KID || m == MetricId::CFID || m == MetricId::IS ||
         m == MetricId::LPIPS;
}

template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  std::vector<std::thread> pool;
  const int extra = std::min<int>(std::max(jobs, 1), static_cast<int>(std::max<std::size_t>(n, 1))) - 1;
  for (int t = 0; t < extra; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

}  // namespace

std::string_view metric_key(MetricId m) { return info(m).key; }
std::string_view metric_title(MetricId m) { return info(m).title; }

std::vector<MetricId> all_metrics() {
  std::vector<MetricId> out;
  for (const auto& m : kMetrics) out.push_back(m.id);
  return out;
}

std::vector<MetricId> parse_metric_list(std::string_view text) {
  if (text == "all") return all_metrics();
  std::vector<MetricId> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = std::min(text.find(',', pos), text.size());
    auto key = text.substr(pos, comma - pos);
    while (!key.empty() && key.front() == ' ') key.remove_prefix(1);
    while (!key.empty() && key.back() == ' ') key.remove_suffix(1);
    const auto m = metric_from_key(key);
    if (!m) throw Error(ErrorCode::Config, "unknown metric '" + std::string(key) + "'");
    if (std::find(out.begin(), out.end(), *m) == out.end()) out.push_back(*m);
    pos = comma + 1;
  }
  std::sort(out.begin(), out.end());
  return out;
}

json to_json(const EvalHeader& h) {
  json metrics = json::array();
  for (const auto m : h.metrics) metrics.push_back(std::string(metric_key(m)));
  return json{{"type", "header"},         {"v", kRunSchemaVersion}, {"task", h.task},
              {"config_hash", h.config_hash}, {"config", h.config},      {"checker", h.checker},
              {"metrics", metrics}};
}

json to_json(const EvalSample& s) {
  json j{{"type", "sample"},
         {"v", kRunSchemaVersion},
         {"id", s.id},
         {"reference", s.reference},
         {"final_check", std::string(to_string(s.final_check))},
         {"run", to_json(s.record)}};
  if (s.reference_image) j["reference_image"] = *s.reference_image;
  if (s.candidate_image) j["candidate_image"] = *s.candidate_image;
  return j;
}

namespace {

EvalHeader header_from_json(const json& j) {
  EvalHeader h;
  h.task = j.at("task").get<std::string>();
  h.config_hash = j.at("config_hash").get<std::string>();
  h.config = j.at("config");
  h.checker = j.at("checker").get<std::string>();
  for (const auto& k : j.at("metrics")) {
    const auto m = metric_from_key(k.get<std::string>());
    if (!m) throw Error(ErrorCode::Parse, "unknown metric in header: " + k.get<std::string>());
    h.metrics.push_back(*m);
  }
  return h;
}

EvalSample sample_from_json(const json& j) {
  EvalSample s;
  s.id = j.at("id").get<std::string>();
  s.reference = j.at("reference").get<std::string>();
  s.final_check = compile_status_from_string(j.at("final_check").get<std::string>());
  s.record = run_record_from_json(j.at("run"));
  if (j.contains("reference_image")) s.reference_image = j["reference_image"].get<std::string>();
  if (j.contains("candidate_image")) s.candidate_image = j["candidate_image"].get<std::string>();
  return s;
}

}  // namespace

RunLog read_run_log(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read run log " + path.string());
  RunLog log;
  log.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::string line;
  std::size_t number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (j.at("v").get<int>() != kRunSchemaVersion) throw Error(ErrorCode::Parse, "unsupported schema version");
      if (type == "header") {
        if (have_header) throw Error(ErrorCode::Parse, "second header");
        log.header = header_from_json(j);
        have_header = true;
      } else if (type == "sample") {
        if (!have_header) throw Error(ErrorCode::Parse, "sample before header");
        log.samples.push_back(sample_from_json(j));
      } else {
        throw Error(ErrorCode::Parse, "unknown line type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, path.string() + ": line " + std::to_string(number) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::Parse, path.string() + ": line " + std::to_string(number) + ": " + e.what());
    }
  }
  if (!have_header) throw Error(ErrorCode::Parse, path.string() + ": empty run log");
  return log;
}

void write_run_log(const fs::path& path, const RunLog& log) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write run log " + path.string());
  }
  append_line(path, to_json(log.header).dump());
  for (const auto& s : log.samples) append_line(path, to_json(s).dump());
}

std::unique_ptr<SidecarClient> sidecar_for(const EvalHeader& header) {
  const auto& sc = header.config.value("sidecar", json());
  if (!sc.is_object()) return nullptr;
  SidecarOptions o;
  o.url = sc.value("url", o.url);
  o.retries = sc.value("retries", o.retries);
  o.timeout_s = sc.value("timeout_s", o.timeout_s);
  o.max_in_flight = sc.value("max_in_flight", o.max_in_flight);
  o.batch_size = sc.value("batch_size", o.batch_size);
  return std::make_unique<SidecarClient>(o);
}

namespace {

std::optional<double> text_metric(MetricId m, const DiagramCode& cand, const DiagramCode& ref) {
  switch (m) {
    case MetricId::BLEU: return bleu(token_texts(cand), token_texts(ref)).value;
    case MetricId::ROUGE_L: return rouge_l(token_texts(cand), token_texts(ref)).value;
    case MetricId::ChrF: return chrf(cand.source(), ref.source()).value;
    case MetricId::ED: return edit_distance(cand.source(), ref.source()).value;
    case MetricId::CodeBLEU: return codebleu(cand, ref).value;
    case MetricId::RUBY: return ruby(cand, ref).value;
    default: return std::nullopt;
  }
}

json number_or_null(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json build_report(const RunLog& log, SidecarClient* sidecar) {
  const auto& metrics = log.header.metrics;
  auto wants = [&](MetricId m) { return std::find(metrics.begin(), metrics.end(), m) != metrics.end(); };

  std::vector<const EvalSample*> samples;
  for (const auto& s : log.samples) samples.push_back(&s);
  std::stable_sort(samples.begin(), samples.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

  std::vector<std::string> warnings;
  std::vector<std::string> absent;
  std::map<MetricId, std::vector<std::optional<double>>> per_sample;
  for (const auto m : metrics) per_sample[m].assign(samples.size(), std::nullopt);

  // Text metrics per row.
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const DiagramCode cand(samples[i]->record.final_code), ref(samples[i]->reference);
    for (const auto m : metrics) {
      if (m == MetricId::Pass1 || needs_sidecar(m) || m == MetricId::SSIM) continue;
      try {
        per_sample[m][i] = text_metric(m, cand, ref);
      } catch (const Error& e) {
        warnings.push_back(samples[i]->id + ": " + std::string(metric_key(m)) + " undefined (" + e.what() + ")");
      }
    }
  }

  // Image pairs.
  std::vector<std::optional<Raster>> refs(samples.size()), gens(samples.size());
  const bool any_image_metric = std::any_of(metrics.begin(), metrics.end(), [](MetricId m) {
    return needs_sidecar(m) || m == MetricId::SSIM;
  });
  std::size_t without_images = 0;
  if (any_image_metric) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      try {
        if (samples[i]->reference_image) refs[i] = read_png(log.base_dir / *samples[i]->reference_image);
        if (samples[i]->candidate_image) gens[i] = read_png(log.base_dir / *samples[i]->candidate_image);
      } catch (const Error& e) {
        warnings.push_back(samples[i]->id + ": " + e.what());
      }
      if (!refs[i] || !gens[i]) ++without_images;
    }
  }
  if (wants(MetricId::SSIM)) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (refs[i] && gens[i]) per_sample[MetricId::SSIM][i] = ssim(*gens[i], *refs[i]).value;
    }
  }

  json aggregates = json::object();
  json details = json::object();
  std::optional<std::string> model_version;

  const bool sidecar_needed = std::any_of(metrics.begin(), metrics.end(), needs_sidecar);
  bool sidecar_ok = false;
  if (sidecar_needed) {
    if (!sidecar) {
      warnings.push_back("no sidecar configured; image feature metrics absent");
    } else if (const auto h = sidecar->health(); !h.ok) {
      warnings.push_back("sidecar unavailable at " + sidecar->options().url + "; image feature metrics absent");
    } else {
      sidecar_ok = true;
    }
  }
  auto mark_absent = [&](MetricId m, const std::string& why) {
    absent.push_back(std::string(metric_key(m)));
    if (!why.empty()) warnings.push_back(std::string(metric_key(m)) + ": " + why);
  };

  std::vector<Raster> ref_set, gen_set;
  std::vector<std::string> ref_ids, gen_ids;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (refs[i]) {
      ref_set.push_back(*refs[i]);
      ref_ids.push_back(samples[i]->id);
    }
    if (gens[i]) {
      gen_set.push_back(*gens[i]);
      gen_ids.push_back(samples[i]->id);
    }
  }

  for (const auto m : metrics) {
    if (!needs_sidecar(m)) continue;
    if (!sidecar_ok) {
      mark_absent(m, "");
      continue;
    }
    try {
      switch (m) {
        case MetricId::LPIPS:
          for (std::size_t i = 0; i < samples.size(); ++i) {
            if (refs[i] && gens[i]) per_sample[m][i] = lpips_pair(*gens[i], *refs[i], *sidecar).value;
          }
          break;
        case MetricId::FID:
        case MetricId::CFID:
        case MetricId::KID: {
          if (ref_set.size() < 2 || gen_set.size() < 2) {
            mark_absent(m, "needs at least two rendered references and candidates");
            break;
          }
          const auto model = m == MetricId::CFID ? FeatureModel::CLIPImage : FeatureModel::InceptionPool3;
          const auto real = sidecar->features(model, ref_set, ref_ids);
          const auto gen = sidecar->features(model, gen_set, gen_ids);
          model_version = sidecar->model_version();
          if (m == MetricId::KID) {
            KidOptions ko;
            const auto& mc = log.header.config.value("metrics", json::object());
            ko.subsets = mc.value("kid_subsets", ko.subsets);
            ko.max_subset_size = mc.value("kid_subset_size", ko.max_subset_size);
            ko.seed = mc.value("kid_seed", ko.seed);
            const auto s = kid(real, gen, ko);
            aggregates["kid"] = s.value;
            details["kid"] = s.detail;
          } else {
            const auto s = fid(real, gen);
            aggregates[std::string(metric_key(m))] = s.value;
            details[std::string(metric_key(m))] = s.detail;
          }
          break;
        }
        case MetricId::IS: {
          if (gen_set.empty()) {
            mark_absent(m, "no rendered candidates");
            break;
          }
          const auto s = inception_score(sidecar->logits(gen_set));
          model_version = sidecar->model_version();
          aggregates["is"] = s.value;
          break;
        }
        default: break;
      }
    } catch (const Error& e) {
      per_sample[m].assign(samples.size(), std::nullopt);
      aggregates.erase(std::string(metric_key(m)));
      mark_absent(m, e.what());
    }
  }

  // Pass@1 over non-skipped final checks.
  std::size_t skipped = 0, failed_runs = 0;
  std::vector<CompileStatus> checks;
  for (const auto* s : samples) {
    if (s->record.status == FinalStatus::Failed) ++failed_runs;
    if (s->final_check == CompileStatus::Skipped) ++skipped;
    else checks.push_back(s->final_check);
  }
  if (wants(MetricId::Pass1)) {
    if (checks.empty()) mark_absent(MetricId::Pass1, "every final check was skipped");
    else aggregates["pass1"] = pass_at_1(checks).value;
  }

  // Macro-averages of per-sample metrics.
  for (const auto m : metrics) {
    if (m == MetricId::Pass1 || m == MetricId::FID || m == MetricId::KID || m == MetricId::CFID || m == MetricId::IS)
      continue;
    const auto key = std::string(metric_key(m));
    if (std::find(absent.begin(), absent.end(), key) != absent.end()) continue;
    double sum = 0;
    std::size_t n = 0;
    for (const auto& v : per_sample[m]) {
      if (v) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) mark_absent(m, "no sample defines it");
    else aggregates[key] = sum / static_cast<double>(n);
  }

  json rows = json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = *samples[i];
    json row{{"id", s.id},
             {"final", s.record.status == FinalStatus::Accepted ? "Accepted" : "Failed"},
             {"final_check", std::string(to_string(s.final_check))},
             {"attempts", s.record.attempts.size()}};
    if (s.record.error_label) row["error_label"] = std::string(to_string(*s.record.error_label));
    for (const auto m : metrics) {
      if (m == MetricId::Pass1) {
        row["pass1"] = s.final_check == CompileStatus::Skipped ? json(nullptr)
                                                                : json(s.final_check == CompileStatus::Success);
        continue;
      }
      if (m == MetricId::FID || m == MetricId::KID || m == MetricId::CFID || m == MetricId::IS) continue;
      const auto key = std::string(metric_key(m));
      if (std::find(absent.begin(), absent.end(), key) != absent.end()) continue;
      row[key] = number_or_null(per_sample[m][i]);
    }
    rows.push_back(std::move(row));
  }

  json metric_keys = json::array();
  for (const auto m : metrics) metric_keys.push_back(std::string(metric_key(m)));
  json report{
      {"schema", "s2d.report"},
      {"v", kReportSchemaVersion},
      {"meta",
       {{"task", log.header.task},
        {"config_hash", log.header.config_hash},
        {"toolchain", log.header.checker},
        {"sidecar_model_version", model_version ? json(*model_version) : json(nullptr)},
        {"metrics", metric_keys},
        {"aggregation",
         "text metrics, SSIM and LPIPS: macro-average over samples where defined; Pass@1: over final "
         "checks that were not Skipped; FID, KID, C-FID, IS: over the full image sets"},
        {"kid", log.header.config.value("metrics", json::object())}}},
      {"rows", rows},
      {"aggregates", aggregates},
      {"absent", absent},
      {"warnings", warnings},
      {"exclusions",
       {{"samples", samples.size()},
        {"skipped_checks", skipped},
        {"failed_runs", failed_runs},
        {"without_images", without_images}}}};
  if (!details.empty()) report["details"] = details;
  return report;
}

namespace {

std::string fmt(const json& v) {
  if (v.is_null()) return "-";
  if (v.is_boolean()) return v.get<bool>() ? "pass" : "fail";
  if (v.is_number()) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << v.get<double>();
    return ss.str();
  }
  return v.is_string() ? v.get<std::string>() : v.dump();
}

// Display width in code points.
std::size_t width(const std::string& s) {
  std::size_t n = 0;
  for (const unsigned char c : s) n += (c & 0xc0) != 0x80;
  return n;
}

std::string render_grid(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> w;
  for (const auto& row : cells) {
    w.resize(std::max(w.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) w[c] = std::max(w[c], width(row[c]));
  }
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      if (c) out += "  ";
      const auto pad = w[c] - width(cells[r][c]);
      if (c == 0) out += cells[r][c] + std::string(pad, ' ');
      else out += std::string(pad, ' ') + cells[r][c];
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (const auto x : w) total += x;
      out += std::string(total + 2 * (w.size() - 1), '-') + '\n';
    }
  }
  return out;
}

}  // namespace

std::string render_table(const json& report) {
  const auto& meta = report.at("meta");
  std::vector<MetricId> metrics;
  for (const auto& k : meta.at("metrics")) metrics.push_back(*metric_from_key(k.get<std::string>()));

  std::ostringstream out;
  out << "task " << meta.at("task").get<std::string>() << ", config " << meta.at("config_hash").get<std::string>()
      << ", " << report.at("exclusions").at("samples").get<std::size_t>() << " samples\n";
  out << "toolchain: " << meta.at("toolchain").get<std::string>() << "\n";
  if (!meta.at("sidecar_model_version").is_null())
    out << "sidecar model: " << meta.at("sidecar_model_version").get<std::string>() << "\n";
  out << "aggregation: " << meta.at("aggregation").get<std::string>() << "\n\n";

  std::vector<std::vector<std::string>> agg(2);
  agg[0].push_back("");
  agg[1].push_back("all");
  const auto& aggregates = report.at("aggregates");
  for (const auto m : metrics) {
    agg[0].emplace_back(metric_title(m));
    const auto key = std::string(metric_key(m));
    agg[1].push_back(aggregates.contains(key) ? fmt(aggregates[key]) : "absent");
  }
  out << render_grid(agg) << "\n";

  std::vector<std::vector<std::string>> rows(1);
  rows[0] = {"id", "final", "check", "attempts"};
  std::vector<std::string> row_keys;
  for (const auto m : metrics) {
    const auto key = std::string(metric_key(m));
    if (!report.at("rows").empty() && report["rows"][0].contains(key)) {
      rows[0].emplace_back(metric_title(m));
      row_keys.push_back(key);
    }
  }
  for (const auto& r : report.at("rows")) {
    std::vector<std::string> line{r.at("id").get<std::string>(), r.at("final").get<std::string>(),
                                  r.at("final_check").get<std::string>(), std::to_string(r.at("attempts").get<int>())};
    for (const auto& k : row_keys) line.push_back(fmt(r.at(k)));
    rows.push_back(std::move(line));
  }
  out << render_grid(rows);

  const auto& ex = report.at("exclusions");
  out << "\nexcluded from Pass@1 (skipped checks): " << ex.at("skipped_checks").get<std::size_t>()
      << "; failed runs: " << ex.at("failed_runs").get<std::size_t>()
      << "; samples without images: " << ex.at("without_images").get<std::size_t>() << "\n";
  for (const auto& w : report.at("warnings")) out << "warning: " << w.get<std::string>() << "\n";
  return out.str();
}

namespace {

// Splits a C2C query into the sketch code and its edit bullets.
std::pair<std::string, std::vector<std::string>> split_c2c_query(const std::string& query) {
  static constexpr std::string_view kCode = "Sketch code:\n", kEdits = "\nEdits:\n";
  const auto c = query.find(kCode);
  const auto e = query.rfind(kEdits);
  if (c == std::string::npos || e == std::string::npos || e < c)
    throw Error(ErrorCode::Parse, "C2C query lacks 'Sketch code:' and 'Edits:' sections");
  auto code = query.substr(c + kCode.size(), e - c - kCode.size());
  std::vector<std::string> bullets;
  std::istringstream in(query.substr(e + kEdits.size()));
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("- ", 0) == 0 && line.size() > 2) bullets.push_back(line.substr(2));
  }
  if (bullets.empty()) throw Error(ErrorCode::Parse, "C2C query has no edit bullets");
  return {std::move(code), std::move(bullets)};
}

}  // namespace

std::vector<EvalTask> load_eval_tasks(const fs::path& dataset, QueryKind kind) {
  std::ifstream in(dataset, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read dataset " + dataset.string());
  const auto base = dataset.has_parent_path() ? dataset.parent_path() : fs::path(".");
  std::vector<EvalTask> out;
  std::size_t number = 0;
  for (std::string line; std::getline(in, line);) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = dataset.string() + ": line " + std::to_string(number) + ": ";
    QueryRecord r;
    try {
      r = query_record_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, where + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::Parse, where + e.what());
    }
    if (r.kind != kind)
      throw Error(ErrorCode::Config, where + "record kind " + std::string(to_string(r.kind)) + " does not match task");
    EvalTask t;
    t.task.id = r.id;
    t.reference = r.answer;
    fs::path image;
    if (r.image_path) image = base / *r.image_path;
    else if (fs::exists(base / "images" / (r.id + ".png"))) image = base / "images" / (r.id + ".png");
    if (!image.empty()) t.task.sketch = read_png(image);
    else if (kind == QueryKind::S2C) throw Error(ErrorCode::Parse, where + "S2C record has no image_path");
    if (kind == QueryKind::S2C) {
      t.task.instructions = {r.query};
    } else {
      auto [code, bullets] = split_c2c_query(r.query);
      t.task.instructions = {r.query.substr(0, r.query.find('\n'))};
      t.task.initial_code = std::move(code);
      t.task.edit_instructions = std::move(bullets);
    }
    validate(t.task);
    out.push_back(std::move(t));
  }
  if (out.empty()) throw Error(ErrorCode::EmptyInput, "dataset " + dataset.string() + " has no records");
  return out;
}

RunLog run_eval(const std::vector<EvalTask>& tasks, const AppConfig& cfg, const EvalOptions& opts) {
  const auto log_dir = opts.log_path.has_parent_path() ? opts.log_path.parent_path() : fs::path(".");
  fs::create_directories(opts.images_dir);
  const auto workdir = opts.images_dir / ".work";
  fs::create_directories(workdir);

  auto pipeline = make_pipeline_config(cfg, workdir, {});
  // The final Pass@1 check always compiles, even for the compiler-off ablation.
  const auto checker = make_checker(cfg.compiler == CompilerMode::Off ? CompilerMode::Auto : cfg.compiler, cfg, workdir);
  for (const auto& t : tasks) validate(pipeline, t.task);

  RunLog log;
  log.base_dir = log_dir;
  log.header.task = opts.task;
  log.header.config = to_json(cfg);
  log.header.config_hash = config_hash(cfg);
  log.header.checker = checker->describe();
  log.header.metrics = opts.metrics;
  log.samples.resize(tasks.size());

  auto render_to = [&](const DiagramCode& code, const std::string& name,
                       CompileStatus* status) -> std::optional<std::string> {
    const auto result = checker->check(code);
    if (status) *status = result.status;
    std::optional<std::string> rel;
    if (result.status == CompileStatus::Success) {
      if (const auto img = checker->render(code, result)) {
        const auto path = opts.images_dir / name;
        write_png(normalize_size(crop_whitespace(*img)), path);
        rel = fs::relative(path, log_dir).generic_string();
      }
    }
    if (result.artifact) fs::remove(*result.artifact);
    return rel;
  };

  parallel_for(tasks.size(), opts.jobs, [&](std::size_t i) {
    const auto& t = tasks[i];
    auto& s = log.samples[i];
    s.id = t.task.id;
    s.reference = t.reference;
    s.record = run_pipeline(t.task, pipeline);
    if (s.record.status == FinalStatus::Failed && !s.record.error_label) {
      s.record.error_label = classify_failure(DiagramCode(s.record.final_code), DiagramCode(t.reference));
    }
    s.reference_image = render_to(DiagramCode(t.reference), t.task.id + ".ref.png", nullptr);
    if (s.record.final_code.find_first_not_of(" \t\r\n") == std::string::npos) {
      s.final_check = CompileStatus::CompileError;
    } else {
      s.candidate_image = render_to(DiagramCode(s.record.final_code), t.task.id + ".gen.png", &s.final_check);
    }
  });
  fs::remove_all(workdir);
  write_run_log(opts.log_path, log);
  return log;
}

}  // namespace s2d
