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

#include "s2d/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "s2d/error.hpp"
#include "s2d/hash.hpp"
#include "s2d/orchestrator.hpp"
#include "s2d/process.hpp"

namespace s2d {

namespace fs = std::filesystem;
using nlohmann::json;

Raster crop_whitespace(const Raster& img, int threshold, int margin) {
  const auto g = to_gray(img);
  int x0 = img.width(), y0 = img.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (g[static_cast<std::size_t>(y) * img.width() + x] < threshold) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) return Raster(1, 1, kWhite);
  const int m = std::max(0, margin);
  Raster out(x1 - x0 + 1 + 2 * m, y1 - y0 + 1 + 2 * m, kWhite);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) out.set(x - x0 + m, y - y0 + m, img.at(x, y));
  }
  return out;
}

namespace {

// Area-weighted average of the source rectangle [sx0, sx1) x [sy0, sy1).
Rgb area_sample(const Raster& img, double sx0, double sx1, double sy0, double sy1) {
  double acc[3] = {0, 0, 0}, wsum = 0;
  for (int y = static_cast<int>(std::floor(sy0)); y < static_cast<int>(std::ceil(sy1)); ++y) {
    const double wy = std::min<double>(y + 1, sy1) - std::max<double>(y, sy0);
    if (wy <= 0 || y >= img.height()) continue;
    for (int x = static_cast<int>(std::floor(sx0)); x < static_cast<int>(std::ceil(sx1)); ++x) {
      const double wx = std::min<double>(x + 1, sx1) - std::max<double>(x, sx0);
      if (wx <= 0 || x >= img.width()) continue;
      const auto c = img.at(x, y);
      acc[0] += wx * wy * c.r;
      acc[1] += wx * wy * c.g;
      acc[2] += wx * wy * c.b;
      wsum += wx * wy;
    }
  }
  auto ch = [&](int i) { return static_cast<std::uint8_t>(std::clamp(std::lround(acc[i] / wsum), 0L, 255L)); };
  return {ch(0), ch(1), ch(2)};
}

Rgb bilinear_sample(const Raster& img, double fx, double fy) {
  fx = std::clamp(fx, 0.0, img.width() - 1.0);
  fy = std::clamp(fy, 0.0, img.height() - 1.0);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, img.width() - 1), y1 = std::min(y0 + 1, img.height() - 1);
  const double ax = fx - x0, ay = fy - y0;
  const Rgb c00 = img.at(x0, y0), c10 = img.at(x1, y0), c01 = img.at(x0, y1), c11 = img.at(x1, y1);
  auto mix = [&](std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
    const double v = (1 - ay) * ((1 - ax) * a + ax * b) + ay * ((1 - ax) * c + ax * d);
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  };
  return {mix(c00.r, c10.r, c01.r, c11.r), mix(c00.g, c10.g, c01.g, c11.g), mix(c00.b, c10.b, c01.b, c11.b)};
}

}  // namespace

Raster normalize_size(const Raster& img, int width, int height) {
  if (img.width() == width && img.height() == height) return img;
  const double s = std::min(static_cast<double>(width) / img.width(), static_cast<double>(height) / img.height());
  const int nw = std::clamp(static_cast<int>(std::lround(img.width() * s)), 1, width);
  const int nh = std::clamp(static_cast<int>(std::lround(img.height() * s)), 1, height);
  const double sx = static_cast<double>(img.width()) / nw;
  const double sy = static_cast<double>(img.height()) / nh;
  Raster out(width, height, kWhite);
  const int ox = (width - nw) / 2, oy = (height - nh) / 2;
  for (int y = 0; y < nh; ++y) {
    for (int x = 0; x < nw; ++x) {
      Rgb c;
      if (nw == img.width() && nh == img.height()) c = img.at(x, y);
      else if (sx >= 1.0 && sy >= 1.0) c = area_sample(img, x * sx, (x + 1) * sx, y * sy, (y + 1) * sy);
      else c = bilinear_sample(img, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
      out.set(ox + x, oy + y, c);
    }
  }
  return out;
}

Raster sketchify(const Raster& img) {
  const auto g = to_gray(img);
  std::array<std::size_t, 256> hist{};
  for (double v : g) ++hist[static_cast<std::size_t>(std::clamp(std::lround(v), 0L, 255L))];
  // Otsu: maximize between-class variance.
  const double total = static_cast<double>(g.size());
  double sum_all = 0;
  for (int i = 0; i < 256; ++i) sum_all += i * static_cast<double>(hist[i]);
  double w0 = 0, sum0 = 0, best = -1;
  int t = 128;
  for (int i = 0; i < 256; ++i) {
    w0 += hist[i];
    if (w0 == 0 || w0 == total) continue;
    sum0 += i * static_cast<double>(hist[i]);
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / (total - w0);
    const double between = w0 * (total - w0) * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      t = i + 1;
    }
  }
  t = std::clamp(t, 64, 200);
  Raster out(img.width(), img.height(), kWhite);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (g[static_cast<std::size_t>(y) * img.width() + x] < t) out.set(x, y, kBlack);
    }
  }
  return out;
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::Flowchart: return "Flowchart";
    case Category::DirectedGraph: return "DirectedGraph";
    case Category::UndirectedGraph: return "UndirectedGraph";
    case Category::ModelArchitecture: return "ModelArchitecture";
    case Category::MindMap: return "MindMap";
    case Category::Tree: return "Tree";
    case Category::StateMachine: return "StateMachine";
    case Category::Other: return "Other";
    case Category::Unknown: return "Unknown";
  }
  return "Unknown";
}

Category category_from_string(std::string_view text) {
  for (int i = 0; i <= static_cast<int>(Category::Unknown); ++i) {
    const auto c = static_cast<Category>(i);
    if (to_string(c) == text) return c;
  }
  return Category::Unknown;
}

std::string_view to_string(QueryKind k) { return k == QueryKind::S2C ? "S2C" : "C2C"; }

json to_json(const QueryRecord& r) {
  json j{{"id", r.id},
         {"kind", std::string(to_string(r.kind))},
         {"query", r.query},
         {"answer", r.answer},
         {"category", std::string(to_string(r.category))},
         {"provenance", r.provenance}};
  if (r.image_path) j["image_path"] = *r.image_path;
  static constexpr const char* kStatus[] = {"Unreviewed", "Passed", "Rejected"};
  j["inspection"] = {{"status", kStatus[static_cast<int>(r.inspection.status)]}};
  if (!r.inspection.reason.empty()) j["inspection"]["reason"] = r.inspection.reason;
  return j;
}

QueryRecord query_record_from_json(const json& j) {
  try {
    QueryRecord r;
    r.id = j.at("id").get<std::string>();
    r.kind = j.at("kind").get<std::string>() == "C2C" ? QueryKind::C2C : QueryKind::S2C;
    r.query = j.at("query").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.category = category_from_string(j.value("category", "Unknown"));
    r.provenance = j.value("provenance", "");
    if (j.contains("image_path")) r.image_path = j["image_path"].get<std::string>();
    if (j.contains("inspection")) {
      const auto st = j["inspection"].value("status", "Unreviewed");
      r.inspection.status = st == "Passed"     ? InspectionStatus::Passed
                            : st == "Rejected" ? InspectionStatus::Rejected
                                               : InspectionStatus::Unreviewed;
      r.inspection.reason = j["inspection"].value("reason", "");
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("bad query record: ") + e.what());
  }
}

namespace {

std::vector<std::string> content_lines(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

enum class Op { Keep, Del, Add };

std::vector<std::pair<Op, std::string>> line_diff(const std::vector<std::string>& a,
                                                  const std::vector<std::string>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<std::uint32_t>> l(n + 1, std::vector<std::uint32_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) l[i][j] = a[i] == b[j] ? l[i + 1][j + 1] + 1 : std::max(l[i + 1][j], l[i][j + 1]);
  }
  std::vector<std::pair<Op, std::string>> ops;
  std::size_t i = 0, j = 0;
  while (i < n || j < m) {
    if (i < n && j < m && a[i] == b[j]) {
      ops.emplace_back(Op::Keep, a[i]);
      ++i;
      ++j;
    } else if (j < m && (i == n || l[i][j + 1] >= l[i + 1][j])) {
      ops.emplace_back(Op::Add, b[j++]);
    } else {
      ops.emplace_back(Op::Del, a[i++]);
    }
  }
  return ops;
}

struct NodeLine {
  std::string id, label;
};

std::optional<NodeLine> node_of(const std::string& line) {
  const DiagramCode code(line);
  if (code.tokens().empty()) return std::nullopt;
  const auto& head = code.tokens().front().text;
  if (head != "\\node" && head != "\\coordinate") return std::nullopt;
  // Declarations only count as nodes inside a picture.
  const auto g = extract_node_graph(parse(DiagramCode("\\begin{tikzpicture}" + line + "\\end{tikzpicture}")).tree);
  if (g.vertices.size() != 1) return std::nullopt;
  return NodeLine{g.vertices[0].id, g.vertices[0].label};
}

std::string without_label(const std::string& line, const std::string& label) {
  const std::string needle = "{" + label + "}";
  const auto p = line.rfind(needle);
  if (p == std::string::npos) return line;
  return line.substr(0, p) + "{}" + line.substr(p + needle.size());
}

}  // namespace

std::vector<std::string> edit_instructions(std::string_view sketch_code, std::string_view original_code) {
  const auto ops = line_diff(content_lines(sketch_code), content_lines(original_code));
  std::vector<std::size_t> dels, adds;
  for (std::size_t k = 0; k < ops.size(); ++k) {
    if (ops[k].first == Op::Del) dels.push_back(k);
    if (ops[k].first == Op::Add) adds.push_back(k);
  }
  // Pair removed/added declarations of the same node id.
  std::map<std::size_t, std::size_t> add_to_del;
  std::vector<bool> del_used(dels.size(), false);
  for (const auto a : adds) {
    const auto na = node_of(ops[a].second);
    if (!na) continue;
    for (std::size_t d = 0; d < dels.size(); ++d) {
      if (del_used[d]) continue;
      const auto nd = node_of(ops[dels[d]].second);
      if (nd && nd->id == na->id) {
        del_used[d] = true;
        add_to_del[a] = dels[d];
        break;
      }
    }
  }
  std::vector<bool> paired_del(ops.size(), false);
  for (const auto& [a, d] : add_to_del) paired_del[d] = true;

  std::vector<std::string> out;
  for (std::size_t k = 0; k < ops.size(); ++k) {
    const auto& [op, line] = ops[k];
    if (op == Op::Keep) continue;
    if (op == Op::Del) {
      if (!paired_del[k]) out.push_back("Remove the line: " + line);
      continue;
    }
    if (const auto it = add_to_del.find(k); it != add_to_del.end()) {
      const auto& old_line = ops[it->second].second;
      const auto nn = node_of(line);
      const auto no = node_of(old_line);
      if (nn->label != no->label && without_label(line, nn->label) == without_label(old_line, no->label)) {
        out.push_back("Set the label of node (" + nn->id + ") to \"" + nn->label + "\".");
      } else {
        out.push_back("Change node (" + nn->id + ") to: " + line);
      }
      continue;
    }
    out.push_back("Add the line: " + line);
  }
  if (out.empty()) out.push_back("No changes required.");
  return out;
}

std::pair<QueryRecord, QueryRecord> build_queries(std::string_view sketch_code, std::string_view original_code,
                                                  const std::string& image_path) {
  auto blank = [](std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; };
  if (blank(sketch_code) || blank(original_code)) throw Error(ErrorCode::EmptyCode, "empty sketch or original code");

  QueryRecord s2c;
  s2c.kind = QueryKind::S2C;
  s2c.image_path = image_path;
  s2c.answer = std::string(original_code);
  s2c.query = "Convert the sketch image into TikZ code that draws the same diagram.";
  const auto pr = parse(DiagramCode(std::string(original_code)));
  std::vector<std::string> labels;
  for (const auto& l : node_labels(extract_node_graph(pr.tree))) {
    if (!l.empty() && std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
  }
  if (!labels.empty()) {
    s2c.query += "\nSupplementary details: the diagram contains the text labels ";
    for (std::size_t i = 0; i < labels.size(); ++i) s2c.query += (i ? ", \"" : "\"") + labels[i] + "\"";
    s2c.query += ".";
  }

  QueryRecord c2c;
  c2c.kind = QueryKind::C2C;
  c2c.answer = std::string(original_code);
  c2c.query = "Edit the following sketch code so that it draws the intended diagram.\nSketch code:\n";
  c2c.query += sketch_code;
  if (c2c.query.back() != '\n') c2c.query += '\n';
  c2c.query += "Edits:\n";
  for (const auto& b : edit_instructions(sketch_code, original_code)) c2c.query += "- " + b + "\n";
  return {std::move(s2c), std::move(c2c)};
}

std::string degrade_code(const DiagramCode& original) {
  static constexpr std::string_view kOpen = "\\begin{tikzpicture}", kClose = "\\end{tikzpicture}";
  const auto pr = parse(original);
  const auto& tokens = pr.tree.tokens;
  std::vector<std::pair<Span, std::string>> edits;  // replacement per span, in source order
  std::vector<bool> in_decl(tokens.size(), false);
  std::function<void(const ParseNode&)> walk = [&](const ParseNode& n) {
    if (n.kind == NodeKind::NodeDecl || n.kind == NodeKind::EdgeDecl) {
      for (std::size_t t = n.first_token; t < n.last_token; ++t) in_decl[t] = true;
      return;
    }
    for (const auto& c : n.children) walk(c);
  };
  walk(pr.tree.root);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto& tok = tokens[t];
    if (in_decl[t]) {
      if (tok.kind == TokenKind::OptionBlock) edits.emplace_back(tok.span, "");
      continue;
    }
    // Loop bodies such as \foreach ... { ... } arrive as one text block.
    if (tok.kind == TokenKind::TextBlock && tok.closed && tok.text.size() > 2 &&
        tok.text.find('\\') != std::string::npos) {
      const auto inner = tok.text.substr(1, tok.text.size() - 2);
      auto stripped = degrade_code(DiagramCode(std::string(kOpen) + inner + std::string(kClose)));
      if (stripped.size() >= kOpen.size() + kClose.size()) {
        stripped = stripped.substr(kOpen.size(), stripped.size() - kOpen.size() - kClose.size());
        if (stripped != inner) edits.emplace_back(tok.span, "{" + stripped + "}");
      }
    }
  }
  std::string out = original.source();
  for (auto it = edits.rbegin(); it != edits.rend(); ++it) out.replace(it->first.begin, it->first.size(), it->second);
  return out;
}

std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      in_word = false;
    } else if (std::isalnum(c) || c == '_' || c >= 0x80) {
      if (!in_word) ++n;
      in_word = true;
    } else {
      ++n;
      in_word = false;
    }
  }
  return n;
}

CellStats compute_cell(const std::vector<QueryRecord>& records) {
  CellStats s;
  s.count = records.size();
  if (records.empty()) return s;
  auto fill = [&](LengthStats& ls, auto get) {
    ls.min = SIZE_MAX;
    double sum = 0;
    for (const auto& r : records) {
      const auto n = count_tokens(get(r));
      ls.min = std::min(ls.min, n);
      ls.max = std::max(ls.max, n);
      sum += static_cast<double>(n);
    }
    ls.avg = sum / static_cast<double>(records.size());
  };
  fill(s.query, [](const QueryRecord& r) -> const std::string& { return r.query; });
  fill(s.answer, [](const QueryRecord& r) -> const std::string& { return r.answer; });
  return s;
}

json to_json(const CorpusStats& s) {
  auto cell = [](const CellStats& c) {
    auto len = [&](const LengthStats& l) {
      if (c.count == 0) return json{{"min", nullptr}, {"max", nullptr}, {"avg", nullptr}};
      return json{{"min", l.min}, {"max", l.max}, {"avg", l.avg}};
    };
    return json{{"count", c.count}, {"query_tokens", len(c.query)}, {"answer_tokens", len(c.answer)}};
  };
  return json{{"seed", s.seed},
              {"sources", s.sources},
              {"rejected", s.rejected},
              {"skipped", s.skipped},
              {"tokenizer", "alnum-runs+single-punct"},
              {"image_size", {kDatasetWidth, kDatasetHeight}},
              {"train", {{"s2c", cell(s.train_s2c)}, {"c2c", cell(s.train_c2c)}}},
              {"test", {{"s2c", cell(s.test_s2c)}, {"c2c", cell(s.test_c2c)}}}};
}

double edge_energy(const Raster& img) {
  const auto g = to_gray(img);
  const int w = img.width(), h = img.height();
  double sum = 0;
  std::size_t n = 0;
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      const double gx = (g[static_cast<std::size_t>(y) * w + x + 1] - g[static_cast<std::size_t>(y) * w + x - 1]) / 2;
      const double gy = (g[static_cast<std::size_t>(y + 1) * w + x] - g[static_cast<std::size_t>(y - 1) * w + x]) / 2;
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag > 10.0) {
        sum += mag;
        ++n;
      }
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

Inspection inspect_flags(const QueryRecord& record, const Raster* raw_render, const InspectionRules& rules) {
  if (record.query.find("```") != std::string::npos) return {InspectionStatus::Rejected, "code-in-query"};
  if (raw_render) {
    const auto& r = *raw_render;
    auto ink = [&](int x, int y) { return luma(r.at(x, y)) < rules.border_threshold; };
    bool touching = false;
    for (int x = 0; x < r.width() && !touching; ++x) touching = ink(x, 0) || ink(x, r.height() - 1);
    for (int y = 0; y < r.height() && !touching; ++y) touching = ink(0, y) || ink(r.width() - 1, y);
    if (touching) return {InspectionStatus::Rejected, "truncated"};
    if (edge_energy(r) < rules.min_edge_energy) return {InspectionStatus::Rejected, "blurry"};
  }
  return {record.inspection.status == InspectionStatus::Rejected ? InspectionStatus::Unreviewed
                                                                  : record.inspection.status,
          ""};
}

std::set<std::string> train_provenances(const std::vector<std::string>& provenances, std::uint64_t seed,
                                        double train_fraction) {
  std::vector<std::string> uniq(provenances.begin(), provenances.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  const auto key = [&](const std::string& p) { return fnv1a64(std::to_string(seed) + ":" + p); };
  std::stable_sort(uniq.begin(), uniq.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  const auto n_train = static_cast<std::size_t>(std::lround(std::clamp(train_fraction, 0.0, 1.0) * uniq.size()));
  return {uniq.begin(), uniq.begin() + static_cast<std::ptrdiff_t>(n_train)};
}

namespace {

struct SourceMeta {
  Category category = Category::Unknown;
  std::string provenance;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::map<std::string, SourceMeta> read_metadata(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw Error(ErrorCode::Io, "cannot read metadata " + csv.string());
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto header = split_csv_line(line);
  auto col = [&](const char* name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int f = col("file"), c = col("category"), p = col("provenance");
  if (f < 0) throw Error(ErrorCode::Parse, "metadata needs a 'file' column");
  std::map<std::string, SourceMeta> out;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    auto at = [&](int i) { return i >= 0 && i < static_cast<int>(cells.size()) ? cells[i] : std::string(); };
    out[at(f)] = SourceMeta{category_from_string(at(c)), at(p)};
  }
  return out;
}

std::string make_id(const fs::path& rel) {
  auto s = rel.string();
  s.resize(s.size() - rel.extension().string().size());
  for (auto& ch : s) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_')) ch = '_';
  }
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Processed {
  bool ok = false;
  std::string why;
  QueryRecord s2c, c2c;
};

constexpr const char* kSketchSystem =
    "Rewrite the TikZ code below as a rough sketch version of the same diagram: drop colors, styles and fine "
    "details, keep the nodes, labels and connections. Reply with the code inside a ```latex fenced block.";

std::string sketch_code_for(const DiagramCode& original, AgentBackend* backend) {
  if (!backend) return degrade_code(original);
  ChatRequest req{"sketcher", {}, 0.0};
  req.messages.push_back({"system", kSketchSystem, {}});
  req.messages.push_back({"user", "```latex\n" + original.source() + "\n```\n", {}});
  auto code = extract_code(backend->complete(req));
  if (code.find_first_not_of(" \t\r\n") == std::string::npos) throw Error(ErrorCode::EmptyCode, "empty sketch code");
  return code;
}

Processed process_source(const fs::path& file, const std::string& id, const SourceMeta& meta,
                         const BuildOptions& opts, const fs::path& workdir) {
  Processed p;
  const DiagramCode code(slurp(file));
  Raster raw(1, 1);
  if (opts.toolchain) {
    const auto cr = compile(code, workdir, *opts.toolchain);
    if (cr.status != CompileStatus::Success || !cr.artifact) {
      p.why = "compile " + std::string(to_string(cr.status));
      return p;
    }
    try {
      raw = rasterize(*cr.artifact, opts.dpi, *opts.toolchain);
    } catch (const Error& e) {
      fs::remove(*cr.artifact);
      p.why = e.what();
      return p;
    }
    fs::remove(*cr.artifact);
  } else {
    const auto diags = validate_fast(code);
    if (!diags.empty()) {
      p.why = "invalid: " + diags.front().message;
      return p;
    }
    raw = render_preview(code);
  }
  const auto image = sketchify(normalize_size(crop_whitespace(raw)));
  const std::string rel_image = "images/" + id + ".png";
  write_png(image, opts.output_dir / rel_image);

  std::string sketch;
  try {
    sketch = sketch_code_for(code, opts.sketch_backend.get());
  } catch (const Error& e) {
    p.why = std::string("sketch code: ") + e.what();
    return p;
  }
  auto [s2c, c2c] = build_queries(sketch, code.source(), rel_image);
  for (auto* r : {&s2c, &c2c}) {
    r->id = id;
    r->category = meta.category;
    r->provenance = meta.provenance;
  }
  s2c.inspection = inspect_flags(s2c, &raw, opts.rules);
  c2c.inspection = inspect_flags(c2c, nullptr, opts.rules);
  p.ok = true;
  p.s2c = std::move(s2c);
  p.c2c = std::move(c2c);
  return p;
}

void write_jsonl(const fs::path& path, const std::vector<QueryRecord>& records) {
  const auto tmp = fs::path(path.string() + ".part");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    for (const auto& r : records) out << to_json(r).dump() << '\n';
    if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

BuildResult build_corpus(const BuildOptions& opts) {
  if (!fs::is_directory(opts.input_dir)) throw Error(ErrorCode::Io, "no input directory " + opts.input_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(opts.input_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".tex") files.push_back(fs::relative(e.path(), opts.input_dir));
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorCode::EmptyInput, "no .tex files under " + opts.input_dir.string());
  const auto meta = opts.metadata_csv ? read_metadata(*opts.metadata_csv) : std::map<std::string, SourceMeta>{};

  fs::create_directories(opts.output_dir / "images");
  const auto workdir = opts.output_dir / ".work";
  fs::create_directories(workdir);

  std::vector<std::string> ids(files.size());
  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < files.size(); ++i) {
    ids[i] = make_id(files[i]);
    if (const auto n = seen[ids[i]]++; n > 0) ids[i] += "_" + std::to_string(n);
  }
  std::vector<SourceMeta> metas(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto it = meta.find(files[i].generic_string());
    if (it != meta.end()) metas[i] = it->second;
    if (metas[i].provenance.empty()) metas[i].provenance = files[i].generic_string();
  }

  std::vector<Processed> results(files.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      try {
        results[i] = process_source(opts.input_dir / files[i], ids[i], metas[i], opts, workdir);
      } catch (const Error& e) {
        results[i].why = e.what();
      }
    }
  };
  const int jobs = std::clamp(opts.jobs, 1, std::max(1, static_cast<int>(files.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < jobs; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  fs::remove_all(workdir);

  BuildResult out;
  out.stats.seed = opts.seed;
  out.stats.sources = files.size();
  std::vector<std::string> provenances;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (results[i].ok) provenances.push_back(metas[i].provenance);
    else out.skipped.push_back(files[i].generic_string() + ": " + results[i].why);
  }
  out.stats.skipped = out.skipped.size();
  const auto train = train_provenances(provenances, opts.seed, opts.train_fraction);

  std::vector<QueryRecord> cells[2][2];  // [test?][c2c?]
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!results[i].ok) continue;
    const int split = train.count(metas[i].provenance) ? 0 : 1;
    for (const auto* r : {&results[i].s2c, &results[i].c2c}) {
      if (r->inspection.status == InspectionStatus::Rejected) {
        ++out.stats.rejected;
        continue;
      }
      cells[split][r->kind == QueryKind::C2C].push_back(*r);
    }
  }
  const char* names[2][2] = {{"train_s2c.jsonl", "train_c2c.jsonl"}, {"test_s2c.jsonl", "test_c2c.jsonl"}};
  for (int s = 0; s < 2; ++s) {
    for (int k = 0; k < 2; ++k) {
      auto& v = cells[s][k];
      std::sort(v.begin(), v.end(), [](const QueryRecord& a, const QueryRecord& b) { return a.id < b.id; });
      write_jsonl(opts.output_dir / names[s][k], v);
    }
  }
  out.stats.train_s2c = compute_cell(cells[0][0]);
  out.stats.train_c2c = compute_cell(cells[0][1]);
  out.stats.test_s2c = compute_cell(cells[1][0]);
  out.stats.test_c2c = compute_cell(cells[1][1]);
  {
    std::ofstream s(opts.output_dir / "stats.json", std::ios::binary | std::ios::trunc);
    s << to_json(out.stats).dump(2) << '\n';
  }
  return out;
}

}  // namespace s2d
