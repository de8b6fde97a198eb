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

#include "s2d/text_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "s2d/error.hpp"

namespace s2d {

std::string_view to_string(TextMetric metric) {
  switch (metric) {
    case TextMetric::Pass1: return "pass1";
    case TextMetric::BLEU: return "bleu";
    case TextMetric::ROUGE_L: return "rouge_l";
    case TextMetric::ChrF: return "chrf";
    case TextMetric::EditDist: return "ed";
    case TextMetric::CodeBLEU: return "codebleu";
    case TextMetric::RUBY: return "ruby";
  }
  return "?";
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(std::span<const std::string> toks, std::size_t n) {
  NgramCounts out;
  if (toks.size() < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++out[std::vector<std::string>(toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i + n))];
  }
  return out;
}

double brevity_penalty(std::size_t cand_len, std::size_t ref_len) {
  if (cand_len == 0) return 0.0;
  if (cand_len > ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
}

double smoothed_precision(double matches, double total) {
  return matches > 0.0 ? matches / total : 1.0 / (total + 1.0);
}

/// BLEU-4 where unigram matches are weighted per token by weight_of.
template <class WeightFn>
double bleu_core(std::span<const std::string> cand, std::span<const std::string> ref, WeightFn weight_of) {
  if (cand.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto c = ngrams(cand, n);
    const auto r = ngrams(ref, n);
    double matches = 0.0;
    double total = 0.0;
    for (const auto& [gram, count] : c) {
      const double w = n == 1 ? weight_of(gram.front()) : 1.0;
      const auto it = r.find(gram);
      const int clipped = it == r.end() ? 0 : std::min(count, it->second);
      matches += w * clipped;
      total += w * count;
    }
    log_sum += std::log(smoothed_precision(matches, total));
  }
  return brevity_penalty(cand.size(), ref.size()) * std::exp(log_sum / 4.0);
}

double clamp100(double v) { return std::clamp(v, 0.0, 100.0); }

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

bool is_space32(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' || c == 0x85 ||
         c == 0xa0 || c == 0x2028 || c == 0x2029 || c == 0x3000;
}

double f_beta(double p, double r, double beta) {
  const double b2 = beta * beta;
  const double denom = b2 * p + r;
  return denom > 0.0 ? (1.0 + b2) * p * r / denom : 0.0;
}

template <class T>
std::size_t multiset_intersection(std::vector<T> a, std::vector<T> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0, n = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv(std::uint64_t h, std::string_view s) {
  for (const unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  h ^= 0xff;  // separator
  h *= kFnvPrime;
  return h;
}

bool is_structural_ident(std::string_view s) {
  return s == "to" || s == "edge" || s == "node" || s == "at" || s == "of" || s == "coordinate";
}

std::uint64_t hash_node(const ParseNode& node, const std::vector<CodeToken>& toks,
                        std::vector<std::uint64_t>& out) {
  std::uint64_t h = fnv(kFnvOffset, to_string(node.kind));
  h = fnv(h, node.name);
  if (node.children.empty()) {
    for (std::size_t i = node.first_token; i < node.last_token; ++i) {
      const auto& t = toks[i];
      if (t.kind == TokenKind::Command || t.kind == TokenKind::Punct ||
          (t.kind == TokenKind::Ident && is_structural_ident(t.text))) {
        h = fnv(h, t.text);
      } else {
        h = fnv(h, to_string(t.kind));
      }
    }
  } else {
    for (const auto& c : node.children) {
      const auto ch = hash_node(c, toks, out);
      h = fnv(h, std::string_view(reinterpret_cast<const char*>(&ch), sizeof ch));
    }
  }
  out.push_back(h);
  return h;
}

double graph_f1(const NodeGraph& cand, const NodeGraph& ref) {
  if (cand.edges.empty() && ref.edges.empty()) return 100.0;
  if (cand.edges.empty() || ref.edges.empty()) return 0.0;
  std::vector<std::pair<std::string, std::string>> a, b;
  for (const auto& e : cand.edges) a.emplace_back(e.source, e.target);
  for (const auto& e : ref.edges) b.emplace_back(e.source, e.target);
  const auto m = static_cast<double>(multiset_intersection(a, b));
  return 100.0 * f_beta(m / static_cast<double>(a.size()), m / static_cast<double>(b.size()), 1.0);
}

double string_similarity(std::string_view a, std::string_view b) {
  const auto ua = decode_utf8(a);
  const auto ub = decode_utf8(b);
  const auto longest = std::max(ua.size(), ub.size());
  if (longest == 0) return 100.0;
  return 100.0 * (1.0 - static_cast<double>(levenshtein(ua, ub)) / static_cast<double>(longest));
}

}  // namespace

TextScore bleu(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (reference.empty()) throw Error(ErrorCode::EmptyReference, "BLEU reference is empty");
  return {TextMetric::BLEU, clamp100(100.0 * bleu_core(candidate, reference, [](const std::string&) { return 1.0; })),
          {}, {}};
}

TextScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (reference.empty()) throw Error(ErrorCode::EmptyReference, "ROUGE-L reference is empty");
  if (candidate.empty()) return {TextMetric::ROUGE_L, 0.0, {}, {}};
  const auto lcs = static_cast<double>(lcs_length(candidate, reference));
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return {TextMetric::ROUGE_L, clamp100(100.0 * f_beta(p, r, kRougeBeta)), {}, {}};
}

TextScore chrf(std::string_view candidate, std::string_view reference) {
  auto strip = [](std::string_view s) {
    auto u = decode_utf8(s);
    std::erase_if(u, is_space32);
    return u;
  };
  const auto ref = strip(reference);
  if (ref.empty()) throw Error(ErrorCode::EmptyReference, "chrF reference is empty");
  const auto cand = strip(candidate);
  double p_sum = 0.0, r_sum = 0.0;
  int orders = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    if (cand.size() < n || ref.size() < n) continue;
    std::unordered_map<std::u32string, int> cc, rc;
    for (std::size_t i = 0; i + n <= cand.size(); ++i) ++cc[cand.substr(i, n)];
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++rc[ref.substr(i, n)];
    double m = 0.0;
    for (const auto& [g, c] : cc) {
      const auto it = rc.find(g);
      if (it != rc.end()) m += std::min(c, it->second);
    }
    p_sum += m / static_cast<double>(cand.size() - n + 1);
    r_sum += m / static_cast<double>(ref.size() - n + 1);
    ++orders;
  }
  if (orders == 0) return {TextMetric::ChrF, 0.0, {}, {}};
  return {TextMetric::ChrF, clamp100(100.0 * f_beta(p_sum / orders, r_sum / orders, 2.0)), {}, {}};
}

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c & 0xe0) == 0xc0) {
      len = 2;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      len = 3;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      len = 4;
      cp = c & 0x07;
    }
    bool ok = len > 0 && i + len <= text.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xc0) != 0x80) ok = false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    if (ok) {
      out.push_back(cp);
      i += len;
    } else {
      out.push_back(0xfffd);
      ++i;
    }
  }
  return out;
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

TextScore edit_distance(std::string_view candidate, std::string_view reference) {
  const auto c = decode_utf8(candidate);
  const auto r = decode_utf8(reference);
  if (c.empty() && r.empty()) throw Error(ErrorCode::BothEmpty, "edit distance of two empty strings");
  const auto d = static_cast<double>(levenshtein(c, r));
  return {TextMetric::EditDist, clamp100(100.0 * d / static_cast<double>(std::max(c.size(), r.size()))), {}, {}};
}

std::vector<std::string> token_texts(const DiagramCode& code) {
  std::vector<std::string> out;
  out.reserve(code.tokens().size());
  for (const auto& t : code.tokens()) out.push_back(t.text);
  return out;
}

std::string strip_comments(const DiagramCode& code) {
  const auto& src = code.source();
  std::string out;
  out.reserve(src.size());
  auto copy_gap = [&](std::size_t from, std::size_t to) {
    for (std::size_t i = from; i < to; ++i) {
      if (src[i] == '%') {
        while (i < to && src[i] != '\n') ++i;
        if (i < to) out += '\n';
      } else {
        out += src[i];
      }
    }
  };
  std::size_t cursor = 0;
  for (const auto& t : code.tokens()) {
    copy_gap(cursor, t.span.begin);
    out.append(src, t.span.begin, t.span.size());
    cursor = t.span.end;
  }
  copy_gap(cursor, src.size());
  return out;
}

std::vector<std::uint64_t> subtree_hashes(const ParseTree& tree) {
  std::vector<std::uint64_t> out;
  for (const auto& c : tree.root.children) hash_node(c, tree.tokens, out);
  return out;
}

TextScore codebleu(const DiagramCode& candidate, const DiagramCode& reference) {
  const auto ref_toks = token_texts(reference);
  if (ref_toks.empty()) throw Error(ErrorCode::EmptyReference, "CodeBLEU reference has no tokens");
  const auto cand_toks = token_texts(candidate);

  std::unordered_map<std::string, double> weights;
  for (const auto* code : {&candidate, &reference}) {
    for (const auto& t : code->tokens()) {
      if (t.kind == TokenKind::Command) weights[t.text] = kCommandWeight;
    }
  }
  const double b = clamp100(100.0 * bleu_core(cand_toks, ref_toks, [](const std::string&) { return 1.0; }));
  const double w = clamp100(100.0 * bleu_core(cand_toks, ref_toks, [&](const std::string& tok) {
    const auto it = weights.find(tok);
    return it == weights.end() ? 1.0 : it->second;
  }));

  double ast = b;
  double graph = b;
  const auto pc = parse(candidate);
  const auto pr = parse(reference);
  if (pc.ok() && pr.ok()) {
    const auto hc = subtree_hashes(pc.tree);
    const auto hr = subtree_hashes(pr.tree);
    if (hr.empty()) {
      ast = hc.empty() ? 100.0 : 0.0;
    } else {
      ast = 100.0 * static_cast<double>(multiset_intersection(hc, hr)) / static_cast<double>(hr.size());
    }
    graph = graph_f1(extract_node_graph(pc.tree), extract_node_graph(pr.tree));
  }
  TextScore s{TextMetric::CodeBLEU, 0.0, {}, {}};
  s.components = {{"bleu", b}, {"weighted_ngram", w}, {"ast_match", ast}, {"graph_match", graph}};
  s.value = 0.25 * (b + w + ast + graph);
  return s;
}

TextScore ruby(const DiagramCode& candidate, const DiagramCode& reference) {
  if (reference.source().empty()) throw Error(ErrorCode::EmptyReference, "RUBY reference is empty");
  const auto pc = parse(candidate);
  const auto pr = parse(reference);
  TextScore s{TextMetric::RUBY, 0.0, {}, {}};
  if (pc.ok() && pr.ok()) {
    const auto gc = extract_node_graph(pc.tree);
    const auto gr = extract_node_graph(pr.tree);
    if (!gc.empty() && !gr.empty()) {
      // Graph edit distance with unit costs: vertex insert/delete/relabel by
      // id, edge insert/delete by endpoint pair.
      double ops = 0.0;
      for (const auto& v : gc.vertices) {
        const auto* other = gr.find(v.id);
        if (other == nullptr || other->label != v.label) ops += 1.0;
      }
      for (const auto& v : gr.vertices) {
        if (gc.find(v.id) == nullptr) ops += 1.0;
      }
      std::vector<std::pair<std::string, std::string>> ec, er;
      for (const auto& e : gc.edges) ec.emplace_back(e.source, e.target);
      for (const auto& e : gr.edges) er.emplace_back(e.source, e.target);
      const auto common = multiset_intersection(ec, er);
      ops += static_cast<double>(ec.size() - common + er.size() - common);
      const auto size = static_cast<double>(
          std::max(gc.vertices.size() + gc.edges.size(), gr.vertices.size() + gr.edges.size()));
      s.value = clamp100(100.0 * (1.0 - ops / size));
      s.tier = "graph";
      return s;
    }
    const auto hc = subtree_hashes(pc.tree);
    const auto hr = subtree_hashes(pr.tree);
    const auto inter = multiset_intersection(hc, hr);
    const auto uni = hc.size() + hr.size() - inter;
    s.value = uni == 0 ? 100.0 : clamp100(100.0 * static_cast<double>(inter) / static_cast<double>(uni));
    s.tier = "tree";
    return s;
  }
  s.value = clamp100(string_similarity(strip_comments(candidate), strip_comments(reference)));
  s.tier = "string";
  return s;
}

TextScore pass_at_1(std::span<const CompileStatus> results) {
  if (results.empty()) throw Error(ErrorCode::EmptyInput, "Pass@1 needs at least one result");
  std::size_t ok = 0;
  for (const auto r : results) {
    if (r == CompileStatus::Skipped) {
      throw Error(ErrorCode::Precondition, "Skipped results must be excluded before Pass@1");
    }
    if (r == CompileStatus::Success) ++ok;
  }
  return {TextMetric::Pass1, 100.0 * static_cast<double>(ok) / static_cast<double>(results.size()), {}, {}};
}

}  // namespace s2d
