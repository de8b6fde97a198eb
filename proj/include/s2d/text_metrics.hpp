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

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "s2d/diagram_code.hpp"
#include "s2d/verify.hpp"

/// Code-similarity metrics. Every score is on a 0-100 scale; edit distance is
/// the only one where lower is better.
namespace s2d {

enum class TextMetric { Pass1, BLEU, ROUGE_L, ChrF, EditDist, CodeBLEU, RUBY };

std::string_view to_string(TextMetric metric);

struct TextScore {
  TextMetric metric = TextMetric::BLEU;
  double value = 0.0;
  // CodeBLEU sub-scores ("bleu", "weighted_ngram", "ast_match", "graph_match").
  std::map<std::string, double> components;
  // RUBY tier actually used: "graph", "tree" or "string".
  std::string tier;
};

/// Sentence BLEU-4, uniform weights, brevity penalty. An order with zero
/// clipped matches uses the add-one precision 1 / (t + 1), where t is the
/// number of candidate n-grams of that order.
[[nodiscard]] TextScore bleu(std::span<const std::string> candidate, std::span<const std::string> reference);

inline constexpr double kRougeBeta = 1.2;

/// LCS F-measure, F = (1 + b^2) P R / (R + b^2 P) with b = 1.2.
[[nodiscard]] TextScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);

/// Character n-gram F-score over code points, orders 1..6, beta 2, whitespace
/// removed. Precision and recall are averaged over the orders for which both
/// sides have at least one n-gram, then combined.
[[nodiscard]] TextScore chrf(std::string_view candidate, std::string_view reference);

/// 100 * Levenshtein / max length, over code points.
[[nodiscard]] TextScore edit_distance(std::string_view candidate, std::string_view reference);

[[nodiscard]] std::size_t levenshtein(std::u32string_view a, std::u32string_view b);

/// Decodes UTF-8; invalid bytes map to U+FFFD.
[[nodiscard]] std::u32string decode_utf8(std::string_view text);

/// 0.25 * (BLEU + keyword-weighted n-gram + parse-subtree match + node-graph
/// edge F1). When either side fails to parse, the subtree and graph components
/// take the BLEU component's value.
[[nodiscard]] TextScore codebleu(const DiagramCode& candidate, const DiagramCode& reference);

inline constexpr double kCommandWeight = 4.0;

/// Tiered similarity: node graph, then parse tree, then string.
[[nodiscard]] TextScore ruby(const DiagramCode& candidate, const DiagramCode& reference);

/// 100 * successes / n. Skipped entries must be filtered out by the caller.
[[nodiscard]] TextScore pass_at_1(std::span<const CompileStatus> results);

/// Token texts of the comment-free token stream.
[[nodiscard]] std::vector<std::string> token_texts(const DiagramCode& code);

/// Source with comments removed and all other bytes preserved.
[[nodiscard]] std::string strip_comments(const DiagramCode& code);

/// Hashes of every statement-level subtree below the document root. Leaf
/// identifiers, numbers and labels do not contribute; commands and token kinds do.
[[nodiscard]] std::vector<std::uint64_t> subtree_hashes(const ParseTree& tree);

}  // namespace s2d
