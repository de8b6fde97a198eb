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

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

/// Diagram source code model: tokenizer, TikZ-subset parser and the
/// node/edge graph that the similarity metrics and validators build on.
///
/// Recognized grammar (everything else parses as Raw statements):
///
///   document   := statement*
///   statement  := env | group | node-decl | path-decl | raw
///   env        := \begin{name} statement* \end{name}
///   group      := '{' statement* '}'            (statement position only)
///   node-decl  := (\node | \coordinate) ... ';' (inside tikzpicture/scope)
///   path-decl  := (\draw | \path | \fill | \filldraw | \shade | \shadedraw
///                  | \clip | \pic | \matrix) ... ';'
///
/// Path operators that create graph edges: `--`, `->`, `|-`, `-|`, `to`,
/// `edge`. Node identifiers are case-sensitive.
namespace s2d {

enum class Language { TikZ };

enum class TokenKind { Command, BeginEnv, EndEnv, Ident, Number, Punct, OptionBlock, TextBlock };

std::string_view to_string(TokenKind kind);

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  [[nodiscard]] std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct CodeToken {
  TokenKind kind = TokenKind::Punct;
  std::string text;
  Span span;
  // False for an option/text block that ran to end of input unbalanced.
  bool closed = true;

  friend bool operator==(const CodeToken&, const CodeToken&) = default;
};

/// Splits source into metric-oriented tokens. Total: never throws.
///
/// Comments (`%` to end of line, `\%` excluded) are dropped. A balanced
/// `[...]` is one OptionBlock. A balanced `{...}` following a command,
/// identifier, block or closing paren is one TextBlock; in statement position
/// (start of input, after `;`, braces or environment markers) `{` is a Punct.
[[nodiscard]] std::vector<CodeToken> tokenize(std::string_view source);

/// Joins token texts with single spaces. The result re-tokenizes to the same
/// kinds and texts.
[[nodiscard]] std::string join_tokens(std::span<const CodeToken> tokens);

class DiagramCode {
 public:
  DiagramCode() = default;
  explicit DiagramCode(std::string source, Language language = Language::TikZ);

  [[nodiscard]] const std::string& source() const noexcept { return source_; }
  [[nodiscard]] Language language() const noexcept { return language_; }
  [[nodiscard]] const std::vector<CodeToken>& tokens() const noexcept { return tokens_; }

  friend bool operator==(const DiagramCode& a, const DiagramCode& b) {
    return a.source_ == b.source_ && a.language_ == b.language_;
  }

 private:
  std::string source_;
  Language language_ = Language::TikZ;
  std::vector<CodeToken> tokens_;
};

enum class NodeKind { Document, Env, Group, NodeDecl, EdgeDecl, Raw };

std::string_view to_string(NodeKind kind);

struct ParseNode {
  NodeKind kind = NodeKind::Raw;
  Span span;
  // Half-open token index range covered by this node.
  std::size_t first_token = 0;
  std::size_t last_token = 0;
  // Environment name for Env, leading command for declarations and Raw.
  std::string name;
  std::vector<ParseNode> children;
};

struct ParseTree {
  std::string source;
  std::vector<CodeToken> tokens;
  ParseNode root;
};

enum class DiagnosticKind { BraceMismatch, EnvMismatch, UnterminatedStatement };

std::string_view to_string(DiagnosticKind kind);

struct Diagnostic {
  DiagnosticKind kind = DiagnosticKind::BraceMismatch;
  std::size_t offset = 0;
  std::string message;
};

struct ParseResult {
  ParseTree tree;
  std::vector<Diagnostic> diagnostics;

  [[nodiscard]] bool ok() const noexcept { return diagnostics.empty(); }
};

/// Never throws. The tree is always populated (best effort on errors); the
/// parse counts as successful only when diagnostics are empty.
[[nodiscard]] ParseResult parse(const DiagramCode& code);

/// Rebuilds source text from the tree spans and the gaps between them.
[[nodiscard]] std::string unparse(const ParseTree& tree);

struct Vertex {
  std::string id;
  std::string label;
  std::optional<std::pair<double, double>> position;

  friend bool operator==(const Vertex&, const Vertex&) = default;
};

struct Edge {
  std::string source;
  std::string target;
  std::string style;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct NodeGraph {
  std::vector<Vertex> vertices;
  std::vector<Edge> edges;
  std::vector<std::string> dangling_refs;

  [[nodiscard]] bool empty() const noexcept { return vertices.empty() && edges.empty(); }
  [[nodiscard]] const Vertex* find(std::string_view id) const;
};

[[nodiscard]] NodeGraph extract_node_graph(const ParseTree& tree);

/// Straight segments between numeric coordinates found in path statements,
/// in TikZ units. Used by the preview renderer.
struct Segment {
  double x0, y0, x1, y1;
};
[[nodiscard]] std::vector<Segment> extract_segments(const ParseTree& tree);

/// Labels of all vertices with non-empty label text.
[[nodiscard]] std::vector<std::string> node_labels(const NodeGraph& graph);

}  // namespace s2d
