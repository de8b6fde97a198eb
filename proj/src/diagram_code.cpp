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

#include "s2d/diagram_code.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <functional>
#include <set>
#include <unordered_set>

namespace s2d {

std::string_view to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::Command: return "Command";
    case TokenKind::BeginEnv: return "BeginEnv";
    case TokenKind::EndEnv: return "EndEnv";
    case TokenKind::Ident: return "Ident";
    case TokenKind::Number: return "Number";
    case TokenKind::Punct: return "Punct";
    case TokenKind::OptionBlock: return "OptionBlock";
    case TokenKind::TextBlock: return "TextBlock";
  }
  return "?";
}

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Document: return "Document";
    case NodeKind::Env: return "Env";
    case NodeKind::Group: return "Group";
    case NodeKind::NodeDecl: return "NodeDecl";
    case NodeKind::EdgeDecl: return "EdgeDecl";
    case NodeKind::Raw: return "Raw";
  }
  return "?";
}

std::string_view to_string(DiagnosticKind kind) {
  switch (kind) {
    case DiagnosticKind::BraceMismatch: return "BraceMismatch";
    case DiagnosticKind::EnvMismatch: return "EnvMismatch";
    case DiagnosticKind::UnterminatedStatement: return "UnterminatedStatement";
  }
  return "?";
}

namespace {

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
bool is_alpha(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_ident_start(unsigned char c) { return is_alpha(c) || c == '_' || c == '@' || c >= 0x80; }
bool is_ident_char(unsigned char c) { return is_ident_start(c) || is_digit(c) || c == '.'; }

std::size_t utf8_length(unsigned char lead) {
  if (lead >= 0xf0) return 4;
  if (lead >= 0xe0) return 3;
  if (lead >= 0xc0) return 2;
  return 1;
}

constexpr std::array<std::string_view, 8> kMultiPunct = {"<->", "--", "->", "<-", "|-", "-|", "++", ".."};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<CodeToken> run() {
    while (pos_ < src_.size()) {
      const auto c = static_cast<unsigned char>(src_[pos_]);
      if (is_space(c)) {
        ++pos_;
      } else if (c == '%') {
        skip_comment();
      } else if (c == '\\') {
        lex_backslash();
      } else if (c == '[') {
        lex_block('[', ']', TokenKind::OptionBlock);
      } else if (c == '{' && in_argument_position()) {
        lex_block('{', '}', TokenKind::TextBlock);
      } else if (is_digit(c) || (c == '.' && pos_ + 1 < src_.size() && is_digit(src_[pos_ + 1]))) {
        lex_number();
      } else if (is_ident_start(c)) {
        const auto start = pos_;
        while (pos_ < src_.size() && is_ident_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        emit(TokenKind::Ident, start);
      } else {
        lex_punct();
      }
    }
    return std::move(out_);
  }

 private:
  void emit(TokenKind kind, std::size_t start, bool closed = true) {
    out_.push_back({kind, std::string(src_.substr(start, pos_ - start)), {start, pos_}, closed});
  }

  void skip_comment() {
    while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
  }

  bool in_argument_position() const {
    if (out_.empty()) return false;
    const auto& prev = out_.back();
    switch (prev.kind) {
      case TokenKind::BeginEnv:
      case TokenKind::EndEnv:
        return false;
      case TokenKind::Punct:
        return prev.text == ")";
      default:
        return true;
    }
  }

  void lex_backslash() {
    const auto start = pos_;
    ++pos_;
    if (pos_ >= src_.size()) {
      emit(TokenKind::Command, start);
      return;
    }
    const auto c = static_cast<unsigned char>(src_[pos_]);
    if (!is_alpha(c)) {
      pos_ = std::min(src_.size(), pos_ + utf8_length(c));
      emit(TokenKind::Command, start);
      return;
    }
    while (pos_ < src_.size() && is_alpha(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    const auto name = src_.substr(start, pos_ - start);
    if ((name == "\\begin" || name == "\\end") && pos_ < src_.size() && src_[pos_] == '{') {
      const auto close = src_.find('}', pos_);
      const auto newline = src_.find('\n', pos_);
      if (close != std::string_view::npos && (newline == std::string_view::npos || close < newline)) {
        pos_ = close + 1;
        emit(name == "\\begin" ? TokenKind::BeginEnv : TokenKind::EndEnv, start);
        return;
      }
    }
    emit(TokenKind::Command, start);
  }

  void lex_block(char open, char close, TokenKind kind) {
    const auto start = pos_;
    int depth = 0;
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '\\') {
        pos_ = std::min(src_.size(), pos_ + 2);
        continue;
      }
      if (c == '%') {
        skip_comment();
        continue;
      }
      ++pos_;
      if (c == open) {
        ++depth;
      } else if (c == close) {
        if (--depth == 0) {
          emit(kind, start);
          return;
        }
      }
    }
    emit(kind, start, false);
  }

  void lex_number() {
    const auto start = pos_;
    while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
    }
    emit(TokenKind::Number, start);
  }

  void lex_punct() {
    const auto start = pos_;
    for (const auto p : kMultiPunct) {
      if (src_.substr(pos_, p.size()) == p) {
        pos_ += p.size();
        emit(TokenKind::Punct, start);
        return;
      }
    }
    ++pos_;
    emit(TokenKind::Punct, start);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::vector<CodeToken> out_;
};

}  // namespace

std::vector<CodeToken> tokenize(std::string_view source) { return Lexer(source).run(); }

std::string join_tokens(std::span<const CodeToken> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += tokens[i].text;
  }
  return out;
}

DiagramCode::DiagramCode(std::string source, Language language)
    : source_(std::move(source)), language_(language), tokens_(tokenize(source_)) {}

// ---------------------------------------------------------------------------
// Parser

namespace {

const std::set<std::string, std::less<>> kNodeCommands = {"\\node", "\\coordinate"};
const std::set<std::string, std::less<>> kPathCommands = {
    "\\draw", "\\path", "\\fill", "\\filldraw", "\\shade", "\\shadedraw", "\\clip", "\\pic", "\\matrix"};

std::string env_name(const CodeToken& tok) {
  const auto open = tok.text.find('{');
  if (open == std::string::npos) return {};
  return tok.text.substr(open + 1, tok.text.size() - open - 2);
}

bool is_tikz_env(std::string_view name) { return name == "tikzpicture"; }

bool is_punct(const CodeToken& tok, std::string_view text) {
  return tok.kind == TokenKind::Punct && tok.text == text;
}

enum class Closer { None, Env, Group };

class Parser {
 public:
  Parser(const std::vector<CodeToken>& toks, std::vector<Diagnostic>& diags)
      : toks_(toks), diags_(diags) {}

  std::vector<ParseNode> sequence(bool tikz, Closer closer) {
    std::vector<ParseNode> out;
    while (pos_ < toks_.size()) {
      const auto& tok = toks_[pos_];
      if (tok.kind == TokenKind::EndEnv) {
        if (closer != Closer::None) return out;
        diag(DiagnosticKind::EnvMismatch, tok.span.begin, "\\end{" + env_name(tok) + "} without matching \\begin");
        out.push_back(leaf(NodeKind::Raw, tok.text));
        continue;
      }
      if (is_punct(tok, "}")) {
        if (closer == Closer::Group) return out;
        diag(DiagnosticKind::BraceMismatch, tok.span.begin, "unmatched '}'");
        out.push_back(leaf(NodeKind::Raw, tok.text));
        continue;
      }
      out.push_back(statement(tikz));
    }
    return out;
  }

 private:
  void diag(DiagnosticKind kind, std::size_t offset, std::string message) {
    diags_.push_back({kind, offset, std::move(message)});
  }

  ParseNode leaf(NodeKind kind, std::string name) {
    ParseNode n;
    n.kind = kind;
    n.name = std::move(name);
    n.first_token = pos_;
    n.last_token = pos_ + 1;
    n.span = toks_[pos_].span;
    ++pos_;
    return n;
  }

  void close_span(ParseNode& n) {
    n.last_token = pos_;
    n.span = {toks_[n.first_token].span.begin, toks_[pos_ - 1].span.end};
  }

  ParseNode statement(bool tikz) {
    const auto& tok = toks_[pos_];
    if (tok.kind == TokenKind::BeginEnv) return environment(tikz);
    if (is_punct(tok, "{")) return group(tikz);
    if (tikz && tok.kind == TokenKind::Command) {
      if (kNodeCommands.contains(tok.text)) return terminated(NodeKind::NodeDecl);
      if (kPathCommands.contains(tok.text)) return terminated(NodeKind::EdgeDecl);
    }
    if (tok.kind == TokenKind::Command) return raw_command();
    if (is_punct(tok, "]")) {
      diag(DiagnosticKind::BraceMismatch, tok.span.begin, "unmatched ']'");
      return leaf(NodeKind::Raw, tok.text);
    }
    if (tikz) return leaf(NodeKind::Raw, {});
    return raw_run();
  }

  ParseNode environment(bool tikz) {
    const auto& open = toks_[pos_];
    const auto name = env_name(open);
    ParseNode n;
    n.kind = NodeKind::Env;
    n.name = name;
    n.first_token = pos_;
    ++pos_;
    n.children = sequence(tikz || is_tikz_env(name), Closer::Env);
    if (pos_ >= toks_.size()) {
      diag(DiagnosticKind::EnvMismatch, open.span.begin, "\\begin{" + name + "} is never closed");
    } else {
      const auto& close = toks_[pos_];
      if (env_name(close) != name) {
        diag(DiagnosticKind::EnvMismatch, close.span.begin,
             "\\begin{" + name + "} closed by \\end{" + env_name(close) + "}");
      }
      ++pos_;
    }
    close_span(n);
    return n;
  }

  ParseNode group(bool tikz) {
    const auto& open = toks_[pos_];
    ParseNode n;
    n.kind = NodeKind::Group;
    n.first_token = pos_;
    ++pos_;
    n.children = sequence(tikz, Closer::Group);
    if (pos_ < toks_.size() && is_punct(toks_[pos_], "}")) {
      ++pos_;
    } else {
      diag(DiagnosticKind::BraceMismatch, open.span.begin, "unmatched '{'");
    }
    close_span(n);
    return n;
  }

  ParseNode terminated(NodeKind kind) {
    const auto& head = toks_[pos_];
    ParseNode n;
    n.kind = kind;
    n.name = head.text;
    n.first_token = pos_;
    ++pos_;
    int depth = 0;
    while (pos_ < toks_.size()) {
      const auto& tok = toks_[pos_];
      if (is_punct(tok, ";") && depth == 0) {
        ++pos_;
        close_span(n);
        return n;
      }
      if (tok.kind == TokenKind::BeginEnv || tok.kind == TokenKind::EndEnv) break;
      if (is_punct(tok, "{")) {
        ++depth;
      } else if (is_punct(tok, "}")) {
        if (depth == 0) break;
        --depth;
      }
      if (tok.kind == TokenKind::Command &&
          (kNodeCommands.contains(tok.text) || kPathCommands.contains(tok.text))) {
        break;
      }
      ++pos_;
    }
    diag(DiagnosticKind::UnterminatedStatement, head.span.begin, head.text + " statement is missing ';'");
    close_span(n);
    return n;
  }

  ParseNode raw_command() {
    ParseNode n;
    n.kind = NodeKind::Raw;
    n.name = toks_[pos_].text;
    n.first_token = pos_;
    ++pos_;
    while (pos_ < toks_.size() &&
           (toks_[pos_].kind == TokenKind::OptionBlock || toks_[pos_].kind == TokenKind::TextBlock)) {
      ++pos_;
    }
    close_span(n);
    return n;
  }

  ParseNode raw_run() {
    ParseNode n;
    n.kind = NodeKind::Raw;
    n.first_token = pos_;
    ++pos_;
    while (pos_ < toks_.size()) {
      const auto& tok = toks_[pos_];
      if (tok.kind == TokenKind::Command || tok.kind == TokenKind::BeginEnv ||
          tok.kind == TokenKind::EndEnv || is_punct(tok, "{") || is_punct(tok, "}") || is_punct(tok, "]")) {
        break;
      }
      ++pos_;
    }
    close_span(n);
    return n;
  }

  const std::vector<CodeToken>& toks_;
  std::vector<Diagnostic>& diags_;
  std::size_t pos_ = 0;
};

}  // namespace

ParseResult parse(const DiagramCode& code) {
  ParseResult result;
  result.tree.source = code.source();
  result.tree.tokens = code.tokens();
  for (const auto& tok : result.tree.tokens) {
    if (!tok.closed) {
      result.diagnostics.push_back({DiagnosticKind::BraceMismatch, tok.span.begin,
                                    tok.kind == TokenKind::TextBlock ? "unbalanced '{' in text block"
                                                                     : "unbalanced '[' in option block"});
    }
  }
  Parser parser(result.tree.tokens, result.diagnostics);
  auto& root = result.tree.root;
  root.kind = NodeKind::Document;
  root.span = {0, code.source().size()};
  root.first_token = 0;
  root.last_token = result.tree.tokens.size();
  root.children = parser.sequence(false, Closer::None);
  std::stable_sort(result.diagnostics.begin(), result.diagnostics.end(),
                   [](const Diagnostic& a, const Diagnostic& b) { return a.offset < b.offset; });
  return result;
}

namespace {

void unparse_into(const ParseNode& node, std::string_view src, std::string& out) {
  std::size_t cursor = node.span.begin;
  for (const auto& child : node.children) {
    out.append(src.substr(cursor, child.span.begin - cursor));
    unparse_into(child, src, out);
    cursor = child.span.end;
  }
  out.append(src.substr(cursor, node.span.end - cursor));
}

}  // namespace

std::string unparse(const ParseTree& tree) {
  std::string out;
  unparse_into(tree.root, tree.source, out);
  return out;
}

// ---------------------------------------------------------------------------
// Node graph

const Vertex* NodeGraph::find(std::string_view id) const {
  for (const auto& v : vertices) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

namespace {

struct Endpoint {
  std::optional<std::string> ref;
  std::optional<std::pair<double, double>> point;
};

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string block_inner(const CodeToken& tok) {
  if (tok.text.size() < 2) return {};
  return trim(std::string_view(tok.text).substr(1, tok.text.size() - (tok.closed ? 2 : 1)));
}

std::optional<double> parse_length(std::span<const CodeToken> toks) {
  // [-] number [unit]
  std::size_t i = 0;
  double sign = 1.0;
  if (i < toks.size() && is_punct(toks[i], "-")) {
    sign = -1.0;
    ++i;
  }
  if (i >= toks.size() || toks[i].kind != TokenKind::Number) return std::nullopt;
  double v = 0.0;
  const auto& t = toks[i].text;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc()) return std::nullopt;
  ++i;
  if (i < toks.size()) {
    if (toks[i].kind != TokenKind::Ident || i + 1 != toks.size()) return std::nullopt;
    const auto& unit = toks[i].text;
    if (unit == "mm") v /= 10.0;
    else if (unit == "pt") v /= 28.45;
    else if (unit == "in") v *= 2.54;
    else if (unit != "cm") return std::nullopt;
  }
  return sign * v;
}

/// Interprets the tokens strictly between a '(' and its matching ')'.
Endpoint classify_coordinate(std::span<const CodeToken> inner, std::string_view src) {
  Endpoint ep;
  if (inner.empty()) return ep;
  std::size_t comma = inner.size();
  for (std::size_t i = 0; i < inner.size(); ++i) {
    if (is_punct(inner[i], ",")) {
      comma = i;
      break;
    }
    if (is_punct(inner[i], ":")) return ep;
  }
  if (comma == inner.size()) {
    if (inner.size() == 1 && inner[0].kind == TokenKind::Ident) {
      const auto& t = inner[0].text;
      ep.ref = t.substr(0, t.find('.'));
    } else {
      ep.ref = trim(src.substr(inner.front().span.begin, inner.back().span.end - inner.front().span.begin));
    }
    if (ep.ref->empty()) ep.ref.reset();
    return ep;
  }
  const auto x = parse_length(inner.subspan(0, comma));
  const auto y = parse_length(inner.subspan(comma + 1));
  if (x && y) ep.point = std::make_pair(*x, *y);
  return ep;
}

/// Finds the ')' matching the '(' at index open, or npos.
std::size_t match_paren(std::span<const CodeToken> toks, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < toks.size(); ++i) {
    if (is_punct(toks[i], "(")) ++depth;
    if (is_punct(toks[i], ")") && --depth == 0) return i;
  }
  return std::string::npos;
}

bool is_edge_operator(const CodeToken& tok) {
  if (tok.kind == TokenKind::Punct) {
    return tok.text == "--" || tok.text == "->" || tok.text == "|-" || tok.text == "-|";
  }
  return tok.kind == TokenKind::Ident && (tok.text == "to" || tok.text == "edge");
}

struct GraphBuilder {
  std::string_view src;
  NodeGraph graph;
  std::vector<Segment> segments;
  std::vector<std::string> refs;

  void declare(std::string id, std::string label, std::optional<std::pair<double, double>> pos) {
    if (graph.find(id) != nullptr) return;
    graph.vertices.push_back({std::move(id), std::move(label), pos});
  }

  /// Parses `[opts] (id) at (x,y) {label}` after a node keyword; returns the
  /// index after the consumed tokens.
  std::size_t node_spec(std::span<const CodeToken> toks, std::size_t i, bool require_label) {
    std::optional<std::string> id;
    std::optional<std::pair<double, double>> pos;
    std::string label;
    bool have_label = false;
    while (i < toks.size()) {
      const auto& t = toks[i];
      if (t.kind == TokenKind::OptionBlock) {
        ++i;
      } else if (t.kind == TokenKind::Ident && t.text == "at" && i + 1 < toks.size() &&
                 is_punct(toks[i + 1], "(")) {
        const auto close = match_paren(toks, i + 1);
        if (close == std::string::npos) return toks.size();
        pos = classify_coordinate(toks.subspan(i + 2, close - i - 2), src).point;
        i = close + 1;
      } else if (is_punct(t, "(") && !id) {
        const auto close = match_paren(toks, i);
        if (close == std::string::npos) return toks.size();
        id = classify_coordinate(toks.subspan(i + 1, close - i - 1), src).ref;
        i = close + 1;
      } else if (t.kind == TokenKind::TextBlock) {
        label = block_inner(t);
        have_label = true;
        ++i;
        break;
      } else {
        break;
      }
    }
    if (id && (have_label || !require_label)) declare(*id, label, pos);
    return i;
  }

  void node_statement(std::span<const CodeToken> toks) { node_spec(toks, 1, false); }

  void path_statement(std::span<const CodeToken> toks) {
    std::string base_style;
    std::size_t i = 1;
    while (i < toks.size() && toks[i].kind == TokenKind::OptionBlock) {
      base_style += toks[i].text;
      ++i;
    }
    std::optional<Endpoint> current;
    std::optional<std::string> pending;  // operator text
    std::string op_style;
    while (i < toks.size()) {
      const auto& t = toks[i];
      if (is_edge_operator(t)) {
        pending = t.text;
        op_style.clear();
        ++i;
      } else if (t.kind == TokenKind::OptionBlock) {
        if (pending) op_style += t.text;
        ++i;
      } else if (t.kind == TokenKind::Ident && t.text == "node") {
        i = node_spec(toks, i + 1, true);
      } else if (is_punct(t, "(")) {
        const auto close = match_paren(toks, i);
        if (close == std::string::npos) return;
        const bool relative = i > 0 && (is_punct(toks[i - 1], "++") || is_punct(toks[i - 1], "+"));
        auto ep = classify_coordinate(toks.subspan(i + 1, close - i - 1), src);
        i = close + 1;
        if (relative) {
          if (current && current->point && ep.point) {
            ep.point = std::make_pair(current->point->first + ep.point->first,
                                      current->point->second + ep.point->second);
          } else {
            ep.point.reset();
          }
        }
        if (pending) {
          if (current && current->ref && ep.ref) {
            std::string style = base_style + op_style;
            graph.edges.push_back({*current->ref, *ep.ref, std::move(style)});
            refs.push_back(*current->ref);
            refs.push_back(*ep.ref);
          }
          if (current && current->point && ep.point) {
            segments.push_back({current->point->first, current->point->second, ep.point->first,
                                ep.point->second});
          }
          if (*pending != "edge") current = ep;
          pending.reset();
        } else {
          current = ep;
        }
      } else {
        ++i;
      }
    }
  }

  void walk(const ParseNode& node, const std::vector<CodeToken>& toks) {
    if (node.kind == NodeKind::NodeDecl || node.kind == NodeKind::EdgeDecl) {
      std::span<const CodeToken> stmt(toks.data() + node.first_token, node.last_token - node.first_token);
      if (node.kind == NodeKind::NodeDecl) {
        node_statement(stmt);
      } else {
        path_statement(stmt);
      }
      return;
    }
    for (const auto& c : node.children) walk(c, toks);
  }

  void finish() {
    std::unordered_set<std::string> seen;
    for (const auto& r : refs) {
      if (graph.find(r) == nullptr && seen.insert(r).second) graph.dangling_refs.push_back(r);
    }
  }
};

}  // namespace

NodeGraph extract_node_graph(const ParseTree& tree) {
  GraphBuilder b{tree.source, {}, {}, {}};
  b.walk(tree.root, tree.tokens);
  b.finish();
  return std::move(b.graph);
}

std::vector<Segment> extract_segments(const ParseTree& tree) {
  GraphBuilder b{tree.source, {}, {}, {}};
  b.walk(tree.root, tree.tokens);
  return std::move(b.segments);
}

std::vector<std::string> node_labels(const NodeGraph& graph) {
  std::vector<std::string> out;
  for (const auto& v : graph.vertices) {
    if (!v.label.empty()) out.push_back(v.label);
  }
  return out;
}

}  // namespace s2d
