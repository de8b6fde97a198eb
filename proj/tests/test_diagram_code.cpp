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

#include <random>

#include "s2d/diagram_code.hpp"
#include "test_util.hpp"

using namespace s2d;

namespace {

std::vector<std::pair<TokenKind, std::string>> Lex(std::string_view src) {
  std::vector<std::pair<TokenKind, std::string>> out;
  for (const auto& t : tokenize(src)) out.emplace_back(t.kind, t.text);
  return out;
}

ParseResult Parse(std::string src) { return parse(DiagramCode(std::move(src))); }

}  // namespace

TEST(Tokenize, EmptyInput) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, NodeStatement) {
  using K = TokenKind;
  const std::vector<std::pair<TokenKind, std::string>> want = {
      {K::Command, "\\node"}, {K::Punct, "("},  {K::Ident, "a"},      {K::Punct, ")"},
      {K::Ident, "at"},       {K::Punct, "("},  {K::Number, "0"},     {K::Punct, ","},
      {K::Number, "0"},       {K::Punct, ")"},  {K::TextBlock, "{A}"}, {K::Punct, ";"}};
  EXPECT_EQ(Lex("\\node (a) at (0,0) {A};"), want);
}

TEST(Tokenize, CommentsAreDropped) {
  const std::vector<std::pair<TokenKind, std::string>> want = {{TokenKind::Command, "\\draw"},
                                                               {TokenKind::Punct, ";"}};
  EXPECT_EQ(Lex("% comment\n\\draw;"), want);
}

TEST(Tokenize, EscapedPercentIsNotAComment) {
  const auto toks = Lex("50\\% done");
  ASSERT_EQ(toks.size(), 3u);
  EXPECT_EQ(toks[1].second, "\\%");
  EXPECT_EQ(toks[2].second, "done");
}

TEST(Tokenize, OptionAndTextBlocksAreSingleTokens) {
  const auto toks = Lex("\\draw[->, thick, color={red}] (a) -- (b) node[midway] {x {y}};");
  EXPECT_EQ(toks[1].first, TokenKind::OptionBlock);
  EXPECT_EQ(toks[1].second, "[->, thick, color={red}]");
  EXPECT_EQ(toks[5].second, "--");
  EXPECT_EQ(toks.back().second, ";");
  EXPECT_EQ(toks[toks.size() - 2].first, TokenKind::TextBlock);
  EXPECT_EQ(toks[toks.size() - 2].second, "{x {y}}");
}

TEST(Tokenize, EnvironmentMarkers) {
  const auto toks = Lex("\\begin{tikzpicture}[scale=2]\\end{tikzpicture}");
  ASSERT_EQ(toks.size(), 3u);
  EXPECT_EQ(toks[0].first, TokenKind::BeginEnv);
  EXPECT_EQ(toks[1].first, TokenKind::OptionBlock);
  EXPECT_EQ(toks[2].first, TokenKind::EndEnv);
}

TEST(Tokenize, BraceInStatementPositionIsPunct) {
  const auto toks = Lex("{ \\draw (a) -- (b); }");
  EXPECT_EQ(toks.front().first, TokenKind::Punct);
  EXPECT_EQ(toks.back().first, TokenKind::Punct);
}

TEST(Tokenize, UnterminatedBlockRunsToEnd) {
  const auto toks = tokenize("\\node {abc");
  ASSERT_EQ(toks.size(), 2u);
  EXPECT_EQ(toks[1].text, "{abc");
  EXPECT_FALSE(toks[1].closed);
}

TEST(Tokenize, SpansPartitionNonCommentBytes) {
  const std::string src = "\\node (a) {A}; % hi\n  \\draw (a)--(b);";
  const auto toks = tokenize(src);
  std::size_t cursor = 0;
  for (const auto& t : toks) {
    ASSERT_GE(t.span.begin, cursor);
    for (std::size_t i = cursor; i < t.span.begin; ++i) {
      const char c = src[i];
      const bool in_comment = src.rfind('%', i) != std::string::npos &&
                              src.find('\n', src.rfind('%', i)) >= i;
      EXPECT_TRUE(std::isspace(static_cast<unsigned char>(c)) || in_comment) << "byte " << i;
    }
    EXPECT_EQ(src.substr(t.span.begin, t.span.size()), t.text);
    cursor = t.span.end;
  }
}

TEST(Tokenize, RandomInputsAreTotalAndOrdered) {
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 2000; ++iter) {
    const auto src = testutil::random_tex_like(rng, 60);
    const auto toks = tokenize(src);
    std::size_t cursor = 0;
    for (const auto& t : toks) {
      ASSERT_LE(cursor, t.span.begin);
      ASSERT_LT(t.span.begin, t.span.end);
      ASSERT_LE(t.span.end, src.size());
      cursor = t.span.end;
    }
    EXPECT_EQ(tokenize(src), toks);
  }
}

TEST(Tokenize, JoinedTokensRetokenizeIdentically) {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 2000; ++iter) {
    const auto src = testutil::random_tex_like(rng, 80);
    const auto toks = tokenize(src);
    const auto again = tokenize(join_tokens(toks));
    ASSERT_EQ(again.size(), toks.size()) << src;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      ASSERT_EQ(again[i].kind, toks[i].kind) << src;
      ASSERT_EQ(again[i].text, toks[i].text) << src;
    }
  }
}

TEST(Parse, EnvWithOneNode) {
  const auto r = Parse("\\begin{tikzpicture}\\node (a) {A};\\end{tikzpicture}");
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r.tree.root.children.size(), 1u);
  const auto& env = r.tree.root.children[0];
  EXPECT_EQ(env.kind, NodeKind::Env);
  EXPECT_EQ(env.name, "tikzpicture");
  ASSERT_EQ(env.children.size(), 1u);
  EXPECT_EQ(env.children[0].kind, NodeKind::NodeDecl);
}

TEST(Parse, LoneBraceIsBraceMismatchAtZero) {
  const auto r = Parse("{");
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].kind, DiagnosticKind::BraceMismatch);
  EXPECT_EQ(r.diagnostics[0].offset, 0u);
}

TEST(Parse, MissingEndIsEnvMismatch) {
  const auto r = Parse("\\begin{tikzpicture}");
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.diagnostics[0].kind, DiagnosticKind::EnvMismatch);
}

TEST(Parse, WrongEndNameIsEnvMismatch) {
  const auto r = Parse("\\begin{tikzpicture}\\end{scope}");
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].kind, DiagnosticKind::EnvMismatch);
  EXPECT_EQ(r.diagnostics[0].offset, 19u);
}

TEST(Parse, MissingSemicolonIsUnterminated) {
  const auto r = Parse("\\begin{tikzpicture}\n\\node (a) {A}\n\\end{tikzpicture}");
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].kind, DiagnosticKind::UnterminatedStatement);
  EXPECT_EQ(r.diagnostics[0].offset, 20u);
}

TEST(Parse, UnknownCommandsBecomeRaw) {
  const auto r = Parse("\\documentclass{article}\\usepackage{tikz}Hello world");
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r.tree.root.children.size(), 3u);
  for (const auto& c : r.tree.root.children) EXPECT_EQ(c.kind, NodeKind::Raw);
}

TEST(Parse, ScopesAndGroupsNest) {
  const auto r = Parse(
      "\\begin{tikzpicture}\\begin{scope}[xshift=1cm]\\draw (0,0) -- (1,1);\\end{scope}"
      "{ \\node (b) {B}; }\\end{tikzpicture}");
  ASSERT_TRUE(r.ok());
  const auto& env = r.tree.root.children[0];
  ASSERT_EQ(env.children.size(), 2u);
  EXPECT_EQ(env.children[0].kind, NodeKind::Env);
  EXPECT_EQ(env.children[0].children[1].kind, NodeKind::EdgeDecl);
  EXPECT_EQ(env.children[1].kind, NodeKind::Group);
  EXPECT_EQ(env.children[1].children[0].kind, NodeKind::NodeDecl);
}

TEST(Parse, ChildSpansNestAndUnparseIsExact) {
  std::mt19937_64 rng(3);
  for (int iter = 0; iter < 2000; ++iter) {
    const auto src = testutil::random_tex_like(rng, 80);
    const auto r = Parse(src);
    EXPECT_EQ(unparse(r.tree), src);
    testutil::expect_nested(r.tree.root);
  }
}

TEST(NodeGraph, TwoNodesOneEdge) {
  const auto r = Parse(
      "\\begin{tikzpicture}\\node (a) {A};\\node (b) {B};\\draw (a) -- (b);\\end{tikzpicture}");
  const auto g = extract_node_graph(r.tree);
  ASSERT_EQ(g.vertices.size(), 2u);
  EXPECT_EQ(g.vertices[0].id, "a");
  EXPECT_EQ(g.vertices[0].label, "A");
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0].source, "a");
  EXPECT_EQ(g.edges[0].target, "b");
  EXPECT_TRUE(g.dangling_refs.empty());
}

TEST(NodeGraph, EmptyPicture) {
  const auto g = extract_node_graph(Parse("\\begin{tikzpicture}\\end{tikzpicture}").tree);
  EXPECT_TRUE(g.empty());
  EXPECT_TRUE(g.dangling_refs.empty());
}

TEST(NodeGraph, UndeclaredRefsAreDangling) {
  const auto g = extract_node_graph(Parse("\\begin{tikzpicture}\\draw (a) -- (b);\\end{tikzpicture}").tree);
  EXPECT_TRUE(g.vertices.empty());
  EXPECT_EQ(g.dangling_refs, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(g.edges.size(), 1u);
}

TEST(NodeGraph, ChainsEdgeAndToOperators) {
  const auto g = extract_node_graph(
      Parse("\\begin{tikzpicture}\\node (a) {};\\node (b) {};\\node (c) {};"
            "\\draw[->] (a) -- (b) to[bend left] (c);"
            "\\path (a) edge[red] (b) edge (c);"
            "\\draw (a.north) |- node[above] {lbl} (c.south);\\end{tikzpicture}")
          .tree);
  ASSERT_EQ(g.edges.size(), 5u);
  EXPECT_EQ(g.edges[0], (Edge{"a", "b", "[->]"}));
  EXPECT_EQ(g.edges[1], (Edge{"b", "c", "[->][bend left]"}));
  EXPECT_EQ(g.edges[2], (Edge{"a", "b", "[red]"}));
  EXPECT_EQ(g.edges[3], (Edge{"a", "c", ""}));
  EXPECT_EQ(g.edges[4], (Edge{"a", "c", ""}));
  EXPECT_TRUE(g.dangling_refs.empty());
}

TEST(NodeGraph, IdentifiersAreCaseSensitive) {
  const auto g = extract_node_graph(
      Parse("\\begin{tikzpicture}\\node (A) {};\\draw (A) -- (a);\\end{tikzpicture}").tree);
  EXPECT_EQ(g.dangling_refs, (std::vector<std::string>{"a"}));
}

TEST(NodeGraph, NodePositionsAreParsed) {
  const auto g = extract_node_graph(
      Parse("\\begin{tikzpicture}\\node[draw] (a) at (1.5,-2) {A};\\end{tikzpicture}").tree);
  ASSERT_EQ(g.vertices.size(), 1u);
  ASSERT_TRUE(g.vertices[0].position.has_value());
  EXPECT_DOUBLE_EQ(g.vertices[0].position->first, 1.5);
  EXPECT_DOUBLE_EQ(g.vertices[0].position->second, -2.0);
}

TEST(NodeGraph, EdgeCountEqualsOperatorCount) {
  std::mt19937_64 rng(5);
  for (int iter = 0; iter < 500; ++iter) {
    const auto doc = testutil::random_graph_doc(rng);
    const auto r = Parse(doc.source);
    ASSERT_TRUE(r.ok()) << doc.source;
    const auto g = extract_node_graph(r.tree);
    EXPECT_EQ(g.edges.size(), doc.operator_count) << doc.source;
    for (const auto& e : g.edges) {
      for (const auto& end : {e.source, e.target}) {
        const bool known = g.find(end) != nullptr ||
                           std::find(g.dangling_refs.begin(), g.dangling_refs.end(), end) !=
                               g.dangling_refs.end();
        EXPECT_TRUE(known) << end;
      }
    }
  }
}
