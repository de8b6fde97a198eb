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

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "s2d/agents.hpp"
#include "s2d/raster.hpp"
#include "s2d/verify.hpp"

namespace s2d {

inline constexpr int kDatasetWidth = 800;
inline constexpr int kDatasetHeight = 600;
inline constexpr int kCropThreshold = 250;
inline constexpr int kCropMargin = 4;

/// Bounding box of pixels with luma below `threshold`, grown by `margin` on
/// every side (white where it leaves the image). All-white input gives 1x1 white.
[[nodiscard]] Raster crop_whitespace(const Raster& img, int threshold = kCropThreshold, int margin = kCropMargin);

/// Scales to fit 800x600 keeping aspect ratio (area averaging when shrinking,
/// bilinear when growing), then pads with white, centered.
[[nodiscard]] Raster normalize_size(const Raster& img, int width = kDatasetWidth, int height = kDatasetHeight);

/// Luma, then a global Otsu threshold clamped to [64, 200]: darker pixels
/// become black, the rest white.
[[nodiscard]] Raster sketchify(const Raster& img);

enum class Category {
  Flowchart,
  DirectedGraph,
  UndirectedGraph,
  ModelArchitecture,
  MindMap,
  Tree,
  StateMachine,
  Other,
  Unknown
};

std::string_view to_string(Category c);
/// Unrecognized names map to Unknown.
Category category_from_string(std::string_view text);

enum class QueryKind { S2C, C2C };

std::string_view to_string(QueryKind k);

enum class InspectionStatus { Unreviewed, Passed, Rejected };

struct Inspection {
  InspectionStatus status = InspectionStatus::Unreviewed;
  std::string reason;
};

struct QueryRecord {
  std::string id;
  QueryKind kind = QueryKind::S2C;
  std::string query;
  std::optional<std::string> image_path;  // S2C only
  std::string answer;
  Category category = Category::Unknown;
  std::string provenance;
  Inspection inspection;
};

[[nodiscard]] nlohmann::json to_json(const QueryRecord& r);
[[nodiscard]] QueryRecord query_record_from_json(const nlohmann::json& j);

/// Unified line diff rendered as edit bullets. Blank lines and surrounding
/// whitespace are ignored. A removed and an added node declaration with the
/// same id become one bullet; when only the label differs it reads
/// "Set the label of node (id) to "...".".
[[nodiscard]] std::vector<std::string> edit_instructions(std::string_view sketch_code,
                                                         std::string_view original_code);

/// S2C and C2C records for one source diagram. Both answers are the
/// original code; the C2C query embeds the sketch code without fences.
/// Throws EmptyCode when either code is blank.
[[nodiscard]] std::pair<QueryRecord, QueryRecord> build_queries(std::string_view sketch_code,
                                                                std::string_view original_code,
                                                                const std::string& image_path);

/// Offline sketch code: the original with every option block inside a node
/// or path statement removed (colors, styles, arrow tips).
[[nodiscard]] std::string degrade_code(const DiagramCode& original);

/// Words are runs of letters, digits, '_' or non-ASCII bytes; every other
/// non-space character is a token of its own.
[[nodiscard]] std::size_t count_tokens(std::string_view text);

struct LengthStats {
  std::size_t min = 0, max = 0;
  double avg = 0.0;
};

struct CellStats {
  std::size_t count = 0;
  LengthStats query, answer;
};

struct CorpusStats {
  CellStats train_s2c, train_c2c, test_s2c, test_c2c;
  std::uint64_t seed = 0;
  std::size_t sources = 0;
  std::size_t rejected = 0;
  std::size_t skipped = 0;
};

/// Stats for one cell; empty input gives count 0.
[[nodiscard]] CellStats compute_cell(const std::vector<QueryRecord>& records);
[[nodiscard]] nlohmann::json to_json(const CorpusStats& s);

struct InspectionRules {
  double min_edge_energy = 40.0;
  int border_threshold = kCropThreshold;
};

/// Mean gradient magnitude over pixels whose central-difference gradient
/// exceeds 10 (0 when there are none).
[[nodiscard]] double edge_energy(const Raster& img);

/// Code fence in the query, then ink on the border of the raw render, then
/// low edge energy. A hit yields Rejected with reason "code-in-query",
/// "truncated" or "blurry"; otherwise the record stays Unreviewed.
[[nodiscard]] Inspection inspect_flags(const QueryRecord& record, const Raster* raw_render,
                                       const InspectionRules& rules = {});

struct BuildOptions {
  std::filesystem::path input_dir;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> metadata_csv;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  // Renders with TeX when set, else with the preview renderer after fast validation.
  std::optional<ToolchainConfig> toolchain;
  int dpi = 150;
  std::shared_ptr<AgentBackend> sketch_backend;  // optional
  int jobs = 1;
  InspectionRules rules;
};

struct BuildResult {
  CorpusStats stats;
  std::vector<std::string> skipped;  // "<file>: <why>"
};

/// Ingests every .tex under input_dir (sorted), renders, crops, normalizes,
/// sketchifies to images/<id>.png, builds queries, screens them, splits by a
/// seeded hash of provenance and writes the four JSONL files and stats.json.
[[nodiscard]] BuildResult build_corpus(const BuildOptions& opts);

/// Unique provenances ordered by FNV-1a of "<seed>:<provenance>"; the first
/// round(train_fraction * count) of them form the train split.
[[nodiscard]] std::set<std::string> train_provenances(const std::vector<std::string>& provenances,
                                                      std::uint64_t seed, double train_fraction);

}  // namespace s2d
