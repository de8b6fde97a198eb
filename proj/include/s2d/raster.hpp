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
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace s2d {

struct Rgb {
  std::uint8_t r = 255;
  std::uint8_t g = 255;
  std::uint8_t b = 255;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};

/// 8-bit RGB image, row-major, no padding.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, Rgb fill = kWhite);

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] bool empty() const noexcept { return width_ <= 0 || height_ <= 0; }

  [[nodiscard]] Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);

  [[nodiscard]] std::span<const std::uint8_t> bytes() const noexcept { return data_; }
  [[nodiscard]] std::span<std::uint8_t> bytes() noexcept { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// BT.601 luma, rounded to nearest.
[[nodiscard]] std::uint8_t luma(Rgb c) noexcept;

/// Per-pixel luma as doubles in [0, 255].
[[nodiscard]] std::vector<double> to_gray(const Raster& img);

[[nodiscard]] std::vector<std::uint8_t> encode_png(const Raster& img);
[[nodiscard]] Raster decode_png(std::span<const std::uint8_t> png);
[[nodiscard]] Raster read_png(const std::filesystem::path& path);
/// Writes through a sibling temp file and renames, so readers never see a
/// partially written image.
void write_png(const Raster& img, const std::filesystem::path& path);

[[nodiscard]] std::string base64_encode(std::span<const std::uint8_t> data);
[[nodiscard]] std::vector<std::uint8_t> base64_decode(std::string_view text);

// Drawing helpers used by the preview renderer and test fixtures.
void fill_rect(Raster& img, int x0, int y0, int x1, int y1, Rgb c);
void draw_rect(Raster& img, int x0, int y0, int x1, int y1, Rgb c, int thickness = 1);
void draw_line(Raster& img, int x0, int y0, int x1, int y1, Rgb c, int thickness = 1);

}  // namespace s2d
