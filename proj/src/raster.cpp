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

#include "s2d/raster.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "s2d/error.hpp"

namespace s2d {

Raster::Raster(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::Precondition, "raster dimensions must be positive");
  }
  data_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

Rgb Raster::at(int x, int y) const {
  const auto i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void Raster::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  const auto i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  data_[i] = c.r;
  data_[i + 1] = c.g;
  data_[i + 2] = c.b;
}

std::uint8_t luma(Rgb c) noexcept {
  const double y = 0.299 * c.r + 0.587 * c.g + 0.114 * c.b;
  return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

std::vector<double> to_gray(const Raster& img) {
  std::vector<double> out(static_cast<std::size_t>(img.width()) * img.height());
  const auto px = img.bytes();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2];
  }
  return out;
}

namespace {

struct PngWriteBuffer {
  std::vector<std::uint8_t> bytes;
};

void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
  buf->bytes.insert(buf->bytes.end(), data, data + len);
}

void png_flush_noop(png_structp) {}

struct PngReadCursor {
  std::span<const std::uint8_t> data;
  std::size_t offset = 0;
};

void png_read_from_span(png_structp png, png_bytep out, png_size_t len) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + len > cur->data.size()) {
    png_error(png, "truncated png stream");
  }
  std::memcpy(out, cur->data.data() + cur->offset, len);
  cur->offset += len;
}

[[noreturn]] void png_error_jump(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err != nullptr) *err = msg;
  png_longjmp(png, 1);
}

void png_warning_ignore(png_structp, png_const_charp) {}

// The libpng calls below longjmp on error; the helpers keep every object with a
// destructor in the caller's frame.
bool encode_impl(const Raster& img, PngWriteBuffer* buf, std::string* err) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, err, png_error_jump,
                                            png_warning_ignore);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, buf, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  const std::uint8_t* px = img.bytes().data();
  const auto stride = static_cast<std::size_t>(img.width()) * 3;
  for (int y = 0; y < img.height(); ++y) {
    png_write_row(png, const_cast<png_bytep>(px + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

bool decode_impl(PngReadCursor* cursor, Raster* out, std::vector<png_bytep>* rows,
                 std::string* err) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, err, png_error_jump,
                                           png_warning_ignore);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, cursor, png_read_from_span);
  png_read_info(png, info);
  const auto w = static_cast<int>(png_get_image_width(png, info));
  const auto h = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  // Alpha is composited onto white.
  png_color_16 white{0, 0xff, 0xff, 0xff, 0xff};
  png_set_background(png, &white, PNG_BACKGROUND_GAMMA_SCREEN, 0, 1.0);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const auto stride = static_cast<std::size_t>(w) * 3;
  if (w <= 0 || h <= 0 || png_get_rowbytes(png, info) != stride) {
    png_error(png, "unexpected row layout");
  }
  *out = Raster(w, h);
  rows->resize(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) (*rows)[y] = out->bytes().data() + y * stride;
  png_read_image(png, rows->data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Raster& img) {
  if (img.empty()) throw Error(ErrorCode::Precondition, "cannot encode empty raster");
  PngWriteBuffer buf;
  std::string err;
  if (!encode_impl(img, &buf, &err)) throw Error(ErrorCode::ConversionFailed, "png: " + err);
  return std::move(buf.bytes);
}

Raster decode_png(std::span<const std::uint8_t> data) {
  if (data.size() < 8 || png_sig_cmp(data.data(), 0, 8) != 0) {
    throw Error(ErrorCode::ConversionFailed, "not a png stream");
  }
  PngReadCursor cursor{data, 0};
  Raster out;
  std::vector<png_bytep> rows;
  std::string err;
  if (!decode_impl(&cursor, &out, &rows, &err)) {
    throw Error(ErrorCode::ConversionFailed, "png: " + err);
  }
  return out;
}

Raster read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

void write_png(const Raster& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  auto tmp = path;
  tmp += ".part";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::Io, "short write to " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

namespace {
constexpr std::string_view kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> data) {
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < data.size(); i += 3) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i + 1 == data.size()) {
    const std::uint32_t v = data[i] << 16;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == data.size()) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::array<int, 256> lookup{};
  lookup.fill(-1);
  for (std::size_t i = 0; i < kB64.size(); ++i) lookup[static_cast<unsigned char>(kB64[i])] = static_cast<int>(i);
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (const char ch : text) {
    if (ch == '=') break;
    if (ch == '\n' || ch == '\r' || ch == ' ') continue;
    const int v = lookup[static_cast<unsigned char>(ch)];
    if (v < 0) throw Error(ErrorCode::ConversionFailed, "invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

void fill_rect(Raster& img, int x0, int y0, int x1, int y1, Rgb c) {
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, img.width() - 1);
  y1 = std::min(y1, img.height() - 1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) img.set(x, y, c);
  }
}

void draw_rect(Raster& img, int x0, int y0, int x1, int y1, Rgb c, int thickness) {
  const int t = std::max(thickness, 1) - 1;
  fill_rect(img, x0, y0, x1, y0 + t, c);
  fill_rect(img, x0, y1 - t, x1, y1, c);
  fill_rect(img, x0, y0, x0 + t, y1, c);
  fill_rect(img, x1 - t, y0, x1, y1, c);
}

void draw_line(Raster& img, int x0, int y0, int x1, int y1, Rgb c, int thickness) {
  const int half = std::max(thickness, 1) / 2;
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    fill_rect(img, x0 - half, y0 - half, x0 + half, y0 + half, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace s2d
