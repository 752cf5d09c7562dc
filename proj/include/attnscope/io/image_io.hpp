// Copyright 2026 The attnscope Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Image files: binary PPM (P6) implemented here, PNG through libpng.
// Images are stored as doubles in [0, 1]; files hold 8-bit samples.

#pragma once

#include "attnscope/common.hpp"
#include "attnscope/io/tensor_file.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

namespace attnscope::io {

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Replicates gray to RGB or averages RGB to gray; alpha is never kept.
inline Image to_channels(const Image& src, std::size_t channels) {
  if (src.channels == channels) return src;
  if (channels != 1 && channels != 3)
    attnscope::detail::fail("to_channels: only 1 or 3 channels are supported");
  Image out(src.height, src.width, channels);
  for (std::size_t y = 0; y < src.height; ++y)
    for (std::size_t x = 0; x < src.width; ++x) {
      if (channels == 3) {
        for (std::size_t c = 0; c < 3; ++c)
          out.at(y, x, c) = src.at(y, x, std::min(c, src.channels - 1));
      } else {
        double s = 0.0;
        const std::size_t n = std::min<std::size_t>(src.channels, 3);
        for (std::size_t c = 0; c < n; ++c) s += src.at(y, x, c);
        out.at(y, x, 0) = s / static_cast<double>(n);
      }
    }
  return out;
}

inline Bytes encode_ppm(const Image& image) {
  const Image rgb = to_channels(image, 3);
  const std::string header = "P6\n" + std::to_string(rgb.width) + " " +
                             std::to_string(rgb.height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + rgb.data.size());
  for (double v : rgb.data) out.push_back(quantize(v));
  return out;
}

inline Image decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (++digits > 9) throw IoError(IoErrc::kDimsOverflow, "PPM header value too large");
    }
    if (digits == 0) throw IoError(IoErrc::kTruncated, "PPM header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw IoError(IoErrc::kBadMagic, "expected P6 PPM");
  pos = 2;
  const std::size_t w = number();
  const std::size_t h = number();
  const std::size_t maxval = number();
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw IoError(IoErrc::kTruncated, "PPM header");
  ++pos;
  if (maxval == 0 || maxval > 65535) throw IoError(IoErrc::kBadDtype, "PPM maxval");
  const std::size_t bps = maxval > 255 ? 2 : 1;
  if (w == 0 || h == 0) throw IoError(IoErrc::kDimsOverflow, "PPM has zero size");
  if ((bytes.size() - pos) / bps / 3 / w < h)
    throw IoError(IoErrc::kTruncated, "PPM pixel data");
  Image img(h, w, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    std::size_t v = bytes[pos];
    if (bps == 2) v = (v << 8) | bytes[pos + 1];
    pos += bps;
    img.data[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

namespace detail {

inline void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

struct PngSource {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

inline void png_read_from_span(png_structp png, png_bytep data, png_size_t len) {
  auto* src = static_cast<PngSource*>(png_get_io_ptr(png));
  if (src->bytes.size() - src->pos < len) png_error(png, "truncated PNG");
  std::memcpy(data, src->bytes.data() + src->pos, len);
  src->pos += len;
}

}  // namespace detail

inline bool is_png(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

// 8-bit RGB, no ancillary chunks, so output bytes depend only on pixels.
inline Bytes encode_png(const Image& image) {
  const Image rgb = to_channels(image, 3);
  Bytes out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError(IoErrc::kWriteFailed, "png_create_write_struct");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> row(rgb.width * 3);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    throw IoError(IoErrc::kWriteFailed, "PNG encoding failed");
  }
  png_set_write_fn(png, &out, detail::png_write_to_vector, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(rgb.width),
               static_cast<png_uint_32>(rgb.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < rgb.height; ++y) {
    for (std::size_t i = 0; i < row.size(); ++i)
      row[i] = quantize(rgb.data[y * row.size() + i]);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

// Any PNG colour type and depth; result is RGB.
inline Image decode_png(std::span<const std::uint8_t> bytes) {
  if (!is_png(bytes)) throw IoError(IoErrc::kBadMagic, "expected PNG signature");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError(IoErrc::kReadFailed, "png_create_read_struct");
  png_infop info = png_create_info_struct(png);
  detail::PngSource src{bytes, 0};
  Image img;
  std::vector<std::uint8_t> row;
  std::vector<std::uint8_t> all;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    throw IoError(IoErrc::kTruncated, "PNG decoding failed");
  }
  png_set_read_fn(png, &src, detail::png_read_from_span);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const auto w = png_get_image_width(png, info);
  const auto h = png_get_image_height(png, info);
  const auto passes = png_set_interlace_handling(png);
  img = Image(h, w, 3);
  row.resize(png_get_rowbytes(png, info));
  all.resize(static_cast<std::size_t>(h) * row.size());
  for (int p = 0; p < passes; ++p)
    for (png_uint_32 y = 0; y < h; ++y) png_read_row(png, all.data() + y * row.size(), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = all[i] / 255.0;
  return img;
}

inline Image read_image(const std::string& path) {
  const Bytes bytes = read_file(path);
  return is_png(bytes) ? decode_png(bytes) : decode_ppm(bytes);
}

inline bool has_png_extension(const std::string& path) {
  return path.size() >= 4 && (path.ends_with(".png") || path.ends_with(".PNG"));
}

inline Bytes encode_image(const Image& image, bool png) {
  return png ? encode_png(image) : encode_ppm(image);
}

// PNG when the path ends in .png, PPM otherwise.
inline void write_image(const std::string& path, const Image& image) {
  write_file(path, encode_image(image, has_png_extension(path)));
}

}  // namespace attnscope::io
