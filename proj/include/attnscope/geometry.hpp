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

// Pixel rectangles and resampling of images and scalar grids.

#pragma once

#include "attnscope/common.hpp"

#include <algorithm>
#include <cmath>

namespace attnscope {

// Half-open on the max edge: a pixel (y, x) is inside iff
// x0 <= x < x1 and y0 <= y < y1.
struct BoundingBox {
  std::size_t x0 = 0;
  std::size_t y0 = 0;
  std::size_t x1 = 0;
  std::size_t y1 = 0;

  std::size_t width() const noexcept { return x1 - x0; }
  std::size_t height() const noexcept { return y1 - y0; }
  std::size_t area() const noexcept { return width() * height(); }
  bool valid_in(std::size_t w, std::size_t h) const noexcept {
    return x0 < x1 && x1 <= w && y0 < y1 && y1 <= h;
  }
  bool contains(std::size_t y, std::size_t x) const noexcept {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline BoundingBox full_frame(std::size_t width, std::size_t height) {
  return {0, 0, width, height};
}

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const std::size_t ix0 = std::max(a.x0, b.x0);
  const std::size_t iy0 = std::max(a.y0, b.y0);
  const std::size_t ix1 = std::min(a.x1, b.x1);
  const std::size_t iy1 = std::min(a.y1, b.y1);
  if (ix1 <= ix0 || iy1 <= iy0) return 0.0;
  const double inter = static_cast<double>((ix1 - ix0) * (iy1 - iy0));
  const double uni =
      static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Maps a box from a (src_w x src_h) frame into a (dst_w x dst_h) frame.
// Edges are floored/ceiled outward so the scaled box covers the source area,
// then grown to at least min_side pixels per axis inside the frame.
inline BoundingBox rescale_box(const BoundingBox& box, std::size_t src_w,
                               std::size_t src_h, std::size_t dst_w,
                               std::size_t dst_h, std::size_t min_side = 2) {
  const double sx = static_cast<double>(dst_w) / static_cast<double>(src_w);
  const double sy = static_cast<double>(dst_h) / static_cast<double>(src_h);
  auto lo = [](double v) {
    return static_cast<std::size_t>(std::max(0.0, std::floor(v + 1e-9)));
  };
  auto hi = [](double v, std::size_t limit) {
    return std::min(limit, static_cast<std::size_t>(std::ceil(v - 1e-9)));
  };
  BoundingBox out{lo(box.x0 * sx), lo(box.y0 * sy), hi(box.x1 * sx, dst_w),
                  hi(box.y1 * sy, dst_h)};
  auto grow = [min_side](std::size_t& a, std::size_t& b, std::size_t limit) {
    const std::size_t want = std::min(min_side, limit);
    if (b < a) b = a;
    while (b - a < want) {
      if (b < limit) ++b;
      if (b - a < want && a > 0) --a;
    }
  };
  grow(out.x0, out.x1, dst_w);
  grow(out.y0, out.y1, dst_h);
  return out;
}

enum class Interpolation { kBilinear, kNearest };

namespace detail {

// Half-pixel centers, no corner alignment; returns (i0, i1, frac).
struct Tap {
  std::size_t i0;
  std::size_t i1;
  double frac;
};

inline std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

inline std::vector<Tap> nearest_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const auto i = std::min(
        in - 1,
        static_cast<std::size_t>((static_cast<double>(o) + 0.5) * scale));
    taps[o] = {i, i, 0.0};
  }
  return taps;
}

inline std::vector<Tap> taps_for(Interpolation mode, std::size_t in,
                                 std::size_t out) {
  return mode == Interpolation::kBilinear ? bilinear_taps(in, out)
                                          : nearest_taps(in, out);
}

}  // namespace detail

inline Matrix resize_grid(const Matrix& src, std::size_t rows, std::size_t cols,
                          Interpolation mode = Interpolation::kBilinear) {
  if (rows == 0 || cols == 0) detail::fail("resize: zero target dims");
  if (src.size() == 0) detail::fail("resize: empty source grid");
  const auto ty = detail::taps_for(mode, src.rows(), rows);
  const auto tx = detail::taps_for(mode, src.cols(), cols);
  Matrix out(rows, cols);
  for (std::size_t y = 0; y < rows; ++y) {
    const auto& a = ty[y];
    for (std::size_t x = 0; x < cols; ++x) {
      const auto& b = tx[x];
      const double top = src(a.i0, b.i0) * (1.0 - b.frac) + src(a.i0, b.i1) * b.frac;
      const double bot = src(a.i1, b.i0) * (1.0 - b.frac) + src(a.i1, b.i1) * b.frac;
      out(y, x) = top * (1.0 - a.frac) + bot * a.frac;
    }
  }
  return out;
}

inline Image resize_image(const Image& src, std::size_t height,
                          std::size_t width,
                          Interpolation mode = Interpolation::kBilinear) {
  if (height == 0 || width == 0) detail::fail("resize: zero target dims");
  if (src.empty()) detail::fail("resize: empty source image");
  const auto ty = detail::taps_for(mode, src.height, height);
  const auto tx = detail::taps_for(mode, src.width, width);
  Image out(height, width, src.channels);
  for (std::size_t y = 0; y < height; ++y) {
    const auto& a = ty[y];
    for (std::size_t x = 0; x < width; ++x) {
      const auto& b = tx[x];
      for (std::size_t c = 0; c < src.channels; ++c) {
        const double top = src.at(a.i0, b.i0, c) * (1.0 - b.frac) +
                           src.at(a.i0, b.i1, c) * b.frac;
        const double bot = src.at(a.i1, b.i0, c) * (1.0 - b.frac) +
                           src.at(a.i1, b.i1, c) * b.frac;
        out.at(y, x, c) = top * (1.0 - a.frac) + bot * a.frac;
      }
    }
  }
  return out;
}

inline Matrix crop_grid(const Matrix& src, const BoundingBox& box) {
  if (!box.valid_in(src.cols(), src.rows()))
    detail::fail("crop: box (", box.x0, ",", box.y0, ",", box.x1, ",", box.y1,
                 ") outside ", src.cols(), "x", src.rows(), " grid");
  return src.block(box.y0, box.x0, box.height(), box.width());
}

inline Image crop_image(const Image& src, const BoundingBox& box) {
  if (!box.valid_in(src.width, src.height))
    detail::fail("crop: box (", box.x0, ",", box.y0, ",", box.x1, ",", box.y1,
                 ") outside ", src.width, "x", src.height, " image");
  Image out(box.height(), box.width(), src.channels);
  for (std::size_t y = 0; y < box.height(); ++y)
    for (std::size_t x = 0; x < box.width(); ++x)
      for (std::size_t c = 0; c < src.channels; ++c)
        out.at(y, x, c) = src.at(box.y0 + y, box.x0 + x, c);
  return out;
}

}  // namespace attnscope
