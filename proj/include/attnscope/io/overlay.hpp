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

// Heatmap overlay rendering.
//
// The map is min-max normalized to t in [0, 1] (a constant map gives t = 0)
// and coloured by linear interpolation between five anchors:
//
//   t = 0.00  (0.0, 0.0, 0.5)  dark blue
//   t = 0.25  (0.0, 0.5, 1.0)
//   t = 0.50  (0.5, 1.0, 0.5)
//   t = 0.75  (1.0, 0.5, 0.0)
//   t = 1.00  (1.0, 0.0, 0.0)  red
//
// Output pixel = 0.5 * image + 0.5 * heat. Boxes are 2 px red outlines drawn
// inside the box edges, after blending.

#pragma once

#include "attnscope/common.hpp"
#include "attnscope/geometry.hpp"

#include <array>
#include <span>

namespace attnscope::io {

using Rgb = std::array<double, 3>;

inline constexpr std::array<Rgb, 5> kRampAnchors = {{{0.0, 0.0, 0.5},
                                                      {0.0, 0.5, 1.0},
                                                      {0.5, 1.0, 0.5},
                                                      {1.0, 0.5, 0.0},
                                                      {1.0, 0.0, 0.0}}};
inline constexpr Rgb kBoxColor = {1.0, 0.0, 0.0};
inline constexpr std::size_t kBoxThickness = 2;

inline Rgb ramp_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * 4.0;
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(pos), 3);
  const double f = pos - static_cast<double>(i);
  Rgb out;
  for (std::size_t c = 0; c < 3; ++c)
    out[c] = kRampAnchors[i][c] + f * (kRampAnchors[i + 1][c] - kRampAnchors[i][c]);
  return out;
}

inline Image heatmap(const Matrix& map) {
  if (map.size() == 0) attnscope::detail::fail("heatmap: empty map");
  const double lo = map.minCoeff();
  const double span = map.maxCoeff() - lo;
  Image out(map.rows(), map.cols(), 3);
  for (Eigen::Index y = 0; y < map.rows(); ++y)
    for (Eigen::Index x = 0; x < map.cols(); ++x) {
      const double t = span > 0.0 ? (map(y, x) - lo) / span : 0.0;
      const Rgb c = ramp_color(t);
      for (std::size_t k = 0; k < 3; ++k) out.at(y, x, k) = c[k];
    }
  return out;
}

inline void draw_box(Image& img, const BoundingBox& box,
                     std::size_t thickness = kBoxThickness) {
  const std::size_t x1 = std::min(box.x1, img.width);
  const std::size_t y1 = std::min(box.y1, img.height);
  if (box.x0 >= x1 || box.y0 >= y1) return;
  for (std::size_t y = box.y0; y < y1; ++y)
    for (std::size_t x = box.x0; x < x1; ++x) {
      const bool edge = y < box.y0 + thickness || y + thickness >= y1 ||
                        x < box.x0 + thickness || x + thickness >= x1;
      if (!edge) continue;
      for (std::size_t c = 0; c < img.channels && c < 3; ++c)
        img.at(y, x, c) = kBoxColor[c];
    }
}

inline Image render_overlay(const Image& image, const Matrix& pixel_map,
                            std::span<const BoundingBox> boxes = {}) {
  if (static_cast<std::size_t>(pixel_map.rows()) != image.height ||
      static_cast<std::size_t>(pixel_map.cols()) != image.width)
    attnscope::detail::fail("render_overlay: map ", pixel_map.rows(), "x",
                            pixel_map.cols(), " does not match image ",
                            image.height, "x", image.width);
  if (image.channels != 1 && image.channels != 3)
    attnscope::detail::fail("render_overlay: image must have 1 or 3 channels");
  const Image heat = heatmap(pixel_map);
  Image out(image.height, image.width, 3);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = image.at(y, x, std::min(c, image.channels - 1));
        out.at(y, x, c) = 0.5 * base + 0.5 * heat.at(y, x, c);
      }
  for (const auto& b : boxes) draw_box(out, b);
  return out;
}

}  // namespace attnscope::io
