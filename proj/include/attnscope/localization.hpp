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

// Object localization from a pixel-space attention map:
// mean threshold -> binary closing -> connected components -> box of the
// component holding the attention peak; then crop image and map together.

#pragma once

#include "attnscope/geometry.hpp"
#include "attnscope/rollout.hpp"

#include <numeric>

namespace attnscope {

struct BinaryMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(std::size_t r, std::size_t c) : rows(r), cols(c), bits(r * c, 0) {}

  bool at(std::size_t y, std::size_t x) const { return bits[y * cols + x] != 0; }
  void set(std::size_t y, std::size_t x, bool v) { bits[y * cols + x] = v; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1));
  }
  bool none() const { return count() == 0; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

enum class Connectivity { kFour = 4, kEight = 8 };
enum class BoxRule { kPeakComponent, kBestMeanComponent };

struct LocalizationConfig {
  std::size_t se_radius = 1;
  Connectivity connectivity = Connectivity::kEight;
  BoxRule rule = BoxRule::kPeakComponent;
};

inline BinaryMask threshold_mean(const AttentionMap& map) {
  if (map.empty()) detail::fail("threshold_mean: empty map");
  const double mean = map.values.mean();
  BinaryMask mask(map.rows(), map.cols());
  for (std::size_t y = 0; y < mask.rows; ++y)
    for (std::size_t x = 0; x < mask.cols; ++x)
      mask.set(y, x, map.values(static_cast<Eigen::Index>(y),
                                static_cast<Eigen::Index>(x)) > mean);
  return mask;
}

namespace detail {

// Square structuring element, applied separably. Out-of-frame pixels are
// ignored by both operators.
inline BinaryMask morph_pass(const BinaryMask& in, std::size_t radius,
                             bool dilate) {
  auto pass = [&](const BinaryMask& src, bool horizontal) {
    BinaryMask dst(src.rows, src.cols);
    const std::size_t n = horizontal ? src.cols : src.rows;
    const std::size_t m = horizontal ? src.rows : src.cols;
    for (std::size_t j = 0; j < m; ++j) {
      // Running count of set pixels in the window, per line.
      std::vector<std::size_t> prefix(n + 1, 0);
      for (std::size_t i = 0; i < n; ++i)
        prefix[i + 1] = prefix[i] + (horizontal ? src.at(j, i) : src.at(i, j));
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= radius ? i - radius : 0;
        const std::size_t hi = std::min(n, i + radius + 1);
        const std::size_t set = prefix[hi] - prefix[lo];
        const bool v = dilate ? set > 0 : set == hi - lo;
        if (horizontal) dst.set(j, i, v); else dst.set(i, j, v);
      }
    }
    return dst;
  };
  return pass(pass(in, true), false);
}

}  // namespace detail

inline BinaryMask binary_dilate(const BinaryMask& m, std::size_t radius) {
  return radius == 0 ? m : detail::morph_pass(m, radius, true);
}
inline BinaryMask binary_erode(const BinaryMask& m, std::size_t radius) {
  return radius == 0 ? m : detail::morph_pass(m, radius, false);
}
// Closing as in the unbounded plane with background outside the frame. A pad
// of se_radius background pixels makes the clipped operators exact for every
// in-frame pixel, so shapes near the border are not pulled onto it.
inline BinaryMask binary_close(const BinaryMask& m, std::size_t se_radius) {
  if (se_radius == 0) return m;
  const std::size_t r = se_radius;
  BinaryMask padded(m.rows + 2 * r, m.cols + 2 * r);
  for (std::size_t y = 0; y < m.rows; ++y)
    for (std::size_t x = 0; x < m.cols; ++x) padded.set(y + r, x + r, m.at(y, x));
  const BinaryMask closed = binary_erode(binary_dilate(padded, r), r);
  BinaryMask out(m.rows, m.cols);
  for (std::size_t y = 0; y < m.rows; ++y)
    for (std::size_t x = 0; x < m.cols; ++x) out.set(y, x, closed.at(y + r, x + r));
  return out;
}

struct ComponentLabels {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t count = 0;
  std::vector<std::size_t> labels;  // 0 = background, 1..count row-major order

  std::size_t at(std::size_t y, std::size_t x) const {
    return labels[y * cols + x];
  }
};

// Two-pass union-find labeling; labels numbered by first appearance in
// row-major order.
inline ComponentLabels label_components(const BinaryMask& mask,
                                        Connectivity conn = Connectivity::kEight) {
  ComponentLabels out{mask.rows, mask.cols, 0,
                      std::vector<std::size_t>(mask.rows * mask.cols, 0)};
  std::vector<std::size_t> parent{0};
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto unite = [&](std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };
  const bool eight = conn == Connectivity::kEight;
  for (std::size_t y = 0; y < mask.rows; ++y)
    for (std::size_t x = 0; x < mask.cols; ++x) {
      if (!mask.at(y, x)) continue;
      std::size_t neighbours[4];
      std::size_t n = 0;
      auto probe = [&](std::size_t yy, std::size_t xx) {
        const std::size_t l = out.labels[yy * mask.cols + xx];
        if (l) neighbours[n++] = l;
      };
      if (x > 0) probe(y, x - 1);
      if (y > 0) {
        probe(y - 1, x);
        if (eight && x > 0) probe(y - 1, x - 1);
        if (eight && x + 1 < mask.cols) probe(y - 1, x + 1);
      }
      std::size_t& here = out.labels[y * mask.cols + x];
      if (n == 0) {
        here = parent.size();
        parent.push_back(here);
      } else {
        here = *std::min_element(neighbours, neighbours + n);
        for (std::size_t i = 0; i < n; ++i) unite(here, neighbours[i]);
      }
    }
  std::vector<std::size_t> remap(parent.size(), 0);
  for (auto& l : out.labels) {
    if (!l) continue;
    const std::size_t root = find(l);
    if (!remap[root]) remap[root] = ++out.count;
    l = remap[root];
  }
  return out;
}

struct ObjectBox {
  BoundingBox box;
  double score = 0.0;     // peak attention inside the chosen component
  bool fallback = false;  // empty mask, full frame returned
};

inline ObjectBox select_object(const BinaryMask& mask, const AttentionMap& map,
                               Connectivity conn = Connectivity::kEight,
                               BoxRule rule = BoxRule::kPeakComponent) {
  if (mask.rows != map.rows() || mask.cols != map.cols())
    detail::fail("select_object_box: mask ", mask.rows, "x", mask.cols,
                 " vs map ", map.rows(), "x", map.cols());
  if (mask.none())
    return {full_frame(mask.cols, mask.rows), map.empty() ? 0.0 : map.values.maxCoeff(), true};
  const ComponentLabels cc = label_components(mask, conn);
  auto value = [&](std::size_t y, std::size_t x) {
    return map.values(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x));
  };

  std::vector<BoundingBox> boxes(cc.count + 1, BoundingBox{mask.cols, mask.rows, 0, 0});
  std::vector<double> peak(cc.count + 1, -std::numeric_limits<double>::infinity());
  std::vector<double> sum(cc.count + 1, 0.0);
  std::vector<std::size_t> size(cc.count + 1, 0);
  std::size_t best_peak_label = 0;
  double best_peak = -std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < mask.rows; ++y)
    for (std::size_t x = 0; x < mask.cols; ++x) {
      const std::size_t l = cc.at(y, x);
      if (!l) continue;
      auto& b = boxes[l];
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x + 1);
      b.y1 = std::max(b.y1, y + 1);
      const double v = value(y, x);
      peak[l] = std::max(peak[l], v);
      sum[l] += v;
      ++size[l];
      if (v > best_peak) {
        best_peak = v;
        best_peak_label = l;
      }
    }

  std::size_t chosen = best_peak_label;
  if (rule == BoxRule::kBestMeanComponent) {
    double best_mean = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 1; l <= cc.count; ++l) {
      const double mean = sum[l] / static_cast<double>(size[l]);
      if (mean > best_mean) {
        best_mean = mean;
        chosen = l;
      }
    }
  }
  return {boxes[chosen], peak[chosen], false};
}

inline BoundingBox select_object_box(const BinaryMask& mask,
                                     const AttentionMap& map,
                                     Connectivity conn = Connectivity::kEight,
                                     BoxRule rule = BoxRule::kPeakComponent) {
  return select_object(mask, map, conn, rule).box;
}

inline ObjectBox localize_object(const AttentionMap& pixel_map,
                                 const LocalizationConfig& cfg = {}) {
  const BinaryMask mask = binary_close(threshold_mean(pixel_map), cfg.se_radius);
  return select_object(mask, pixel_map, cfg.connectivity, cfg.rule);
}

struct ObjectCrop {
  Image image;
  AttentionMap map;
  BoundingBox box_highres;  // region taken from the high-resolution image
  BoundingBox box_map;      // region taken from the map (after min-size growth)
};

// Crops the object from the high-resolution image (box rescaled from map
// coordinates) and the same region of the map; both are resized to
// out_side x out_side.
inline ObjectCrop crop_object(const Image& image_highres, const AttentionMap& map,
                              const BoundingBox& box_at_map_scale,
                              std::size_t out_side,
                              Interpolation mode = Interpolation::kBilinear) {
  if (map.empty() || image_highres.empty())
    detail::fail("crop_object: empty image or map");
  if (image_highres.width < map.cols() || image_highres.height < map.rows())
    detail::fail("crop_object: image ", image_highres.width, "x",
                 image_highres.height, " is smaller than the map ", map.cols(),
                 "x", map.rows());
  if (!box_at_map_scale.valid_in(map.cols(), map.rows()))
    detail::fail("crop_object: box outside the map frame");
  if (out_side == 0) detail::fail("crop_object: zero output side");

  ObjectCrop out;
  out.box_map = rescale_box(box_at_map_scale, map.cols(), map.rows(),
                            map.cols(), map.rows());
  out.box_highres = rescale_box(out.box_map, map.cols(), map.rows(),
                                image_highres.width, image_highres.height);
  out.image = resize_image(crop_image(image_highres, out.box_highres), out_side,
                           out_side, mode);
  out.map.values =
      resize_grid(crop_grid(map.values, out.box_map), out_side, out_side, mode);
  out.map.space = MapSpace::kPixelGrid;
  out.map.source = MapSource::kObjectCrop;
  return out;
}

}  // namespace attnscope
