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

// Attention-guided augmentations. Both operate on attention normalized by the
// map maximum, so thresholds are fractions of the peak.

#pragma once

#include "attnscope/geometry.hpp"
#include "attnscope/rollout.hpp"

namespace attnscope {

enum class EraseFill { kZero, kChannelMean };

struct AugmentConfig {
  double erase_probability = 0.3;
  double erase_threshold = 0.5;
  double crop_threshold = 0.35;
  double crop_padding = 0.1;
  EraseFill fill = EraseFill::kChannelMean;

  void validate() const {
    if (!(erase_probability >= 0.0 && erase_probability <= 1.0))
      detail::fail("AugmentConfig: erase probability must be in [0, 1]");
    if (!(erase_threshold > 0.0 && erase_threshold <= 1.0))
      detail::fail("AugmentConfig: erase threshold must be in (0, 1]");
    if (!(crop_threshold > 0.0 && crop_threshold <= 1.0))
      detail::fail("AugmentConfig: crop threshold must be in (0, 1]");
    if (!(crop_padding >= 0.0))
      detail::fail("AugmentConfig: crop padding must be >= 0");
  }
};

struct EraseResult {
  Image image;
  bool fired = false;        // the Bernoulli(P) draw succeeded
  std::size_t erased = 0;    // pixels overwritten
};

namespace detail {

inline void check_map_matches(const Image& image, const AttentionMap& map,
                              const char* op) {
  if (image.height != map.rows() || image.width != map.cols())
    fail(op, ": map ", map.rows(), "x", map.cols(), " does not match image ",
         image.height, "x", image.width);
}

}  // namespace detail

// Exactly one draw per call, consumed even when P is 0 or 1, so rng streams
// stay aligned across configurations.
inline EraseResult attention_erase(const Image& image, const AttentionMap& map,
                                   const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  detail::check_map_matches(image, map, "attention_erase");
  EraseResult out{image, uniform01(rng) < cfg.erase_probability, 0};
  if (!out.fired) return out;
  const double peak = map.values.maxCoeff();
  if (!(peak > 0.0)) return out;

  std::vector<double> fill(image.channels, 0.0);
  if (cfg.fill == EraseFill::kChannelMean && !image.empty()) {
    for (std::size_t i = 0; i < image.height * image.width; ++i)
      for (std::size_t c = 0; c < image.channels; ++c)
        fill[c] += image.data[i * image.channels + c];
    for (auto& f : fill) f /= static_cast<double>(image.height * image.width);
  }
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x) {
      const double v = map.values(static_cast<Eigen::Index>(y),
                                  static_cast<Eigen::Index>(x));
      if (v / peak > cfg.erase_threshold) {
        for (std::size_t c = 0; c < image.channels; ++c)
          out.image.at(y, x, c) = fill[c];
        ++out.erased;
      }
    }
  return out;
}

struct CropResult {
  Image image;
  BoundingBox box;
  bool fallback = false;  // nothing above threshold, full frame used
};

// Tight box over pixels with value / max > crop_threshold, padded by
// ceil(crop_padding * side) on each side and clamped to the frame.
inline BoundingBox attention_crop_box(const AttentionMap& map,
                                      const AugmentConfig& cfg,
                                      bool* fallback = nullptr) {
  cfg.validate();
  if (map.empty()) detail::fail("attention_crop: empty map");
  const std::size_t H = map.rows(), W = map.cols();
  const double peak = map.values.maxCoeff();
  BoundingBox box{W, H, 0, 0};
  if (peak > 0.0) {
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        if (map.values(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) /
                peak > cfg.crop_threshold) {
          box.x0 = std::min(box.x0, x);
          box.y0 = std::min(box.y0, y);
          box.x1 = std::max(box.x1, x + 1);
          box.y1 = std::max(box.y1, y + 1);
        }
  }
  const bool empty = box.x1 <= box.x0;
  if (fallback) *fallback = empty;
  if (empty) return full_frame(W, H);
  const auto pad_x = static_cast<std::size_t>(
      std::ceil(cfg.crop_padding * static_cast<double>(box.width()) - 1e-12));
  const auto pad_y = static_cast<std::size_t>(
      std::ceil(cfg.crop_padding * static_cast<double>(box.height()) - 1e-12));
  box.x0 = box.x0 > pad_x ? box.x0 - pad_x : 0;
  box.y0 = box.y0 > pad_y ? box.y0 - pad_y : 0;
  box.x1 = std::min(W, box.x1 + pad_x);
  box.y1 = std::min(H, box.y1 + pad_y);
  return box;
}

inline CropResult attention_crop(const Image& image, const AttentionMap& map,
                                 const AugmentConfig& cfg, std::size_t out_side,
                                 Interpolation mode = Interpolation::kBilinear) {
  detail::check_map_matches(image, map, "attention_crop");
  if (out_side == 0) detail::fail("attention_crop: zero output side");
  CropResult out;
  out.box = attention_crop_box(map, cfg, &out.fallback);
  out.image = resize_image(crop_image(image, out.box), out_side, out_side, mode);
  return out;
}

}  // namespace attnscope
