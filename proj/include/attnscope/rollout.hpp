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

// Attention rollout: per layer, fuse heads, mix in the residual identity and
// renormalize; then chain the layers so the CLS row attributes the final
// representation to input patches.

#pragma once

#include "attnscope/encoder.hpp"
#include "attnscope/geometry.hpp"

#include <cmath>

namespace attnscope {

enum class MapSpace { kPatchGrid, kPixelGrid };
enum class MapSource { kFullImage, kObjectCrop };

struct AttentionMap {
  Matrix values;
  MapSpace space = MapSpace::kPatchGrid;
  MapSource source = MapSource::kFullImage;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
  bool empty() const { return values.size() == 0; }
};

enum class HeadFusion { kMean, kMax, kMin };

struct RolloutConfig {
  HeadFusion fusion = HeadFusion::kMean;
  double residual = 0.5;  // weight of the identity term
};

inline Matrix layer_fuse(const AttentionStack& stack, std::size_t layer,
                         const RolloutConfig& cfg = {}) {
  if (layer >= stack.layers)
    detail::fail("layer_fuse: layer ", layer, " >= ", stack.layers);
  if (stack.heads == 0) detail::fail("layer_fuse: stack has no heads");
  Matrix fused = stack.at(layer, 0);
  for (std::size_t h = 1; h < stack.heads; ++h) {
    switch (cfg.fusion) {
      case HeadFusion::kMean: fused += stack.at(layer, h); break;
      case HeadFusion::kMax: fused = fused.cwiseMax(stack.at(layer, h)); break;
      case HeadFusion::kMin: fused = fused.cwiseMin(stack.at(layer, h)); break;
    }
  }
  if (cfg.fusion == HeadFusion::kMean)
    fused /= static_cast<double>(stack.heads);
  const auto T = static_cast<Eigen::Index>(stack.tokens);
  Matrix mixed = (1.0 - cfg.residual) * fused +
                 cfg.residual * Matrix::Identity(T, T);
  for (Eigen::Index r = 0; r < T; ++r) mixed.row(r) /= mixed.row(r).sum();
  return mixed;
}

// Cumulative product fused_{N-1} * ... * fused_0.
inline Matrix rollout_matrix(const AttentionStack& stack,
                             const RolloutConfig& cfg = {}) {
  if (stack.empty()) detail::fail("rollout: empty attention stack");
  Matrix joint = layer_fuse(stack, 0, cfg);
  for (std::size_t l = 1; l < stack.layers; ++l)
    joint = layer_fuse(stack, l, cfg) * joint;
  return joint;
}

// CLS-to-patch weights: row 0 of a rollout matrix without the CLS column.
inline Vector cls_patch_weights(const Matrix& joint) {
  if (joint.rows() < 1 || joint.cols() < 2)
    detail::fail("rollout: matrix has no patch tokens");
  return joint.row(0).tail(joint.cols() - 1).transpose();
}

// CLS-to-patch weights as a square grid.
inline AttentionMap cls_patch_map(const Matrix& joint) {
  const Vector w = cls_patch_weights(joint);
  const auto patches = static_cast<std::size_t>(w.size());
  const auto side = static_cast<std::size_t>(
      std::llround(std::sqrt(static_cast<double>(patches))));
  if (side * side != patches)
    detail::fail("rollout: patch count ", patches, " is not a square grid");
  AttentionMap map;
  map.values.resize(static_cast<Eigen::Index>(side),
                    static_cast<Eigen::Index>(side));
  for (std::size_t i = 0; i < patches; ++i)
    map.values(static_cast<Eigen::Index>(i / side),
               static_cast<Eigen::Index>(i % side)) = w(static_cast<Eigen::Index>(i));
  return map;
}

inline AttentionMap rollout_map(const AttentionStack& stack,
                                const RolloutConfig& cfg = {}) {
  return cls_patch_map(rollout_matrix(stack, cfg));
}

inline AttentionMap upsample_map(const AttentionMap& map, std::size_t rows,
                                 std::size_t cols,
                                 Interpolation mode = Interpolation::kBilinear) {
  if (rows == 0 || cols == 0) detail::fail("upsample_map: zero target dims");
  if (rows < map.rows() || cols < map.cols())
    detail::fail("upsample_map: target ", rows, "x", cols,
                 " smaller than source ", map.rows(), "x", map.cols());
  AttentionMap out;
  out.values = resize_grid(map.values, rows, cols, mode);
  out.space = MapSpace::kPixelGrid;
  out.source = map.source;
  return out;
}

}  // namespace attnscope
