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

// Part-region search over an object attention map: every kernel-sized window
// on the stride lattice is scored by pooled attention, then greedy NMS keeps
// the top-k non-overlapping windows.
//
// Average and GeM pooling read window sums from summed-area tables (GeM over
// the p-th power map), so a window costs four lookups regardless of kernel
// size. Max pooling uses a separable monotone-deque sliding maximum.

#pragma once

#include "attnscope/geometry.hpp"
#include "attnscope/rollout.hpp"

#include <algorithm>
#include <deque>
#include <optional>
#include <thread>

namespace attnscope {

enum class Pooling { kAverage, kGeM, kMax };
enum class RatioMode { kLinear, kArea };
enum class KernelRounding { kNearest, kPatchFloor };

struct ScoringConfig {
  double kernel_ratio = 0.3;
  RatioMode ratio_mode = RatioMode::kLinear;
  KernelRounding rounding = KernelRounding::kNearest;
  std::size_t rounding_quantum = 16;  // patch side for kPatchFloor
  std::size_t stride = 1;
  Pooling pooling = Pooling::kAverage;
  double gem_p = 3.0;
  std::size_t top_k = 2;
  double iou_threshold = 0.25;
  std::size_t threads = 1;

  void validate() const {
    if (!(kernel_ratio > 0.0 && kernel_ratio <= 1.0))
      detail::fail("ScoringConfig: kernel_ratio must be in (0, 1]");
    if (stride < 1) detail::fail("ScoringConfig: stride must be >= 1");
    if (top_k < 1) detail::fail("ScoringConfig: top_k must be >= 1");
    if (!(iou_threshold >= 0.0 && iou_threshold < 1.0))
      detail::fail("ScoringConfig: iou_threshold must be in [0, 1)");
    if (pooling == Pooling::kGeM && !(gem_p >= 1.0))
      detail::fail("ScoringConfig: gem p must be >= 1");
    if (rounding == KernelRounding::kPatchFloor && rounding_quantum < 1)
      detail::fail("ScoringConfig: rounding quantum must be >= 1");
  }
};

struct KernelSize {
  std::size_t height = 0;
  std::size_t width = 0;
  friend bool operator==(const KernelSize&, const KernelSize&) = default;
};

// The ratio scales each side (linear) or the window area (area: sqrt(ratio)
// per side). Patch-floor rounding snaps each side down to a multiple of the
// quantum; sides shorter than one quantum keep the plain rounded value.
inline KernelSize kernel_from_object(std::size_t rows, std::size_t cols,
                                     const ScoringConfig& cfg) {
  if (rows < 1 || cols < 1) detail::fail("kernel_from_object: empty map");
  const double f = cfg.ratio_mode == RatioMode::kLinear
                       ? cfg.kernel_ratio
                       : std::sqrt(cfg.kernel_ratio);
  auto side = [&](std::size_t n) {
    const double raw = f * static_cast<double>(n);
    std::size_t s = static_cast<std::size_t>(std::llround(raw));
    if (cfg.rounding == KernelRounding::kPatchFloor) {
      const std::size_t q = cfg.rounding_quantum;
      const std::size_t snapped =
          static_cast<std::size_t>(std::floor(raw / static_cast<double>(q))) * q;
      if (snapped >= q) s = snapped;
    }
    return std::clamp<std::size_t>(s, 1, n);
  };
  return {side(rows), side(cols)};
}

class SummedAreaTable {
 public:
  explicit SummedAreaTable(const Matrix& m)
      : rows_(static_cast<std::size_t>(m.rows())),
        cols_(static_cast<std::size_t>(m.cols())),
        table_(Matrix::Zero(m.rows() + 1, m.cols() + 1)) {
    if (m.size() == 0) detail::fail("integral_image: empty map");
    for (Eigen::Index y = 0; y < m.rows(); ++y) {
      double row = 0.0;
      for (Eigen::Index x = 0; x < m.cols(); ++x) {
        row += m(y, x);
        table_(y + 1, x + 1) = table_(y, x + 1) + row;
      }
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double at(std::size_t y, std::size_t x) const {
    return table_(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x));
  }
  const Matrix& table() const { return table_; }

  // Sum over [y0, y1) x [x0, x1).
  double sum(std::size_t y0, std::size_t x0, std::size_t y1,
             std::size_t x1) const {
    return at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0);
  }
  double sum(const BoundingBox& b) const { return sum(b.y0, b.x0, b.y1, b.x1); }
  double total() const { return at(rows_, cols_); }

 private:
  std::size_t rows_;
  std::size_t cols_;
  Matrix table_;
};

inline SummedAreaTable integral_image(const AttentionMap& map) {
  return SummedAreaTable(map.values);
}

struct RegionCandidate {
  BoundingBox box;
  double score = 0.0;
  friend bool operator==(const RegionCandidate&, const RegionCandidate&) = default;
};

namespace detail {

// out(i) = max(in[i .. i+w)) for every i in [0, n-w].
template <typename Get>
void sliding_max(std::size_t n, std::size_t w, Get get, std::vector<double>& out) {
  out.assign(n - w + 1, 0.0);
  std::deque<std::size_t> dq;
  for (std::size_t i = 0; i < n; ++i) {
    while (!dq.empty() && get(dq.back()) <= get(i)) dq.pop_back();
    dq.push_back(i);
    if (dq.front() + w <= i) dq.pop_front();
    if (i + 1 >= w) out[i + 1 - w] = get(dq.front());
  }
}

inline Matrix window_max(const Matrix& m, const KernelSize& k) {
  const auto R = static_cast<std::size_t>(m.rows());
  const auto C = static_cast<std::size_t>(m.cols());
  Matrix horiz(R, C - k.width + 1);
  std::vector<double> line;
  for (std::size_t y = 0; y < R; ++y) {
    sliding_max(C, k.width, [&](std::size_t x) {
      return m(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x));
    }, line);
    for (std::size_t x = 0; x < line.size(); ++x)
      horiz(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = line[x];
  }
  Matrix out(R - k.height + 1, horiz.cols());
  for (Eigen::Index x = 0; x < horiz.cols(); ++x) {
    sliding_max(R, k.height, [&](std::size_t y) {
      return horiz(static_cast<Eigen::Index>(y), x);
    }, line);
    for (std::size_t y = 0; y < line.size(); ++y)
      out(static_cast<Eigen::Index>(y), x) = line[y];
  }
  return out;
}

}  // namespace detail

// One candidate per lattice position, sorted by descending score; ties keep
// row-major order of the top-left corner.
inline std::vector<RegionCandidate> score_windows(const AttentionMap& map,
                                                  const KernelSize& kernel,
                                                  const ScoringConfig& cfg) {
  cfg.validate();
  if (map.empty()) detail::fail("score_windows: empty map");
  if (kernel.height < 1 || kernel.width < 1 || kernel.height > map.rows() ||
      kernel.width > map.cols())
    detail::fail("score_windows: kernel ", kernel.height, "x", kernel.width,
                 " does not fit in map ", map.rows(), "x", map.cols());
  if ((map.values.array() < 0.0).any() && cfg.pooling == Pooling::kGeM)
    detail::fail("score_windows: GeM pooling needs a non-negative map");

  const std::size_t ny = (map.rows() - kernel.height) / cfg.stride + 1;
  const std::size_t nx = (map.cols() - kernel.width) / cfg.stride + 1;
  const double area = static_cast<double>(kernel.height * kernel.width);

  std::optional<SummedAreaTable> sat;
  Matrix maxima;
  switch (cfg.pooling) {
    case Pooling::kAverage: sat.emplace(map.values); break;
    case Pooling::kGeM: sat.emplace(map.values.array().pow(cfg.gem_p).matrix()); break;
    case Pooling::kMax: maxima = detail::window_max(map.values, kernel); break;
  }

  auto score_rows = [&](std::size_t row_begin, std::size_t row_end,
                        std::vector<RegionCandidate>& out) {
    out.reserve((row_end - row_begin) * nx);
    for (std::size_t iy = row_begin; iy < row_end; ++iy)
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const std::size_t y = iy * cfg.stride;
        const std::size_t x = ix * cfg.stride;
        const BoundingBox box{x, y, x + kernel.width, y + kernel.height};
        double s = 0.0;
        switch (cfg.pooling) {
          case Pooling::kAverage: s = sat->sum(box) / area; break;
          case Pooling::kGeM:
            s = std::pow(std::max(0.0, sat->sum(box) / area), 1.0 / cfg.gem_p);
            break;
          case Pooling::kMax:
            s = maxima(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x));
            break;
        }
        out.push_back({box, s});
      }
  };

  const std::size_t workers = std::clamp<std::size_t>(cfg.threads, 1, ny);
  std::vector<std::vector<RegionCandidate>> strips(workers);
  if (workers == 1) {
    score_rows(0, ny, strips[0]);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t)
      pool.emplace_back(score_rows, ny * t / workers, ny * (t + 1) / workers,
                        std::ref(strips[t]));
    for (auto& th : pool) th.join();
  }
  std::vector<RegionCandidate> all;
  all.reserve(ny * nx);
  for (auto& s : strips) all.insert(all.end(), s.begin(), s.end());
  std::stable_sort(all.begin(), all.end(),
                   [](const RegionCandidate& a, const RegionCandidate& b) {
                     return a.score > b.score;
                   });
  return all;
}

inline std::vector<RegionCandidate> score_windows(const AttentionMap& map,
                                                  const ScoringConfig& cfg) {
  return score_windows(map, kernel_from_object(map.rows(), map.cols(), cfg), cfg);
}

// Greedy NMS: accept the best remaining candidate, drop everything with
// IoU > threshold against an accepted one, stop after top_k.
inline std::vector<RegionCandidate> nms_topk(std::vector<RegionCandidate> candidates,
                                             double iou_threshold,
                                             std::size_t top_k) {
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const RegionCandidate& a, const RegionCandidate& b) {
                     return a.score > b.score;
                   });
  std::vector<RegionCandidate> kept;
  for (const auto& c : candidates) {
    if (kept.size() >= top_k) break;
    const bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const auto& k) {
      return iou(k.box, c.box) > iou_threshold;
    });
    if (!overlaps) kept.push_back(c);
  }
  return kept;
}

inline std::vector<RegionCandidate> select_parts(const AttentionMap& object_map,
                                                 const ScoringConfig& cfg) {
  return nms_topk(score_windows(object_map, cfg), cfg.iou_threshold, cfg.top_k);
}

}  // namespace attnscope
