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

// Reference implementations used by the test suite and `selftest`.
//
// Each oracle recomputes a library result the slow, obvious way on plain
// std::vector data and shares no code with the implementation it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace attnscope::oracle {

using Grid = std::vector<std::vector<double>>;
using Bits = std::vector<std::vector<int>>;

inline Grid matmul(const Grid& a, const Grid& b) {
  const std::size_t n = a.size(), m = b.empty() ? 0 : b[0].size(), k = b.size();
  Grid out(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      long double s = 0.0L;
      for (std::size_t t = 0; t < k; ++t) s += static_cast<long double>(a[i][t]) * b[t][j];
      out[i][j] = static_cast<double>(s);
    }
  return out;
}

// heads[h] is a tokens x tokens matrix; mean over heads, mix with identity,
// renormalize rows.
inline Grid fuse_layer(const std::vector<Grid>& heads, double residual) {
  const std::size_t T = heads[0].size();
  Grid out(T, std::vector<double>(T, 0.0));
  for (std::size_t i = 0; i < T; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < T; ++j) {
      double mean = 0.0;
      for (const auto& h : heads) mean += h[i][j];
      mean /= static_cast<double>(heads.size());
      out[i][j] = (1.0 - residual) * mean + (i == j ? residual : 0.0);
      row += out[i][j];
    }
    for (std::size_t j = 0; j < T; ++j) out[i][j] /= row;
  }
  return out;
}

// layers[l][h] indexed like the attention stack; returns the cumulative
// product fused_{N-1} ... fused_0.
inline Grid rollout(const std::vector<std::vector<Grid>>& layers, double residual) {
  Grid joint = fuse_layer(layers[0], residual);
  for (std::size_t l = 1; l < layers.size(); ++l)
    joint = matmul(fuse_layer(layers[l], residual), joint);
  return joint;
}

inline double max_row_sum_error(const Grid& m) {
  double worst = 0.0;
  for (const auto& row : m) {
    double s = 0.0;
    for (double v : row) s += v;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

inline bool nonnegative(const Grid& m) {
  for (const auto& row : m)
    for (double v : row)
      if (v < 0.0) return false;
  return true;
}

// Windows of kh x kw at every stride-th top-left corner; out[iy][ix].
inline Grid window_average(const Grid& map, std::size_t kh, std::size_t kw,
                           std::size_t stride) {
  Grid out;
  for (std::size_t y = 0; y + kh <= map.size(); y += stride) {
    std::vector<double> row;
    for (std::size_t x = 0; x + kw <= map[0].size(); x += stride) {
      double s = 0.0;
      for (std::size_t dy = 0; dy < kh; ++dy)
        for (std::size_t dx = 0; dx < kw; ++dx) s += map[y + dy][x + dx];
      row.push_back(s / static_cast<double>(kh * kw));
    }
    out.push_back(row);
  }
  return out;
}

inline Grid window_max(const Grid& map, std::size_t kh, std::size_t kw,
                       std::size_t stride) {
  Grid out;
  for (std::size_t y = 0; y + kh <= map.size(); y += stride) {
    std::vector<double> row;
    for (std::size_t x = 0; x + kw <= map[0].size(); x += stride) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t dy = 0; dy < kh; ++dy)
        for (std::size_t dx = 0; dx < kw; ++dx) m = std::max(m, map[y + dy][x + dx]);
      row.push_back(m);
    }
    out.push_back(row);
  }
  return out;
}

inline Grid window_gem(const Grid& map, std::size_t kh, std::size_t kw,
                       std::size_t stride, double p) {
  Grid out;
  for (std::size_t y = 0; y + kh <= map.size(); y += stride) {
    std::vector<double> row;
    for (std::size_t x = 0; x + kw <= map[0].size(); x += stride) {
      double s = 0.0;
      for (std::size_t dy = 0; dy < kh; ++dy)
        for (std::size_t dx = 0; dx < kw; ++dx) s += std::pow(map[y + dy][x + dx], p);
      row.push_back(std::pow(s / static_cast<double>(kh * kw), 1.0 / p));
    }
    out.push_back(row);
  }
  return out;
}

struct Box {
  std::size_t x0, y0, x1, y1;
};

// Counts overlapping pixels one by one.
inline double iou(const Box& a, const Box& b) {
  std::size_t inter = 0;
  for (std::size_t y = std::max(a.y0, b.y0); y < std::min(a.y1, b.y1); ++y)
    for (std::size_t x = std::max(a.x0, b.x0); x < std::min(a.x1, b.x1); ++x)
      ++inter;
  const double area_a = static_cast<double>((a.x1 - a.x0) * (a.y1 - a.y0));
  const double area_b = static_cast<double>((b.x1 - b.x0) * (b.y1 - b.y0));
  const double uni = area_a + area_b - static_cast<double>(inter);
  return uni > 0.0 ? static_cast<double>(inter) / uni : 0.0;
}

// Repeatedly takes the highest remaining score (lowest index on ties) and
// deletes everything overlapping it by more than the threshold. Returns
// indices into the input.
inline std::vector<std::size_t> greedy_nms(const std::vector<Box>& boxes,
                                           const std::vector<double>& scores,
                                           double threshold, std::size_t k) {
  std::vector<bool> alive(boxes.size(), true);
  std::vector<std::size_t> kept;
  while (kept.size() < k) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (alive[i] && (best == boxes.size() || scores[i] > scores[best])) best = i;
    if (best == boxes.size()) break;
    kept.push_back(best);
    alive[best] = false;
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (alive[i] && iou(boxes[best], boxes[i]) > threshold) alive[i] = false;
  }
  return kept;
}

// Breadth-first flood fill seeded in row-major order; labels 1..n.
inline std::vector<std::vector<std::size_t>> flood_labels(const Bits& mask,
                                                          bool eight) {
  const std::size_t R = mask.size(), C = R ? mask[0].size() : 0;
  std::vector<std::vector<std::size_t>> lab(R, std::vector<std::size_t>(C, 0));
  std::size_t next = 0;
  for (std::size_t sy = 0; sy < R; ++sy)
    for (std::size_t sx = 0; sx < C; ++sx) {
      if (!mask[sy][sx] || lab[sy][sx]) continue;
      ++next;
      std::vector<std::pair<std::size_t, std::size_t>> queue{{sy, sx}};
      lab[sy][sx] = next;
      for (std::size_t q = 0; q < queue.size(); ++q) {
        const auto [y, x] = queue[q];
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            if (!eight && dy != 0 && dx != 0) continue;
            const long ny = static_cast<long>(y) + dy, nx = static_cast<long>(x) + dx;
            if (ny < 0 || nx < 0 || ny >= static_cast<long>(R) || nx >= static_cast<long>(C))
              continue;
            if (!mask[ny][nx] || lab[ny][nx]) continue;
            lab[ny][nx] = next;
            queue.push_back({static_cast<std::size_t>(ny), static_cast<std::size_t>(nx)});
          }
      }
    }
  return lab;
}

// Square structuring element of the given radius, clipped at the frame.
inline Bits dilate(const Bits& m, std::size_t r) {
  const long R = static_cast<long>(m.size()), C = static_cast<long>(m[0].size());
  const long rr = static_cast<long>(r);
  Bits out(m.size(), std::vector<int>(m[0].size(), 0));
  for (long y = 0; y < R; ++y)
    for (long x = 0; x < C; ++x)
      for (long dy = -rr; dy <= rr && !out[y][x]; ++dy)
        for (long dx = -rr; dx <= rr; ++dx) {
          const long ny = y + dy, nx = x + dx;
          if (ny >= 0 && nx >= 0 && ny < R && nx < C && m[ny][nx]) {
            out[y][x] = 1;
            break;
          }
        }
  return out;
}

inline Bits erode(const Bits& m, std::size_t r) {
  const long R = static_cast<long>(m.size()), C = static_cast<long>(m[0].size());
  const long rr = static_cast<long>(r);
  Bits out(m.size(), std::vector<int>(m[0].size(), 1));
  for (long y = 0; y < R; ++y)
    for (long x = 0; x < C; ++x)
      for (long dy = -rr; dy <= rr && out[y][x]; ++dy)
        for (long dx = -rr; dx <= rr; ++dx) {
          const long ny = y + dy, nx = x + dx;
          if (ny >= 0 && nx >= 0 && ny < R && nx < C && !m[ny][nx]) {
            out[y][x] = 0;
            break;
          }
        }
  return out;
}

// Closing in the unbounded plane: the mask sits on an infinite background, so
// a pad of r background pixels is enough before cropping back.
inline Bits close(const Bits& m, std::size_t r) {
  const std::size_t R = m.size(), C = m[0].size();
  Bits padded(R + 2 * r, std::vector<int>(C + 2 * r, 0));
  for (std::size_t y = 0; y < R; ++y)
    for (std::size_t x = 0; x < C; ++x) padded[y + r][x + r] = m[y][x];
  const Bits closed = erode(dilate(padded, r), r);
  Bits out(R, std::vector<int>(C, 0));
  for (std::size_t y = 0; y < R; ++y)
    for (std::size_t x = 0; x < C; ++x) out[y][x] = closed[y + r][x + r];
  return out;
}

// Cross-entropy as -log softmax in long double.
inline double cross_entropy(const std::vector<double>& logits, std::size_t label) {
  long double m = logits[0];
  for (double v : logits) m = std::max<long double>(m, v);
  long double s = 0.0L;
  for (double v : logits) s += std::exp(static_cast<long double>(v) - m);
  return static_cast<double>(m + std::log(s) - logits[label]);
}

// Central differences of f over each coordinate of x.
inline std::vector<double> central_difference(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double eps) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = f(x);
    x[i] = keep - eps;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

}  // namespace attnscope::oracle
