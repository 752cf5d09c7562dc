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

// Minimal pre-norm ViT encoder. The forward pass returns the softmax
// attention of every head in every layer alongside the output tokens, so
// the same pass serves classification and localization.

#pragma once

#include "attnscope/common.hpp"
#include "attnscope/head.hpp"

#include <string>

namespace attnscope {

struct EncoderConfig {
  std::size_t image_side = 64;
  std::size_t patch_side = 8;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t embed_dim = 64;
  std::size_t mlp_hidden = 128;
  std::size_t n_classes = 2;
  std::size_t channels = 3;
  std::size_t head_hidden = 64;

  std::size_t grid_side() const { return image_side / patch_side; }
  std::size_t n_patches() const { return grid_side() * grid_side(); }
  std::size_t n_tokens() const { return n_patches() + 1; }
  std::size_t head_dim() const { return embed_dim / n_heads; }
  std::size_t patch_dim() const { return patch_side * patch_side * channels; }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v < 1) detail::fail("EncoderConfig: ", name, " must be >= 1");
    };
    positive(image_side, "image_side");
    positive(patch_side, "patch_side");
    positive(n_layers, "n_layers");
    positive(n_heads, "n_heads");
    positive(embed_dim, "embed_dim");
    positive(mlp_hidden, "mlp_hidden");
    positive(n_classes, "n_classes");
    positive(channels, "channels");
    positive(head_hidden, "head_hidden");
    if (image_side % patch_side != 0)
      detail::fail("EncoderConfig: image_side ", image_side,
                   " not divisible by patch_side ", patch_side);
    if (embed_dim % n_heads != 0)
      detail::fail("EncoderConfig: embed_dim ", embed_dim,
                   " not divisible by n_heads ", n_heads);
  }

  // Sub-second desk-scale configuration used by the tests.
  static EncoderConfig toy() { return {}; }

  // ViT-B/16 at 384 px with a CUB-sized head; used for shape checks only.
  static EncoderConfig reference() {
    EncoderConfig c;
    c.image_side = 384;
    c.patch_side = 16;
    c.n_layers = 12;
    c.n_heads = 12;
    c.embed_dim = 768;
    c.mlp_hidden = 3072;
    c.n_classes = 200;
    c.channels = 3;
    c.head_hidden = 768;
    return c;
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct BlockWeights {
  Vector norm1_w, norm1_b;
  Matrix qkv_w;  // 3E x E, rows ordered [q; k; v]
  Vector qkv_b;
  Matrix proj_w;  // E x E
  Vector proj_b;
  Vector norm2_w, norm2_b;
  Matrix fc1_w;  // M x E
  Vector fc1_b;
  Matrix fc2_w;  // E x M
  Vector fc2_b;
};

struct WeightSet {
  Matrix patch_w;  // E x patch_dim
  Vector patch_b;
  Vector cls_token;
  Matrix pos_embed;  // tokens x E
  std::vector<BlockWeights> blocks;
  Vector norm_w, norm_b;
  HeadWeights head;
};

namespace detail {

template <typename WS, typename F>
void visit_vec(F& f, const std::string& name, WS& v) {
  f(name, std::vector<std::size_t>{static_cast<std::size_t>(v.size())}, v);
}

template <typename WS, typename F>
void visit_mat(F& f, const std::string& name, WS& m) {
  f(name,
    std::vector<std::size_t>{static_cast<std::size_t>(m.rows()),
                             static_cast<std::size_t>(m.cols())},
    m);
}

}  // namespace detail

// Calls f(name, shape, tensor) for every parameter in a fixed order. Works on
// const and mutable weight sets; tensor is a Matrix or Vector reference.
template <typename WS, typename F>
void visit_parameters(WS& w, F&& f) {
  detail::visit_mat(f, "patch_embed.weight", w.patch_w);
  detail::visit_vec(f, "patch_embed.bias", w.patch_b);
  detail::visit_vec(f, "cls_token", w.cls_token);
  detail::visit_mat(f, "pos_embed", w.pos_embed);
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    auto& b = w.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    detail::visit_vec(f, p + "norm1.weight", b.norm1_w);
    detail::visit_vec(f, p + "norm1.bias", b.norm1_b);
    detail::visit_mat(f, p + "attn.qkv.weight", b.qkv_w);
    detail::visit_vec(f, p + "attn.qkv.bias", b.qkv_b);
    detail::visit_mat(f, p + "attn.proj.weight", b.proj_w);
    detail::visit_vec(f, p + "attn.proj.bias", b.proj_b);
    detail::visit_vec(f, p + "norm2.weight", b.norm2_w);
    detail::visit_vec(f, p + "norm2.bias", b.norm2_b);
    detail::visit_mat(f, p + "mlp.fc1.weight", b.fc1_w);
    detail::visit_vec(f, p + "mlp.fc1.bias", b.fc1_b);
    detail::visit_mat(f, p + "mlp.fc2.weight", b.fc2_w);
    detail::visit_vec(f, p + "mlp.fc2.bias", b.fc2_b);
  }
  detail::visit_vec(f, "norm.weight", w.norm_w);
  detail::visit_vec(f, "norm.bias", w.norm_b);
  detail::visit_mat(f, "head.fc1.weight", w.head.w1);
  detail::visit_vec(f, "head.fc1.bias", w.head.b1);
  detail::visit_mat(f, "head.fc2.weight", w.head.w2);
  detail::visit_vec(f, "head.fc2.bias", w.head.b2);
  detail::visit_vec(f, "head.input.shift", w.head.input_shift);
  detail::visit_vec(f, "head.input.scale", w.head.input_scale);
}

inline bool is_norm_weight(const std::string& name) {
  return name.ends_with("norm1.weight") || name.ends_with("norm2.weight") ||
         name == "norm.weight" || name == "head.input.scale";
}
inline bool is_norm_bias(const std::string& name) {
  return name.ends_with("norm1.bias") || name.ends_with("norm2.bias") ||
         name == "norm.bias" || name == "head.input.shift";
}

// Zero-filled weights with the shapes implied by the config.
inline WeightSet allocate_weights(const EncoderConfig& c) {
  c.validate();
  const auto E = static_cast<Eigen::Index>(c.embed_dim);
  const auto M = static_cast<Eigen::Index>(c.mlp_hidden);
  WeightSet w;
  w.patch_w = Matrix::Zero(E, static_cast<Eigen::Index>(c.patch_dim()));
  w.patch_b = Vector::Zero(E);
  w.cls_token = Vector::Zero(E);
  w.pos_embed = Matrix::Zero(static_cast<Eigen::Index>(c.n_tokens()), E);
  w.blocks.resize(c.n_layers);
  for (auto& b : w.blocks) {
    b.norm1_w = Vector::Ones(E);
    b.norm1_b = Vector::Zero(E);
    b.qkv_w = Matrix::Zero(3 * E, E);
    b.qkv_b = Vector::Zero(3 * E);
    b.proj_w = Matrix::Zero(E, E);
    b.proj_b = Vector::Zero(E);
    b.norm2_w = Vector::Ones(E);
    b.norm2_b = Vector::Zero(E);
    b.fc1_w = Matrix::Zero(M, E);
    b.fc1_b = Vector::Zero(M);
    b.fc2_w = Matrix::Zero(E, M);
    b.fc2_b = Vector::Zero(E);
  }
  w.norm_w = Vector::Ones(E);
  w.norm_b = Vector::Zero(E);
  w.head = HeadWeights::zeros(c.embed_dim, c.head_hidden, c.n_classes);
  return w;
}

// Uniform [-scale, scale] for every projection, bias and embedding; layer
// norms start at unit gain and zero shift. Values are rounded to float so a
// save/load cycle reproduces them exactly.
inline WeightSet init_weights(const EncoderConfig& c, std::uint64_t seed,
                              double scale = 0.02) {
  WeightSet w = allocate_weights(c);
  Rng rng(seed);
  visit_parameters(w, [&](const std::string& name, const auto&, auto& t) {
    if (is_norm_weight(name) || is_norm_bias(name)) return;
    for (Eigen::Index i = 0; i < t.size(); ++i)
      t.data()[i] = static_cast<double>(
          static_cast<float>(uniform(rng, -scale, scale)));
  });
  return w;
}

// Throws ValidationError naming the first tensor whose shape disagrees.
inline void check_weights(const WeightSet& w, const EncoderConfig& c) {
  const WeightSet ref = allocate_weights(c);
  if (w.blocks.size() != ref.blocks.size())
    detail::fail("weights: ", w.blocks.size(), " blocks, config expects ",
                 ref.blocks.size());
  std::vector<std::vector<std::size_t>> want;
  visit_parameters(ref, [&](const std::string&, const auto& shape,
                            const auto&) { want.push_back(shape); });
  std::size_t i = 0;
  visit_parameters(w, [&](const std::string& name, const auto& shape,
                          const auto& t) {
    if (shape != want[i])
      detail::fail("weights: tensor '", name, "' has wrong shape");
    if (!t.allFinite())
      detail::fail("weights: tensor '", name, "' has non-finite values");
    ++i;
  });
}

// FNV-1a over every parameter's bytes; equal digests before and after a run
// show the weights were not mutated.
inline std::uint64_t weights_digest(const WeightSet& w) {
  std::uint64_t h = 1469598103934665603ull;
  visit_parameters(w, [&](const std::string&, const auto&, const auto& t) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(t.size()) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  });
  return h;
}

// (n_patches + 1) x embed_dim; row 0 is the CLS token.
struct TokenSequence {
  Matrix values;

  std::size_t count() const { return static_cast<std::size_t>(values.rows()); }
  Vector cls() const { return values.row(0).transpose(); }
};

// n_layers x n_heads matrices, each tokens x tokens and row-stochastic.
struct AttentionStack {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t tokens = 0;
  std::vector<Matrix> weights;  // layer-major

  AttentionStack() = default;
  AttentionStack(std::size_t l, std::size_t h, std::size_t t)
      : layers(l), heads(h), tokens(t),
        weights(l * h, Matrix::Zero(static_cast<Eigen::Index>(t),
                                    static_cast<Eigen::Index>(t))) {}

  Matrix& at(std::size_t layer, std::size_t head) {
    return weights[layer * heads + head];
  }
  const Matrix& at(std::size_t layer, std::size_t head) const {
    return weights[layer * heads + head];
  }
  bool empty() const { return weights.empty(); }

  friend bool operator==(const AttentionStack& a, const AttentionStack& b) {
    return a.layers == b.layers && a.heads == b.heads && a.tokens == b.tokens &&
           a.weights == b.weights;
  }
};

// Largest |row sum - 1| and smallest entry over the stack.
struct StochasticityReport {
  double max_row_error = 0.0;
  double min_entry = 0.0;
};

inline StochasticityReport check_row_stochastic(const AttentionStack& s) {
  StochasticityReport r{0.0, std::numeric_limits<double>::infinity()};
  for (const auto& m : s.weights) {
    r.max_row_error = std::max(
        r.max_row_error, (m.rowwise().sum().array() - 1.0).abs().maxCoeff());
    r.min_entry = std::min(r.min_entry, m.minCoeff());
  }
  return r;
}

inline TokenSequence patch_embed(const Image& image, const EncoderConfig& c,
                                 const WeightSet& w) {
  c.validate();
  if (image.height != c.image_side || image.width != c.image_side)
    detail::fail("patch_embed: image is ", image.height, "x", image.width,
                 ", encoder expects ", c.image_side, "x", c.image_side);
  if (image.channels != c.channels ||
      static_cast<std::size_t>(w.patch_w.cols()) != c.patch_dim())
    detail::fail("patch_embed: image has ", image.channels,
                 " channels, projection expects ",
                 w.patch_w.cols() / static_cast<Eigen::Index>(c.patch_side * c.patch_side));
  if (static_cast<std::size_t>(w.patch_w.rows()) != c.embed_dim ||
      static_cast<std::size_t>(w.pos_embed.rows()) != c.n_tokens())
    detail::fail("patch_embed: weights do not match the encoder config");

  const std::size_t g = c.grid_side();
  const std::size_t p = c.patch_side;
  Matrix patches(static_cast<Eigen::Index>(c.n_patches()),
                 static_cast<Eigen::Index>(c.patch_dim()));
  for (std::size_t gy = 0; gy < g; ++gy)
    for (std::size_t gx = 0; gx < g; ++gx) {
      const auto row = static_cast<Eigen::Index>(gy * g + gx);
      Eigen::Index k = 0;
      for (std::size_t py = 0; py < p; ++py)
        for (std::size_t px = 0; px < p; ++px)
          for (std::size_t ch = 0; ch < c.channels; ++ch)
            patches(row, k++) = image.at(gy * p + py, gx * p + px, ch);
    }

  TokenSequence out;
  out.values.resize(static_cast<Eigen::Index>(c.n_tokens()),
                    static_cast<Eigen::Index>(c.embed_dim));
  out.values.row(0) = w.cls_token.transpose();
  out.values.bottomRows(static_cast<Eigen::Index>(c.n_patches())).noalias() =
      patches * w.patch_w.transpose();
  out.values.bottomRows(static_cast<Eigen::Index>(c.n_patches())).rowwise() +=
      w.patch_b.transpose();
  out.values += w.pos_embed;
  return out;
}

namespace detail {

inline Matrix layer_norm(const Matrix& x, const Vector& gain,
                         const Vector& shift, double eps = 1e-6) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    out.row(r) = ((x.row(r).array() - mean) * inv * gain.transpose().array() +
                  shift.transpose().array())
                     .matrix();
  }
  return out;
}

inline Matrix linear(const Matrix& x, const Matrix& w, const Vector& b) {
  Matrix y = x * w.transpose();
  y.rowwise() += b.transpose();
  return y;
}

inline void softmax_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp().matrix();
    m.row(r) /= m.row(r).sum();
  }
}

inline double gelu(double v) {
  return 0.5 * v * (1.0 + std::erf(v * 0.70710678118654752440));
}

}  // namespace detail

struct EncoderOutput {
  TokenSequence tokens;
  AttentionStack attention;
};

inline EncoderOutput encoder_forward(const TokenSequence& input,
                                     const EncoderConfig& c,
                                     const WeightSet& w) {
  c.validate();
  if (input.count() != c.n_tokens() ||
      static_cast<std::size_t>(input.values.cols()) != c.embed_dim)
    detail::fail("encoder_forward: tokens are ", input.values.rows(), "x",
                 input.values.cols(), ", config expects ", c.n_tokens(), "x",
                 c.embed_dim);
  if (w.blocks.size() != c.n_layers)
    detail::fail("encoder_forward: weights have ", w.blocks.size(),
                 " blocks, config expects ", c.n_layers);

  const auto T = static_cast<Eigen::Index>(c.n_tokens());
  const auto E = static_cast<Eigen::Index>(c.embed_dim);
  const auto dh = static_cast<Eigen::Index>(c.head_dim());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  EncoderOutput out;
  out.attention = AttentionStack(c.n_layers, c.n_heads, c.n_tokens());
  Matrix x = input.values;
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const auto& b = w.blocks[l];
    const Matrix qkv =
        detail::linear(detail::layer_norm(x, b.norm1_w, b.norm1_b), b.qkv_w,
                       b.qkv_b);
    Matrix context(T, E);
    for (std::size_t h = 0; h < c.n_heads; ++h) {
      const auto off = static_cast<Eigen::Index>(h) * dh;
      Matrix& a = out.attention.at(l, h);
      a.noalias() = qkv.middleCols(off, dh) *
                    qkv.middleCols(E + off, dh).transpose();
      a *= scale;
      detail::softmax_rows(a);
      context.middleCols(off, dh).noalias() =
          a * qkv.middleCols(2 * E + off, dh);
    }
    x += detail::linear(context, b.proj_w, b.proj_b);
    Matrix hidden =
        detail::linear(detail::layer_norm(x, b.norm2_w, b.norm2_b), b.fc1_w,
                       b.fc1_b);
    hidden = hidden.unaryExpr(&detail::gelu);
    x += detail::linear(hidden, b.fc2_w, b.fc2_b);
    if (!x.allFinite() || !qkv.allFinite())
      throw NumericError(
          detail::concat("encoder_forward: non-finite activations in layer ", l),
          l);
  }
  out.tokens.values = detail::layer_norm(x, w.norm_w, w.norm_b);
  return out;
}

inline EncoderOutput encode_image(const Image& image, const EncoderConfig& c,
                                  const WeightSet& w) {
  return encoder_forward(patch_embed(image, c, w), c, w);
}

}  // namespace attnscope
