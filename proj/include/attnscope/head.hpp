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

// Two-layer ReLU classification head over the CLS embedding, softmax
// cross-entropy, and the exact head gradient used for training.
//
// The head is the only trainable part of the model; the encoder is frozen,
// so every gradient here stops at the CLS token.

#pragma once

#include "attnscope/common.hpp"

#include <span>

namespace attnscope {

struct HeadWeights {
  Matrix w1;  // hidden x embed
  Vector b1;  // hidden
  Matrix w2;  // classes x hidden
  Vector b2;  // classes
  // Frozen input standardization x' = (x - input_shift) .* input_scale.
  // Identity by default; the trainer fits it once from training embeddings.
  Vector input_shift;
  Vector input_scale;

  std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t n_classes() const { return static_cast<std::size_t>(w2.rows()); }

  Vector standardize(const Vector& x) const {
    return ((x - input_shift).array() * input_scale.array()).matrix();
  }

  static HeadWeights zeros(std::size_t input, std::size_t hidden,
                           std::size_t classes) {
    const auto in = static_cast<Eigen::Index>(input);
    return {Matrix::Zero(hidden, in), Vector::Zero(hidden),
            Matrix::Zero(classes, hidden), Vector::Zero(classes),
            Vector::Zero(in), Vector::Ones(in)};
  }
  static HeadWeights zeros_like(const HeadWeights& h) {
    return zeros(h.input_dim(), h.hidden_dim(), h.n_classes());
  }
};

inline bool operator==(const HeadWeights& a, const HeadWeights& b) {
  return a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2 &&
         a.input_shift == b.input_shift && a.input_scale == b.input_scale;
}

// Per-dimension mean and 1/std of the given embeddings; dimensions with
// (near) zero spread keep unit scale.
inline void fit_input_standardization(HeadWeights& head,
                                      std::span<const Vector> embeddings) {
  if (embeddings.empty()) detail::fail("fit_input_standardization: no embeddings");
  const auto n = static_cast<double>(embeddings.size());
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(head.input_dim()));
  for (const auto& e : embeddings) mean += e;
  mean /= n;
  Vector var = Vector::Zero(mean.size());
  for (const auto& e : embeddings) var += (e - mean).cwiseAbs2();
  var /= n;
  head.input_shift = mean;
  head.input_scale = var.unaryExpr(
      [](double v) { return v > 1e-24 ? 1.0 / std::sqrt(v) : 1.0; });
}

inline void check_head_input(const Vector& x, const HeadWeights& head) {
  if (static_cast<std::size_t>(x.size()) != head.input_dim())
    detail::fail("classify_head: token length ", x.size(),
                 " != head input dim ", head.input_dim());
}

// W2 * relu(W1 x + b1) + b2, x the standardized CLS embedding.
inline Vector classify_head(const Vector& cls_token, const HeadWeights& head) {
  check_head_input(cls_token, head);
  const Vector hidden =
      (head.w1 * head.standardize(cls_token) + head.b1).cwiseMax(0.0);
  return head.w2 * hidden + head.b2;
}

inline double log_sum_exp(const Vector& logits) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

inline Vector softmax(const Vector& logits) {
  const Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

inline double cross_entropy(const Vector& logits, std::size_t label) {
  if (logits.size() == 0) detail::fail("cross_entropy: empty logits");
  if (label >= static_cast<std::size_t>(logits.size()))
    detail::fail("cross_entropy: label ", label, " out of range [0, ",
                 logits.size(), ")");
  // log1p path keeps precision when the target dominates.
  const Eigen::Index target = static_cast<Eigen::Index>(label);
  double rest = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (i != target) rest += std::exp(logits(i) - logits(target));
  if (rest < 1.0) return std::log1p(rest);
  return log_sum_exp(logits) - logits(target);
}

struct LabeledToken {
  Vector token;
  std::size_t label = 0;
};

struct HeadLossGradient {
  double loss = 0.0;  // sum of cross-entropies / normalizer
  HeadWeights grad;
};

// Loss and exact gradient of (1/normalizer) * sum_i CE(head(x_i), y_i).
// normalizer = samples.size() gives the mean; the joint-loss trainer passes
// the image count so each image contributes the sum over its stages.
inline HeadLossGradient head_loss_and_gradient(
    const HeadWeights& head, std::span<const LabeledToken> samples,
    double normalizer) {
  if (samples.empty()) detail::fail("head gradient: empty batch");
  if (!(normalizer > 0.0)) detail::fail("head gradient: normalizer must be > 0");
  HeadLossGradient out{0.0, HeadWeights::zeros_like(head)};
  for (const auto& s : samples) {
    check_head_input(s.token, head);
    if (s.label >= head.n_classes())
      detail::fail("head gradient: label ", s.label, " out of range");
    const Vector x = head.standardize(s.token);
    const Vector pre = head.w1 * x + head.b1;
    const Vector hidden = pre.cwiseMax(0.0);
    const Vector logits = head.w2 * hidden + head.b2;
    out.loss += cross_entropy(logits, s.label);

    Vector dlogits = softmax(logits);
    dlogits(static_cast<Eigen::Index>(s.label)) -= 1.0;
    out.grad.w2.noalias() += dlogits * hidden.transpose();
    out.grad.b2 += dlogits;
    Vector dpre = head.w2.transpose() * dlogits;
    for (Eigen::Index j = 0; j < dpre.size(); ++j)
      if (pre(j) <= 0.0) dpre(j) = 0.0;
    out.grad.w1.noalias() += dpre * x.transpose();
    out.grad.b1 += dpre;
  }
  const double inv = 1.0 / normalizer;
  out.loss *= inv;
  out.grad.w1 *= inv;
  out.grad.b1 *= inv;
  out.grad.w2 *= inv;
  out.grad.b2 *= inv;
  return out;
}

struct HeadStep {
  HeadWeights head;
  double mean_loss = 0.0;  // before the update
};

// Updates the trainable tensors only; the standardization stays frozen.
inline HeadWeights sgd_update(const HeadWeights& head, const HeadWeights& grad,
                              double learning_rate) {
  HeadWeights next = head;
  next.w1 -= learning_rate * grad.w1;
  next.b1 -= learning_rate * grad.b1;
  next.w2 -= learning_rate * grad.w2;
  next.b2 -= learning_rate * grad.b2;
  return next;
}

// One plain gradient-descent step on the batch-mean cross-entropy.
inline HeadStep head_train_step(std::span<const LabeledToken> batch,
                                const HeadWeights& head, double learning_rate) {
  if (!(learning_rate >= 0.0))
    detail::fail("head_train_step: learning_rate must be >= 0");
  if (batch.empty()) detail::fail("head_train_step: empty batch");
  auto lg = head_loss_and_gradient(head, batch,
                                   static_cast<double>(batch.size()));
  if (learning_rate == 0.0) return {head, lg.loss};
  return {sgd_update(head, lg.grad, learning_rate), lg.loss};
}

inline std::size_t argmax_lowest(const Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return static_cast<std::size_t>(best);
}

}  // namespace attnscope
