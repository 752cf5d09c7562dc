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

#include "attnscope/head.hpp"
#include "attnscope/testing/checks.hpp"

#include <gtest/gtest.h>

namespace attnscope {
namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

HeadWeights random_head(gen::Engine& e, std::size_t in, std::size_t hidden, std::size_t classes) {
  HeadWeights h = HeadWeights::zeros(in, hidden, classes);
  for (Matrix* m : {&h.w1, &h.w2})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = gen::real(e, -0.5, 0.5);
  for (Vector* v : {&h.b1, &h.b2})
    for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = gen::real(e, -0.1, 0.1);
  return h;
}

TEST(ClassifyHead, ZeroWeightsGiveZeroLogits) {
  const HeadWeights h = HeadWeights::zeros(8, 4, 3);
  EXPECT_EQ(classify_head(Vector::Constant(8, 2.5), h), Vector::Zero(3));
}

TEST(ClassifyHead, HandComputedThreeDimCase) {
  // pre = x + b1 = (1, -1.5, -1) -> relu (1, 0, 0); logits = W2 (1,0,0) + b2.
  HeadWeights h = HeadWeights::zeros(3, 3, 3);
  h.w1 = Matrix::Identity(3, 3);
  h.b1 = vec({0.0, 0.5, -4.0});
  h.w2 << 1, 1, 1, 2, 0, 0, 0, 0, -1;
  h.b2 = vec({0.1, 0.0, 0.0});
  const Vector logits = classify_head(vec({1.0, -2.0, 3.0}), h);
  EXPECT_DOUBLE_EQ(logits(0), 1.1);
  EXPECT_DOUBLE_EQ(logits(1), 2.0);
  EXPECT_DOUBLE_EQ(logits(2), 0.0);

  // Identity head passes the positive channels only.
  HeadWeights id = HeadWeights::zeros(3, 3, 3);
  id.w1 = Matrix::Identity(3, 3);
  id.w2 = Matrix::Identity(3, 3);
  EXPECT_EQ(classify_head(vec({-1.0, 2.0, -3.0}), id), vec({0.0, 2.0, 0.0}));
}

TEST(ClassifyHead, StandardizationIsApplied) {
  HeadWeights h = HeadWeights::zeros(2, 2, 2);
  h.w1 = Matrix::Identity(2, 2);
  h.w2 = Matrix::Identity(2, 2);
  h.input_shift = vec({1.0, 1.0});
  h.input_scale = vec({2.0, 0.5});
  EXPECT_EQ(classify_head(vec({3.0, 5.0}), h), vec({4.0, 2.0}));
}

TEST(ClassifyHead, WrongInputLengthIsRejected) {
  EXPECT_THROW(classify_head(Vector::Zero(3), HeadWeights::zeros(4, 2, 2)), ValidationError);
}

TEST(CrossEntropy, AnalyticValues) {
  EXPECT_NEAR(cross_entropy(Vector::Zero(5), 3), std::log(5.0), 1e-15);
  const double expected = std::log1p(2.0 * std::exp(-10.0));
  EXPECT_NEAR(cross_entropy(vec({10.0, 0.0, 0.0}), 0), expected, 1e-18);
  EXPECT_NEAR(expected, 9.08e-5, 5e-8);
  for (std::size_t label = 0; label < 4; ++label)
    EXPECT_EQ(cross_entropy(Vector::Constant(4, 7.0), label), cross_entropy(Vector::Constant(4, 7.0), 0));
}

TEST(CrossEntropy, StableForHugeLogits) {
  EXPECT_NEAR(cross_entropy(vec({1000.0, 0.0}), 1), 1000.0, 1e-9);
  EXPECT_EQ(cross_entropy(vec({1000.0, 0.0}), 0), 0.0);
  EXPECT_TRUE(std::isfinite(cross_entropy(vec({-1e300, 1e300}), 0)));
}

TEST(CrossEntropy, LabelOutOfRangeIsRejected) {
  EXPECT_THROW(cross_entropy(vec({1.0, 2.0}), 2), ValidationError);
}

TEST(CrossEntropy, MatchesLongDoubleOracleOnRandomLogits) {
  gen::Engine e(3);
  for (int i = 0; i < 500; ++i) {
    const std::size_t k = gen::count(e, 1, 12);
    const Vector l = gen::logits(e, k, gen::real(e, 0.01, 50.0));
    const std::size_t label = gen::count(e, 0, k - 1);
    const double ref = oracle::cross_entropy(std::vector<double>(l.data(), l.data() + l.size()), label);
    EXPECT_NEAR(cross_entropy(l, label), ref, 1e-12 * std::max(1.0, ref));
    EXPECT_GE(cross_entropy(l, label), 0.0);
  }
}

TEST(HeadGradient, MatchesFiniteDifferenceOn3Class4Dim) {
  gen::Engine e(17);
  HeadWeights h = random_head(e, 4, 5, 3);
  std::vector<LabeledToken> batch;
  std::vector<std::vector<LabeledToken>> singletons;
  for (int i = 0; i < 6; ++i) {
    batch.push_back({gen::logits(e, 4, 1.0), static_cast<std::size_t>(i % 3)});
    singletons.push_back({batch.back()});
  }
  const HeadLossGradient lg = head_loss_and_gradient(h, batch, static_cast<double>(batch.size()));
  const checks::detail::PlainHead plain{4, 5, 3, std::vector<double>(4, 0.0), std::vector<double>(4, 1.0)};
  const auto num = oracle::central_difference(
      [&](const std::vector<double>& p) { return checks::detail::plain_joint_loss(plain, p, singletons); },
      checks::detail::flatten(h), 1e-4);
  const auto ana = checks::detail::flatten(lg.grad);
  for (std::size_t i = 0; i < num.size(); ++i)
    EXPECT_LE(std::abs(num[i] - ana[i]) / std::max({std::abs(num[i]), std::abs(ana[i]), 1e-6}), 1e-4)
        << "parameter " << i;
  EXPECT_NEAR(lg.loss, checks::detail::plain_joint_loss(plain, checks::detail::flatten(h), singletons),
              1e-12);
}

TEST(HeadGradient, RandomizedToyInstances) {
  EXPECT_TRUE(checks::head_gradient_check(101, 20).pass);
}

TEST(HeadGradient, StandardizationReceivesNoGradient) {
  gen::Engine e(2);
  HeadWeights h = random_head(e, 3, 3, 2);
  const std::vector<LabeledToken> batch{{gen::logits(e, 3, 1.0), 1}};
  const HeadLossGradient lg = head_loss_and_gradient(h, batch, 1.0);
  const HeadWeights next = sgd_update(h, lg.grad, 0.1);
  EXPECT_EQ(next.input_shift, h.input_shift);
  EXPECT_EQ(next.input_scale, h.input_scale);
}

TEST(HeadTrainStep, ZeroLearningRateKeepsWeights) {
  gen::Engine e(4);
  const HeadWeights h = random_head(e, 4, 3, 3);
  const std::vector<LabeledToken> batch{{gen::logits(e, 4, 1.0), 2}};
  const HeadStep s = head_train_step(batch, h, 0.0);
  EXPECT_EQ(s.head, h);
  EXPECT_GT(s.mean_loss, 0.0);
}

TEST(HeadTrainStep, EmptyBatchAndNegativeRateAreRejected) {
  const HeadWeights h = HeadWeights::zeros(2, 2, 2);
  EXPECT_THROW(head_train_step({}, h, 0.1), ValidationError);
  const std::vector<LabeledToken> batch{{Vector::Zero(2), 0}};
  EXPECT_THROW(head_train_step(batch, h, -1.0), ValidationError);
}

TEST(HeadTrainStep, SingleSeparablePointConverges) {
  gen::Engine e(8);
  HeadWeights h = random_head(e, 4, 6, 3);
  const std::vector<LabeledToken> batch{{vec({1.0, -0.5, 0.3, 2.0}), 1}};
  double loss = 0.0;
  for (int step = 0; step < 200; ++step) {
    const HeadStep s = head_train_step(batch, h, 0.5);
    h = s.head;
    loss = s.mean_loss;
  }
  EXPECT_LT(cross_entropy(classify_head(batch[0].token, h), 1), 0.01);
  EXPECT_LT(loss, 0.02);
}

TEST(HeadStandardization, FitGivesZeroMeanUnitVariance) {
  gen::Engine e(6);
  std::vector<Vector> xs;
  for (int i = 0; i < 50; ++i) {
    Vector v = gen::logits(e, 3, 1.0);
    v(0) = 10.0 + 0.01 * v(0);
    v(2) = 4.0;  // constant dimension keeps unit scale
    xs.push_back(v);
  }
  HeadWeights h = HeadWeights::zeros(3, 2, 2);
  fit_input_standardization(h, xs);
  Vector mean = Vector::Zero(3), sq = Vector::Zero(3);
  for (const auto& x : xs) {
    const Vector z = h.standardize(x);
    mean += z;
    sq += z.cwiseAbs2();
  }
  mean /= 50.0;
  sq /= 50.0;
  EXPECT_NEAR(mean(0), 0.0, 1e-9);
  EXPECT_NEAR(sq(0), 1.0, 1e-9);
  EXPECT_NEAR(sq(1), 1.0, 1e-9);
  EXPECT_EQ(h.input_scale(2), 1.0);
}

TEST(ArgmaxLowest, TiesPickFirst) {
  EXPECT_EQ(argmax_lowest(vec({1.0, 3.0, 3.0})), 1u);
  EXPECT_EQ(argmax_lowest(vec({2.0})), 0u);
}

}  // namespace
}  // namespace attnscope
