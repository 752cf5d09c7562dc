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

// Three-stage pipeline over one shared encoder:
//   a. full image at working resolution -> logits, rollout map, object box
//   b. object cropped from the high-resolution image -> logits
//   c. top-k part windows of the object map, cropped from the high-resolution
//      object region -> one logit vector per part
// plus the joint loss (sum of per-stage cross-entropies) and the head-only
// trainer that optimizes it.
//
// A run is split into a deterministic plan (crops, maps, boxes and clean CLS
// tokens) and a realization that applies train-time erasing and the head.
// With a frozen encoder the plan of a training image never changes, so the
// trainer computes it once and re-encodes only the inputs that get erased.

#pragma once

#include "attnscope/augment.hpp"
#include "attnscope/encoder.hpp"
#include "attnscope/head.hpp"
#include "attnscope/localization.hpp"
#include "attnscope/region_scoring.hpp"
#include "attnscope/rollout.hpp"

#include <optional>
#include <thread>

namespace attnscope {

enum class Mode { kEval, kTrain };
enum class PartMapSource { kCroppedStageA, kRecomputedStageB };

struct PipelineConfig {
  RolloutConfig rollout;
  LocalizationConfig localization;
  Interpolation upsample = Interpolation::kBilinear;
  PartMapSource part_map_source = PartMapSource::kCroppedStageA;
  std::size_t high_res_factor = 2;
};

struct StagePlan {
  Image input_a;
  Image input_b;
  std::vector<Image> inputs_c;

  AttentionMap map_patch;   // stage-a rollout on the patch grid
  AttentionMap map_full;    // stage-a map at working resolution
  AttentionMap map_object;  // map cropped to the object, working resolution
  std::vector<AttentionMap> maps_c;

  ObjectBox object;                      // working-resolution frame
  BoundingBox object_highres;            // high-resolution frame
  std::vector<RegionCandidate> parts;    // object frame (working resolution)
  std::vector<BoundingBox> parts_highres;

  Vector cls_a;
  Vector cls_b;
  std::vector<Vector> cls_c;
};

struct StageOutputs {
  Vector logits_a;
  std::optional<Vector> logits_b;
  std::vector<Vector> logits_c;

  Vector cls_a;
  std::optional<Vector> cls_b;
  std::vector<Vector> cls_c;

  AttentionMap map_full;
  ObjectBox box_object;
  std::vector<BoundingBox> part_boxes;  // object frame
  Image crop_b;
  std::vector<Image> crops_c;

  // Erase draws that fired, in stage order a, b, c_0, c_1, ...
  std::vector<bool> erased;
  std::uint64_t weights_digest = 0;
};

namespace detail {

inline void check_highres(const Image& image, const EncoderConfig& enc) {
  if (image.empty())
    fail("run_stages: empty input image");
  if (image.height < enc.image_side || image.width < enc.image_side)
    fail("run_stages: input ", image.width, "x", image.height,
         " is below the working resolution ", enc.image_side);
  if (image.channels != enc.channels)
    fail("run_stages: input has ", image.channels, " channels, encoder expects ",
         enc.channels);
}

}  // namespace detail

// Optional attention_override replaces the stage-a attention (for example
// attention exported by another model); stage-a logits still come from the
// built-in encoder.
inline StagePlan plan_stages(const Image& image_highres, const EncoderConfig& enc,
                             const WeightSet& weights, const ScoringConfig& scoring,
                             const PipelineConfig& cfg = {},
                             const AttentionStack* attention_override = nullptr) {
  enc.validate();
  scoring.validate();
  detail::check_highres(image_highres, enc);
  const std::size_t side = enc.image_side;

  StagePlan plan;
  plan.input_a = resize_image(image_highres, side, side);
  const EncoderOutput a = encode_image(plan.input_a, enc, weights);
  plan.cls_a = a.tokens.cls();
  const AttentionStack& attn_a = attention_override ? *attention_override : a.attention;
  plan.map_patch = rollout_map(attn_a, cfg.rollout);
  plan.map_full = upsample_map(plan.map_patch, side, side, cfg.upsample);

  plan.object = localize_object(plan.map_full, cfg.localization);
  ObjectCrop obj = crop_object(image_highres, plan.map_full, plan.object.box, side);
  plan.object.box = obj.box_map;
  plan.object_highres = obj.box_highres;
  plan.input_b = std::move(obj.image);
  plan.map_object = std::move(obj.map);
  const EncoderOutput b = encode_image(plan.input_b, enc, weights);
  plan.cls_b = b.tokens.cls();

  AttentionMap part_source = plan.map_object;
  if (cfg.part_map_source == PartMapSource::kRecomputedStageB) {
    part_source = upsample_map(rollout_map(b.attention, cfg.rollout), side, side,
                               cfg.upsample);
    part_source.source = MapSource::kObjectCrop;
  }
  plan.parts = select_parts(part_source, scoring);
  for (const auto& part : plan.parts) {
    BoundingBox hr = rescale_box(part.box, side, side, plan.object_highres.width(),
                                 plan.object_highres.height());
    hr.x0 += plan.object_highres.x0;
    hr.x1 += plan.object_highres.x0;
    hr.y0 += plan.object_highres.y0;
    hr.y1 += plan.object_highres.y0;
    plan.parts_highres.push_back(hr);
    plan.inputs_c.push_back(resize_image(crop_image(image_highres, hr), side, side));
    AttentionMap m;
    m.values = resize_grid(crop_grid(part_source.values, part.box), side, side);
    m.space = MapSpace::kPixelGrid;
    m.source = MapSource::kObjectCrop;
    plan.maps_c.push_back(std::move(m));
    plan.cls_c.push_back(encode_image(plan.inputs_c.back(), enc, weights).tokens.cls());
  }
  return plan;
}

// Applies train-time erasing (one independent draw per stage input, in order
// a, b, c_i) and the classification head.
inline StageOutputs realize_stages(const StagePlan& plan, const EncoderConfig& enc,
                                   const WeightSet& weights, const AugmentConfig& aug,
                                   Mode mode, Rng& rng) {
  StageOutputs out;
  auto token_for = [&](const Image& input, const AttentionMap& map,
                       const Vector& clean) -> Vector {
    if (mode != Mode::kTrain) return clean;
    const EraseResult e = attention_erase(input, map, aug, rng);
    out.erased.push_back(e.fired);
    if (!e.fired || e.erased == 0) return clean;
    return encode_image(e.image, enc, weights).tokens.cls();
  };
  out.cls_a = token_for(plan.input_a, plan.map_full, plan.cls_a);
  out.logits_a = classify_head(out.cls_a, weights.head);
  out.cls_b = token_for(plan.input_b, plan.map_object, plan.cls_b);
  out.logits_b = classify_head(*out.cls_b, weights.head);
  for (std::size_t i = 0; i < plan.inputs_c.size(); ++i) {
    out.cls_c.push_back(token_for(plan.inputs_c[i], plan.maps_c[i], plan.cls_c[i]));
    out.logits_c.push_back(classify_head(out.cls_c.back(), weights.head));
  }
  out.map_full = plan.map_full;
  out.box_object = plan.object;
  for (const auto& p : plan.parts) out.part_boxes.push_back(p.box);
  out.crop_b = plan.input_b;
  out.crops_c = plan.inputs_c;
  return out;
}

inline StageOutputs run_stages(const Image& image_highres, const EncoderConfig& enc,
                               const WeightSet& weights, const ScoringConfig& scoring,
                               const AugmentConfig& aug, Mode mode, Rng& rng,
                               const PipelineConfig& cfg = {},
                               const AttentionStack* attention_override = nullptr) {
  aug.validate();
  const std::uint64_t before = weights_digest(weights);
  const StagePlan plan =
      plan_stages(image_highres, enc, weights, scoring, cfg, attention_override);
  StageOutputs out = realize_stages(plan, enc, weights, aug, mode, rng);
  out.weights_digest = weights_digest(weights);
  if (out.weights_digest != before)
    throw std::logic_error("run_stages: encoder weights changed between stages");
  return out;
}

struct JointLoss {
  double l_a = 0.0;
  std::optional<double> l_b;
  std::vector<double> l_c;
  double total = 0.0;
};

inline JointLoss joint_loss(const StageOutputs& s, std::size_t label) {
  JointLoss j;
  j.l_a = cross_entropy(s.logits_a, label);
  j.total = j.l_a;
  if (s.logits_b) {
    j.l_b = cross_entropy(*s.logits_b, label);
    j.total += *j.l_b;
  }
  for (const auto& lc : s.logits_c) {
    j.l_c.push_back(cross_entropy(lc, label));
    j.total += j.l_c.back();
  }
  return j;
}

struct Prediction {
  std::size_t label = 0;
  Vector logits;
};

// Mean over the available stages; parts are averaged first so the part count
// does not outweigh stages a and b.
inline Prediction predict_combined(const StageOutputs& s) {
  if (s.logits_a.size() == 0) detail::fail("predict_combined: missing stage-a logits");
  Vector sum = s.logits_a;
  double n = 1.0;
  if (s.logits_b) {
    sum += *s.logits_b;
    n += 1.0;
  }
  if (!s.logits_c.empty()) {
    Vector parts = Vector::Zero(s.logits_a.size());
    for (const auto& lc : s.logits_c) parts += lc;
    sum += parts / static_cast<double>(s.logits_c.size());
    n += 1.0;
  }
  Prediction p;
  p.logits = sum / n;
  p.label = argmax_lowest(p.logits);
  return p;
}

// Bright square in a class-specific quadrant over a dim noisy background.
// Quadrant order: 0 top-left, 1 bottom-right, 2 top-right, 3 bottom-left.
struct ToyDataset {
  std::vector<Image> images;
  std::vector<std::size_t> labels;
  std::size_t size() const { return images.size(); }
};

struct ToyDatasetConfig {
  std::size_t count = 200;
  std::size_t n_classes = 2;
  std::size_t side = 128;
  std::size_t channels = 3;
  double background = 0.1;
  double foreground = 0.9;
  double noise = 0.05;
};

inline Image make_quadrant_image(std::size_t label, const ToyDatasetConfig& c,
                                 Rng& rng) {
  if (label >= 4) detail::fail("quadrant dataset supports at most 4 classes");
  static constexpr std::size_t kQuadY[4] = {0, 1, 0, 1};
  static constexpr std::size_t kQuadX[4] = {0, 1, 1, 0};
  const std::size_t half = c.side / 2;
  const std::size_t square = std::max<std::size_t>(2, c.side / 4);
  const std::size_t slack = half - std::min(half, square);
  const std::size_t oy = kQuadY[label] * half + uniform_index(rng, slack + 1);
  const std::size_t ox = kQuadX[label] * half + uniform_index(rng, slack + 1);
  Image img(c.side, c.side, c.channels);
  for (std::size_t y = 0; y < c.side; ++y)
    for (std::size_t x = 0; x < c.side; ++x) {
      const bool on = y >= oy && y < oy + square && x >= ox && x < ox + square;
      const double v = std::clamp(
          (on ? c.foreground : c.background) + gaussian(rng, 0.0, c.noise), 0.0, 1.0);
      for (std::size_t ch = 0; ch < c.channels; ++ch) img.at(y, x, ch) = v;
    }
  return img;
}

inline ToyDataset make_quadrant_dataset(const ToyDatasetConfig& c, Rng& rng) {
  if (c.n_classes < 1 || c.n_classes > 4)
    detail::fail("quadrant dataset: n_classes must be in [1, 4]");
  ToyDataset d;
  for (std::size_t i = 0; i < c.count; ++i) {
    const std::size_t label = i % c.n_classes;
    d.images.push_back(make_quadrant_image(label, c, rng));
    d.labels.push_back(label);
  }
  return d;
}

struct TrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 0.05;
  std::size_t batch_size = 20;
  std::size_t threads = 1;  // stage planning only
  // Fit the head's frozen input standardization on the clean training
  // embeddings before the first step.
  bool standardize_inputs = true;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_joint_loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  HeadWeights head;
  std::vector<EpochMetrics> epochs;
};

template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = n * t / workers; i < n * (t + 1) / workers; ++i) body(i);
    });
  for (auto& th : pool) th.join();
}

// Head-only training on the joint loss. Each step averages, over the images
// in the batch, the sum of the stage cross-entropies; accuracy is measured in
// eval mode with the combined prediction after every epoch.
inline TrainResult train_toy(const ToyDataset& data, const EncoderConfig& enc,
                             const WeightSet& weights, const ScoringConfig& scoring,
                             const AugmentConfig& aug, const PipelineConfig& cfg,
                             const TrainConfig& train, Rng& rng) {
  if (data.size() == 0) detail::fail("train_toy: empty dataset");
  if (data.labels.size() != data.images.size())
    detail::fail("train_toy: label count does not match image count");
  for (auto l : data.labels)
    if (l >= enc.n_classes) detail::fail("train_toy: label ", l, " out of range");
  if (train.batch_size < 1) detail::fail("train_toy: batch_size must be >= 1");
  if (!(train.learning_rate >= 0.0))
    detail::fail("train_toy: learning_rate must be >= 0");
  aug.validate();

  std::vector<StagePlan> plans(data.size());
  parallel_for(data.size(), train.threads, [&](std::size_t i) {
    plans[i] = plan_stages(data.images[i], enc, weights, scoring, cfg);
  });

  WeightSet model = weights;  // encoder tensors are never written
  if (train.standardize_inputs) {
    std::vector<Vector> clean;
    for (const auto& p : plans) {
      clean.push_back(p.cls_a);
      clean.push_back(p.cls_b);
      clean.insert(clean.end(), p.cls_c.begin(), p.cls_c.end());
    }
    fit_input_standardization(model.head, clean);
  }
  TrainResult result;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= train.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[uniform_index(rng, i)]);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += train.batch_size) {
      const std::size_t end = std::min(order.size(), start + train.batch_size);
      std::vector<LabeledToken> tokens;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const std::size_t y = data.labels[idx];
        StageOutputs s = realize_stages(plans[idx], enc, model, aug, Mode::kTrain, rng);
        tokens.push_back({std::move(s.cls_a), y});
        if (s.cls_b) tokens.push_back({std::move(*s.cls_b), y});
        for (auto& c : s.cls_c) tokens.push_back({std::move(c), y});
      }
      const double images = static_cast<double>(end - start);
      const HeadLossGradient lg = head_loss_and_gradient(model.head, tokens, images);
      loss_sum += lg.loss * images;
      if (train.learning_rate > 0.0)
        model.head = sgd_update(model.head, lg.grad, train.learning_rate);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      Rng unused(0);
      const StageOutputs s =
          realize_stages(plans[i], enc, model, aug, Mode::kEval, unused);
      correct += predict_combined(s).label == data.labels[i];
    }
    result.epochs.push_back({epoch, loss_sum / static_cast<double>(data.size()),
                             static_cast<double>(correct) /
                                 static_cast<double>(data.size())});
  }
  result.head = model.head;
  return result;
}

}  // namespace attnscope
