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

// Command-line front end. Exit codes: 0 success, 1 invalid input or usage,
// 2 file I/O or format error.
//
// Every subcommand computes its results in memory and writes files only at
// the end, so a failing run leaves no partial outputs behind.

#pragma once

#include "attnscope/augment.hpp"
#include "attnscope/io/image_io.hpp"
#include "attnscope/io/overlay.hpp"
#include "attnscope/io/run_config.hpp"
#include "attnscope/io/tensor_file.hpp"
#include "attnscope/io/weights_file.hpp"
#include "attnscope/localization.hpp"
#include "attnscope/pipeline.hpp"
#include "attnscope/region_scoring.hpp"
#include "attnscope/rollout.hpp"
#include "attnscope/selftest.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace attnscope::cli {

struct Options {
  std::vector<std::string> images;
  std::string attn;
  std::string weights;
  std::string config;
  std::string boxes;
  std::string out_dir = ".";
  std::string mode = "eval";
  std::size_t parallel = 1;
  std::optional<std::string> seed;
};

// Files produced by a subcommand, written together once everything is known.
class OutputSet {
 public:
  void add(std::string name, io::Bytes bytes) { files_.push_back({std::move(name), std::move(bytes)}); }
  void add_text(std::string name, const std::string& text) {
    add(std::move(name), io::Bytes(text.begin(), text.end()));
  }
  void commit(const std::string& dir) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io::IoError(io::IoErrc::kWriteFailed, dir + ": " + ec.message());
    for (const auto& [name, bytes] : files_)
      io::write_file((std::filesystem::path(dir) / name).string(), bytes);
  }

 private:
  std::vector<std::pair<std::string, io::Bytes>> files_;
};

struct Context {
  Options opt;
  io::RunConfig cfg;
  std::uint64_t seed = 0;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

namespace detail {

inline std::string box_line(const BoundingBox& b, double score) {
  return std::to_string(b.x0) + " " + std::to_string(b.y0) + " " + std::to_string(b.x1) +
         " " + std::to_string(b.y1) + " " + io::detail::real_text(score);
}

inline io::Bytes png(const Image& img) { return io::encode_png(img); }

inline WeightSet load_or_init_weights(const Context& c) {
  if (!c.opt.weights.empty()) return io::load_weights(c.opt.weights, c.cfg.encoder);
  return init_weights(c.cfg.encoder, c.cfg.weights_seed);
}

inline Image encoder_input(const Image& img, const EncoderConfig& enc) {
  Image x = io::to_channels(img, enc.channels);
  if (x.height != enc.image_side || x.width != enc.image_side)
    x = resize_image(x, enc.image_side, enc.image_side);
  return x;
}

inline const std::string& single_image(const Context& c) {
  if (c.opt.images.size() != 1)
    attnscope::detail::fail("this subcommand takes exactly one --image (got ",
                            c.opt.images.size(), ")");
  return c.opt.images.front();
}

inline std::optional<Image> optional_image(const Context& c) {
  if (c.opt.images.empty()) return std::nullopt;
  return io::read_image(single_image(c));
}

inline AttentionStack load_stack(const Context& c, std::size_t expected_tokens) {
  io::ExternalAttention ext = io::load_attention_external(c.opt.attn, expected_tokens);
  for (const auto& w : ext.warnings) *c.err << "warning: " << w << "\n";
  return std::move(ext.stack);
}

// Attention map from --attn (a 4-D attention stack, or a 2-D map) or, failing
// that, from running the encoder on the image.
inline AttentionMap input_map(const Context& c, const std::optional<Image>& image,
                              bool allow_2d) {
  if (!c.opt.attn.empty()) {
    const io::Tensor t = io::read_tensor(c.opt.attn);
    if (t.dims.size() == 2 && allow_2d) {
      AttentionMap m;
      m.values = io::to_matrix(t);
      if (m.empty() || !m.values.allFinite())
        attnscope::detail::fail("map tensor is empty or has non-finite values");
      return m;
    }
    io::ExternalAttention ext = io::validate_external_attention(io::to_attention_stack(t), 0);
    for (const auto& w : ext.warnings) *c.err << "warning: " << w << "\n";
    return rollout_map(ext.stack, c.cfg.pipeline.rollout);
  }
  if (!image) attnscope::detail::fail("needs --attn or --image");
  const WeightSet w = load_or_init_weights(c);
  return rollout_map(encode_image(encoder_input(*image, c.cfg.encoder), c.cfg.encoder, w).attention,
                     c.cfg.pipeline.rollout);
}

inline AttentionMap to_pixels(const AttentionMap& m, std::size_t rows, std::size_t cols,
                              Interpolation mode) {
  if (m.rows() == rows && m.cols() == cols) return m;
  AttentionMap out;
  out.values = resize_grid(m.values, rows, cols, mode);
  out.space = MapSpace::kPixelGrid;
  out.source = m.source;
  return out;
}

inline std::vector<BoundingBox> read_boxes(const std::string& path, std::size_t w,
                                           std::size_t h) {
  const io::Bytes bytes = io::read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::vector<BoundingBox> boxes;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (io::detail::trim(line).empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long long v[4];
    for (auto& x : v)
      if (!(ls >> x) || x < 0)
        attnscope::detail::fail(path, " line ", n, ": expected 'x0 y0 x1 y1 [score]'");
    const BoundingBox b{static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1]),
                        static_cast<std::size_t>(v[2]), static_cast<std::size_t>(v[3])};
    if (!b.valid_in(w, h))
      attnscope::detail::fail(path, " line ", n, ": box outside the ", w, "x", h, " image");
    boxes.push_back(b);
  }
  return boxes;
}

}  // namespace detail

inline int cmd_rollout(const Context& c) {
  const auto image = detail::optional_image(c);
  OutputSet files;
  AttentionMap map;
  if (!c.opt.attn.empty()) {
    map = rollout_map(detail::load_stack(c, 0), c.cfg.pipeline.rollout);
  } else {
    map = detail::input_map(c, image, false);
  }
  files.add("rollout.att", io::encode_tensor(io::to_tensor(map.values)));
  if (image) {
    const AttentionMap px = detail::to_pixels(map, image->height, image->width, c.cfg.pipeline.upsample);
    files.add("rollout_overlay.png", detail::png(io::render_overlay(*image, px.values)));
  }
  files.commit(c.opt.out_dir);
  *c.out << "map " << map.rows() << "x" << map.cols() << " min "
         << io::detail::real_text(map.values.minCoeff()) << " max "
         << io::detail::real_text(map.values.maxCoeff()) << "\n";
  return 0;
}

inline int cmd_localize(const Context& c) {
  const auto image = detail::optional_image(c);
  const AttentionMap map = detail::input_map(c, image, true);
  const std::size_t rows = image ? image->height : c.cfg.encoder.image_side;
  const std::size_t cols = image ? image->width : c.cfg.encoder.image_side;
  const AttentionMap px = detail::to_pixels(map, rows, cols, c.cfg.pipeline.upsample);
  const ObjectBox ob = localize_object(px, c.cfg.pipeline.localization);
  const std::string line = detail::box_line(ob.box, ob.score);
  OutputSet files;
  files.add_text("object_box.txt", line + "\n");
  if (image) {
    const BoundingBox boxes[] = {ob.box};
    files.add("object_crop.png", detail::png(crop_image(*image, ob.box)));
    files.add("localize_overlay.png", detail::png(io::render_overlay(*image, px.values, boxes)));
  }
  files.commit(c.opt.out_dir);
  if (ob.fallback) *c.err << "note: empty foreground mask, using the full frame\n";
  *c.out << line << "\n";
  return 0;
}

inline int cmd_parts(const Context& c) {
  const auto image = detail::optional_image(c);
  const AttentionMap map = detail::input_map(c, image, true);
  const std::size_t rows = image ? image->height : c.cfg.encoder.image_side;
  const std::size_t cols = image ? image->width : c.cfg.encoder.image_side;
  AttentionMap px = detail::to_pixels(map, rows, cols, c.cfg.pipeline.upsample);
  px.source = MapSource::kObjectCrop;
  ScoringConfig scoring = c.cfg.scoring;
  scoring.threads = c.opt.parallel;
  const auto parts = select_parts(px, scoring);
  std::string text;
  std::vector<BoundingBox> boxes;
  for (const auto& p : parts) {
    text += detail::box_line(p.box, p.score) + "\n";
    boxes.push_back(p.box);
  }
  OutputSet files;
  files.add_text("parts.txt", text);
  if (image) files.add("parts_overlay.png", detail::png(io::render_overlay(*image, px.values, boxes)));
  files.commit(c.opt.out_dir);
  *c.out << text;
  return 0;
}

inline int cmd_augment(const Context& c) {
  if (c.opt.images.empty()) attnscope::detail::fail("augment needs at least one --image");
  if (!c.opt.attn.empty() && c.opt.images.size() != 1)
    attnscope::detail::fail("--attn applies to a single --image");
  std::vector<Image> images;
  for (const auto& p : c.opt.images) images.push_back(io::read_image(p));
  std::vector<AttentionMap> maps;
  for (const auto& img : images) maps.push_back(detail::input_map(c, img, true));

  struct Result {
    EraseResult erase;
    CropResult crop;
  };
  std::vector<Result> results(images.size());
  parallel_for(images.size(), c.opt.parallel, [&](std::size_t i) {
    const Image& img = images[i];
    const AttentionMap px = detail::to_pixels(maps[i], img.height, img.width, c.cfg.pipeline.upsample);
    Rng rng(mix_seed(c.seed, i));
    results[i].erase = attention_erase(img, px, c.cfg.augment, rng);
    results[i].crop = attention_crop(img, px, c.cfg.augment, std::min(img.height, img.width));
  });

  OutputSet files;
  std::string log = "# image erase_fired erased_pixels crop_x0 crop_y0 crop_x1 crop_y1 crop_fallback\n";
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& r = results[i];
    files.add("erased_" + std::to_string(i) + ".png", detail::png(r.erase.image));
    files.add("crop_" + std::to_string(i) + ".png", detail::png(r.crop.image));
    log += std::to_string(i) + " " + (r.erase.fired ? "1" : "0") + " " +
           std::to_string(r.erase.erased) + " " + std::to_string(r.crop.box.x0) + " " +
           std::to_string(r.crop.box.y0) + " " + std::to_string(r.crop.box.x1) + " " +
           std::to_string(r.crop.box.y1) + " " + (r.crop.fallback ? "1" : "0") + "\n";
  }
  files.add_text("augment_log.txt", log);
  files.commit(c.opt.out_dir);
  *c.out << log;
  return 0;
}

inline int cmd_pipeline(const Context& c) {
  if (c.opt.images.empty()) attnscope::detail::fail("pipeline needs at least one --image");
  if (c.opt.mode != "eval" && c.opt.mode != "train")
    attnscope::detail::fail("--mode must be eval or train");
  if (!c.opt.attn.empty() && c.opt.images.size() != 1)
    attnscope::detail::fail("--attn applies to a single --image");
  const EncoderConfig& enc = c.cfg.encoder;
  const WeightSet w = detail::load_or_init_weights(c);
  std::vector<Image> images;
  for (const auto& p : c.opt.images) images.push_back(io::to_channels(io::read_image(p), enc.channels));
  for (const auto& img : images) attnscope::detail::check_highres(img, enc);
  std::optional<AttentionStack> override_stack;
  if (!c.opt.attn.empty()) override_stack = detail::load_stack(c, enc.n_tokens());
  const Mode mode = c.opt.mode == "train" ? Mode::kTrain : Mode::kEval;

  struct Result {
    StagePlan plan;
    StageOutputs out;
  };
  std::vector<Result> results(images.size());
  parallel_for(images.size(), c.opt.parallel, [&](std::size_t i) {
    results[i].plan = plan_stages(images[i], enc, w, c.cfg.scoring, c.cfg.pipeline,
                                  override_stack ? &*override_stack : nullptr);
    Rng rng(mix_seed(c.seed, i));
    results[i].out = realize_stages(results[i].plan, enc, w, c.cfg.augment, mode, rng);
  });

  OutputSet files;
  std::string text;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& [plan, out] = results[i];
    const Prediction p = predict_combined(out);
    text += "image " + std::to_string(i) + " " + c.opt.images[i] + "\n";
    text += "prediction " + std::to_string(p.label);
    for (Eigen::Index k = 0; k < p.logits.size(); ++k) text += " " + io::detail::real_text(p.logits(k));
    text += "\nobject " + detail::box_line(plan.object_highres, plan.object.score) + "\n";
    for (std::size_t k = 0; k < plan.parts.size(); ++k)
      text += "part " + detail::box_line(plan.parts_highres[k], plan.parts[k].score) + "\n";
    if (mode == Mode::kTrain) {
      text += "erase_fired";
      for (bool f : out.erased) text += f ? " 1" : " 0";
      text += "\n";
    }
    std::vector<BoundingBox> boxes{plan.object_highres};
    boxes.insert(boxes.end(), plan.parts_highres.begin(), plan.parts_highres.end());
    const Matrix px = resize_grid(plan.map_full.values, images[i].height, images[i].width,
                                  c.cfg.pipeline.upsample);
    files.add("overlay_" + std::to_string(i) + ".png",
              detail::png(io::render_overlay(images[i], px, boxes)));
  }
  files.add_text("results.txt", text);
  files.commit(c.opt.out_dir);
  *c.out << text;
  return 0;
}

inline int cmd_train_toy(const Context& c) {
  const EncoderConfig& enc = c.cfg.encoder;
  const WeightSet w = detail::load_or_init_weights(c);
  ToyDatasetConfig dc = c.cfg.dataset;
  dc.side = enc.image_side * c.cfg.pipeline.high_res_factor;
  dc.channels = enc.channels;
  dc.n_classes = enc.n_classes;
  Rng data_rng(mix_seed(c.seed, 0));
  const ToyDataset data = make_quadrant_dataset(dc, data_rng);
  TrainConfig tc = c.cfg.train;
  tc.threads = c.opt.parallel;
  Rng train_rng(mix_seed(c.seed, 1));
  const TrainResult r = train_toy(data, enc, w, c.cfg.scoring, c.cfg.augment, c.cfg.pipeline,
                                  tc, train_rng);
  std::string csv = "epoch,mean_joint_loss,accuracy\n";
  for (const auto& e : r.epochs)
    csv += std::to_string(e.epoch) + "," + io::detail::real_text(e.mean_joint_loss) + "," +
           io::detail::real_text(e.accuracy) + "\n";
  WeightSet trained = w;
  trained.head = r.head;
  OutputSet files;
  files.add_text("metrics.csv", csv);
  files.add("weights.atw", io::encode_weights(io::weight_entries(trained)));
  files.commit(c.opt.out_dir);
  if (!r.epochs.empty()) {
    const auto& last = r.epochs.back();
    *c.out << "epochs " << r.epochs.size() << " final_loss "
           << io::detail::real_text(last.mean_joint_loss) << " accuracy "
           << io::detail::real_text(last.accuracy) << "\n";
  }
  return 0;
}

inline int cmd_overlay(const Context& c) {
  const Image image = io::read_image(detail::single_image(c));
  const AttentionMap map = detail::input_map(c, image, true);
  const AttentionMap px = detail::to_pixels(map, image.height, image.width, c.cfg.pipeline.upsample);
  std::vector<BoundingBox> boxes;
  if (!c.opt.boxes.empty()) boxes = detail::read_boxes(c.opt.boxes, image.width, image.height);
  OutputSet files;
  files.add("overlay.png", detail::png(io::render_overlay(image, px.values, boxes)));
  files.commit(c.opt.out_dir);
  *c.out << "overlay " << image.width << "x" << image.height << " boxes " << boxes.size() << "\n";
  return 0;
}

inline int cmd_selftest(const Context& c) {
  return run_selftest(*c.out, static_cast<std::uint32_t>(c.seed)) ? 0 : 1;
}

namespace detail {

inline std::uint64_t resolve_seed(const Options& opt, const io::RunConfig& cfg) {
  if (opt.seed) return io::detail::parse_count("--seed", *opt.seed);
  if (const char* env = std::getenv("ATTNSCOPE_SEED"); env && *env)
    return io::detail::parse_count("ATTNSCOPE_SEED", env);
  return cfg.seed;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention rollout, localization and part selection for ViT models", "attnscope"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Options opt;
  std::optional<std::string> seed;
  // Config overrides, kept as text and parsed by the config layer.
  std::map<std::string, std::string> flag_values;
  app.add_option("--image", opt.images, "Input image (PNG or PPM); repeatable");
  app.add_option("--attn", opt.attn, "Attention stack [L,H,T,T] or 2-D map (ATT1 file)");
  app.add_option("--weights", opt.weights, "Encoder weights (ATW1 file)");
  app.add_option("--config", opt.config, "key=value run configuration file");
  app.add_option("--boxes", opt.boxes, "Box lines 'x0 y0 x1 y1 [score]' for overlay");
  app.add_option("--out-dir", opt.out_dir, "Directory for output files");
  app.add_option("--mode", opt.mode, "Pipeline mode: eval or train");
  app.add_option("--parallel", opt.parallel, "Worker threads across images")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Random seed (default: ATTNSCOPE_SEED, then config)");
  const std::pair<const char*, const char*> overrides[] = {
      {"--kernel-ratio", "kernel_ratio"}, {"--ratio-mode", "ratio_mode"},
      {"--stride", "stride"},             {"--topk", "top_k"},
      {"--iou", "iou_threshold"},         {"--pooling", "pooling"},
      {"--erase-p", "erase_probability"}, {"--erase-t", "erase_threshold"}};
  for (const auto& [flag, key] : overrides)
    app.add_option(flag, flag_values[key], std::string("Overrides config key ") + key);

  using Handler = int (*)(const Context&);
  const std::pair<const char*, Handler> commands[] = {
      {"rollout", cmd_rollout},     {"localize", cmd_localize}, {"parts", cmd_parts},
      {"augment", cmd_augment},     {"pipeline", cmd_pipeline}, {"train-toy", cmd_train_toy},
      {"overlay", cmd_overlay},     {"selftest", cmd_selftest}};
  static const std::map<std::string, const char*> kHelp = {
      {"rollout", "Attention rollout map from --attn or the encoder on --image"},
      {"localize", "Object box from the thresholded, closed attention map"},
      {"parts", "Top-k part windows after NMS on the object attention map"},
      {"augment", "Attention-guided erasing and cropping of each --image"},
      {"pipeline", "Three-stage inference on each --image"},
      {"train-toy", "Train the head on the synthetic quadrant dataset"},
      {"overlay", "Render the attention heatmap (and --boxes) over --image"},
      {"selftest", "Run the oracle checks and report pass/fail per invariant"}};
  std::vector<std::pair<CLI::App*, Handler>> subs;
  for (const auto& [name, handler] : commands)
    subs.push_back({app.add_subcommand(name, kHelp.at(name)), handler});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    Context c;
    c.out = &out;
    c.err = &err;
    c.cfg = opt.config.empty() ? io::RunConfig{} : io::load_run_config(opt.config);
    c.cfg.train.threads = opt.parallel;
    for (const auto& [key, value] : flag_values)
      if (!value.empty()) io::set_config_value(c.cfg, key, value);
    c.cfg.validate();
    opt.seed = seed;
    c.seed = detail::resolve_seed(opt, c.cfg);
    c.opt = std::move(opt);
    for (const auto& [sub, handler] : subs)
      if (sub->parsed()) return handler(c);
    err << app.help();
    return 1;
  } catch (const io::IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace attnscope::cli
