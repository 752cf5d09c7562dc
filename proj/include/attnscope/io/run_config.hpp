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

// Flat key=value run configuration. Blank lines and '#' comments are
// ignored; unknown or repeated keys are errors.

#pragma once

#include "attnscope/pipeline.hpp"
#include "attnscope/io/tensor_file.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <optional>
#include <set>

namespace attnscope::io {

struct RunConfig {
  EncoderConfig encoder = EncoderConfig::toy();
  ScoringConfig scoring;
  AugmentConfig augment;
  PipelineConfig pipeline;
  TrainConfig train;
  ToyDatasetConfig dataset;
  std::uint64_t seed = 0;
  std::uint64_t weights_seed = 0;

  void validate() const {
    encoder.validate();
    scoring.validate();
    augment.validate();
    if (pipeline.high_res_factor < 1)
      attnscope::detail::fail("config: high_res_factor must be >= 1");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    attnscope::detail::fail("config: '", key, "' expects a non-negative integer, got '", v, "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    attnscope::detail::fail("config: '", key, "' expects a real number, got '", v, "'");
  return out;
}

template <typename E>
E parse_enum(const std::string& key, const std::string& v,
             std::initializer_list<std::pair<const char*, E>> options) {
  for (const auto& [name, value] : options)
    if (v == name) return value;
  std::string all;
  for (const auto& o : options) all += std::string(all.empty() ? "" : "|") + o.first;
  attnscope::detail::fail("config: '", key, "' expects one of ", all, ", got '", v, "'");
}

template <typename E>
std::string enum_name(E value, std::initializer_list<std::pair<const char*, E>> options) {
  for (const auto& [name, v] : options)
    if (v == value) return name;
  return "?";
}

inline std::string real_text(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace detail

inline const std::initializer_list<std::pair<const char*, RatioMode>> kRatioModes = {
    {"linear", RatioMode::kLinear}, {"area", RatioMode::kArea}};
inline const std::initializer_list<std::pair<const char*, KernelRounding>> kRoundings = {
    {"nearest", KernelRounding::kNearest}, {"patch-floor", KernelRounding::kPatchFloor}};
inline const std::initializer_list<std::pair<const char*, Pooling>> kPoolings = {
    {"avg", Pooling::kAverage}, {"gem", Pooling::kGeM}, {"max", Pooling::kMax}};
inline const std::initializer_list<std::pair<const char*, EraseFill>> kFills = {
    {"zero", EraseFill::kZero}, {"mean", EraseFill::kChannelMean}};
inline const std::initializer_list<std::pair<const char*, HeadFusion>> kFusions = {
    {"mean", HeadFusion::kMean}, {"max", HeadFusion::kMax}, {"min", HeadFusion::kMin}};
inline const std::initializer_list<std::pair<const char*, Connectivity>> kConnectivities = {
    {"4", Connectivity::kFour}, {"8", Connectivity::kEight}};
inline const std::initializer_list<std::pair<const char*, BoxRule>> kBoxRules = {
    {"peak", BoxRule::kPeakComponent}, {"mean", BoxRule::kBestMeanComponent}};
inline const std::initializer_list<std::pair<const char*, PartMapSource>> kPartSources = {
    {"crop", PartMapSource::kCroppedStageA}, {"recompute", PartMapSource::kRecomputedStageB}};
inline const std::initializer_list<std::pair<const char*, Interpolation>> kInterpolations = {
    {"bilinear", Interpolation::kBilinear}, {"nearest", Interpolation::kNearest}};

struct ConfigKey {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::map<std::string, ConfigKey>& config_keys() {
  using detail::parse_count;
  using detail::parse_real;
  using detail::real_text;
  static const std::map<std::string, ConfigKey> keys = [] {
    std::map<std::string, ConfigKey> k;
    auto count = [&k](const char* name, auto member) {
      k[name] = {[name, member](RunConfig& c, const std::string& v) {
                   member(c) = parse_count(name, v);
                 },
                 [member](const RunConfig& c) {
                   return std::to_string(member(const_cast<RunConfig&>(c)));
                 }};
    };
    auto real = [&k](const char* name, auto member) {
      k[name] = {[name, member](RunConfig& c, const std::string& v) {
                   member(c) = parse_real(name, v);
                 },
                 [member](const RunConfig& c) {
                   return real_text(member(const_cast<RunConfig&>(c)));
                 }};
    };
    auto choice = [&k](const char* name, auto member, const auto& options) {
      k[name] = {[name, member, &options](RunConfig& c, const std::string& v) {
                   member(c) = detail::parse_enum(name, v, options);
                 },
                 [member, &options](const RunConfig& c) {
                   return detail::enum_name(member(const_cast<RunConfig&>(c)), options);
                 }};
    };
    count("image_side", [](RunConfig& c) -> auto& { return c.encoder.image_side; });
    count("patch_side", [](RunConfig& c) -> auto& { return c.encoder.patch_side; });
    count("n_layers", [](RunConfig& c) -> auto& { return c.encoder.n_layers; });
    count("n_heads", [](RunConfig& c) -> auto& { return c.encoder.n_heads; });
    count("embed_dim", [](RunConfig& c) -> auto& { return c.encoder.embed_dim; });
    count("mlp_hidden", [](RunConfig& c) -> auto& { return c.encoder.mlp_hidden; });
    count("n_classes", [](RunConfig& c) -> auto& { return c.encoder.n_classes; });
    count("channels", [](RunConfig& c) -> auto& { return c.encoder.channels; });
    count("head_hidden", [](RunConfig& c) -> auto& { return c.encoder.head_hidden; });

    real("kernel_ratio", [](RunConfig& c) -> auto& { return c.scoring.kernel_ratio; });
    choice("ratio_mode", [](RunConfig& c) -> auto& { return c.scoring.ratio_mode; }, kRatioModes);
    choice("kernel_rounding", [](RunConfig& c) -> auto& { return c.scoring.rounding; }, kRoundings);
    count("rounding_quantum", [](RunConfig& c) -> auto& { return c.scoring.rounding_quantum; });
    count("stride", [](RunConfig& c) -> auto& { return c.scoring.stride; });
    choice("pooling", [](RunConfig& c) -> auto& { return c.scoring.pooling; }, kPoolings);
    real("gem_p", [](RunConfig& c) -> auto& { return c.scoring.gem_p; });
    count("top_k", [](RunConfig& c) -> auto& { return c.scoring.top_k; });
    real("iou_threshold", [](RunConfig& c) -> auto& { return c.scoring.iou_threshold; });

    real("erase_probability", [](RunConfig& c) -> auto& { return c.augment.erase_probability; });
    real("erase_threshold", [](RunConfig& c) -> auto& { return c.augment.erase_threshold; });
    real("crop_threshold", [](RunConfig& c) -> auto& { return c.augment.crop_threshold; });
    real("crop_padding", [](RunConfig& c) -> auto& { return c.augment.crop_padding; });
    choice("erase_fill", [](RunConfig& c) -> auto& { return c.augment.fill; }, kFills);

    choice("head_fusion", [](RunConfig& c) -> auto& { return c.pipeline.rollout.fusion; }, kFusions);
    real("residual_weight", [](RunConfig& c) -> auto& { return c.pipeline.rollout.residual; });
    count("se_radius", [](RunConfig& c) -> auto& { return c.pipeline.localization.se_radius; });
    choice("connectivity", [](RunConfig& c) -> auto& { return c.pipeline.localization.connectivity; }, kConnectivities);
    choice("box_rule", [](RunConfig& c) -> auto& { return c.pipeline.localization.rule; }, kBoxRules);
    choice("part_map_source", [](RunConfig& c) -> auto& { return c.pipeline.part_map_source; }, kPartSources);
    choice("upsample", [](RunConfig& c) -> auto& { return c.pipeline.upsample; }, kInterpolations);
    count("high_res_factor", [](RunConfig& c) -> auto& { return c.pipeline.high_res_factor; });

    count("epochs", [](RunConfig& c) -> auto& { return c.train.epochs; });
    real("learning_rate", [](RunConfig& c) -> auto& { return c.train.learning_rate; });
    count("batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; });
    count("train_images", [](RunConfig& c) -> auto& { return c.dataset.count; });
    real("noise", [](RunConfig& c) -> auto& { return c.dataset.noise; });

    k["seed"] = {[](RunConfig& c, const std::string& v) { c.seed = parse_count("seed", v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }};
    k["weights_seed"] = {
        [](RunConfig& c, const std::string& v) { c.weights_seed = parse_count("weights_seed", v); },
        [](const RunConfig& c) { return std::to_string(c.weights_seed); }};
    return k;
  }();
  return keys;
}

inline void set_config_value(RunConfig& cfg, const std::string& key,
                             const std::string& value) {
  const auto& keys = config_keys();
  auto it = keys.find(key);
  if (it == keys.end()) attnscope::detail::fail("config: unknown key '", key, "'");
  it->second.set(cfg, value);
}

inline RunConfig parse_run_config(std::string_view text, RunConfig base = {}) {
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      attnscope::detail::fail("config line ", line_no, ": expected key=value");
    const std::string key = detail::trim(std::string_view(trimmed).substr(0, eq));
    const std::string value = detail::trim(std::string_view(trimmed).substr(eq + 1));
    if (!seen.insert(key).second)
      attnscope::detail::fail("config line ", line_no, ": repeated key '", key, "'");
    set_config_value(base, key, value);
  }
  base.validate();
  return base;
}

inline RunConfig load_run_config(const std::string& path) {
  const Bytes bytes = read_file(path);
  return parse_run_config(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                           bytes.size()));
}

inline std::string format_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, k] : config_keys()) out += key + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace attnscope::io
