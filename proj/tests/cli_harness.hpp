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

// In-process driver for the CLI shared by the unit and acceptance tests.

#pragma once

#include "attnscope/cli.hpp"
#include "attnscope/testing/generators.hpp"

#include <filesystem>
#include <map>
#include <sstream>

namespace attnscope::clitest {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

inline Run run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"attnscope"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

inline std::map<std::string, io::Bytes> read_tree(const fs::path& dir) {
  std::map<std::string, io::Bytes> files;
  if (!fs::exists(dir)) return files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file())
      files[fs::relative(entry.path(), dir).string()] = io::read_file(entry.path().string());
  return files;
}

struct Inputs {
  fs::path root;
  std::string image;     // 128x128 RGB PNG
  std::string image2;    // second image for multi-image commands
  std::string identity;  // 4x4x65x65 identity attention
  std::string stack;     // random row-stochastic 4x4x65x65 attention
  std::string config;    // small training budget
};

inline Inputs make_inputs(const fs::path& root) {
  fs::remove_all(root);
  fs::create_directories(root);
  Inputs in;
  in.root = root;
  gen::Engine e(2024);
  auto quantized = [&](std::size_t side) {
    Image img(side, side, 3);
    for (auto& v : img.data) v = static_cast<double>(gen::count(e, 0, 255)) / 255.0;
    return img;
  };
  // Brighter block in the upper-left part of the first image.
  Image a = quantized(128);
  for (std::size_t y = 16; y < 56; ++y)
    for (std::size_t x = 20; x < 60; ++x)
      for (std::size_t c = 0; c < 3; ++c) a.at(y, x, c) = 1.0;
  in.image = (root / "a.png").string();
  io::write_image(in.image, a);
  in.image2 = (root / "b.png").string();
  io::write_image(in.image2, quantized(128));

  AttentionStack id(4, 4, 65);
  for (auto& m : id.weights) m = Matrix::Identity(65, 65);
  in.identity = (root / "identity.att").string();
  io::write_tensor(in.identity, io::to_tensor(id));
  in.stack = (root / "stack.att").string();
  io::write_tensor(in.stack, io::to_tensor(gen::attention_stack(e, 4, 4, 65)));

  in.config = (root / "small.cfg").string();
  const std::string cfg = "epochs = 2\ntrain_images = 6\nbatch_size = 3\n";
  io::write_file(in.config, io::Bytes(cfg.begin(), cfg.end()));
  return in;
}

struct Case {
  std::string name;
  std::vector<std::string> args;  // without --out-dir
};

// One invocation per subcommand, covering the main flag combinations.
inline std::vector<Case> subcommand_cases(const Inputs& in) {
  return {
      {"rollout", {"rollout", "--attn", in.stack, "--image", in.image}},
      {"rollout-encoder", {"rollout", "--image", in.image, "--seed", "3"}},
      {"localize", {"localize", "--attn", in.stack, "--image", in.image}},
      {"parts", {"parts", "--attn", in.stack, "--image", in.image, "--topk", "2", "--stride", "1"}},
      {"parts-gem", {"parts", "--image", in.image, "--pooling", "gem", "--kernel-ratio", "0.4",
                     "--ratio-mode", "area", "--iou", "0.1", "--parallel", "2"}},
      {"augment", {"augment", "--image", in.image, "--image", in.image2, "--erase-p", "0.5",
                   "--erase-t", "0.4", "--seed", "11", "--parallel", "2"}},
      {"pipeline", {"pipeline", "--image", in.image, "--image", in.image2, "--seed", "5"}},
      {"pipeline-train", {"pipeline", "--image", in.image, "--mode", "train", "--erase-p", "1",
                          "--seed", "5"}},
      {"train-toy", {"train-toy", "--config", in.config, "--seed", "7"}},
      {"overlay", {"overlay", "--image", in.image, "--attn", in.stack}},
      {"selftest", {"selftest", "--seed", "2"}},
  };
}

struct Outcome {
  Run run;
  std::map<std::string, io::Bytes> files;
};

inline Outcome run_case(const Case& c, const fs::path& out_dir) {
  fs::remove_all(out_dir);
  std::vector<std::string> args = c.args;
  args.push_back("--out-dir");
  args.push_back(out_dir.string());
  Outcome o;
  o.run = run(args);
  o.files = read_tree(out_dir);
  return o;
}

}  // namespace attnscope::clitest
