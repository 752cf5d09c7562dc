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

// Quick oracle suite behind the `selftest` subcommand. Toy training is left
// to the acceptance binary because it takes tens of seconds.

#pragma once

#include "attnscope/testing/checks.hpp"

#include <ostream>

namespace attnscope {

struct SelftestEntry {
  std::string name;
  checks::Verdict verdict;
};

inline std::vector<SelftestEntry> run_selftest_suite(std::uint32_t seed = 1) {
  std::vector<SelftestEntry> out;
  out.push_back({"rollout-row-stochastic", checks::rollout_correctness(seed, 50)});
  out.push_back({"integral-image-vs-brute-force", checks::integral_image_equivalence(seed, 30)});
  out.push_back({"nms-vs-greedy-oracle", checks::nms_contract(seed, 300)});
  out.push_back({"kernel-size-384-ratio-0.3", checks::kernel_size_check()});
  out.push_back({"localization-and-morphology", checks::localization_contract(seed, 60, 60)});
  out.push_back({"erase-exactness", checks::augmentation_exactness(seed, 60)});
  out.push_back({"joint-loss-additivity", checks::joint_loss_additivity(seed, 100)});
  out.push_back({"head-gradient-vs-finite-difference", checks::head_gradient_check(seed, 10)});
  out.push_back({"determinism-and-round-trips", checks::determinism_and_io(seed, 50)});
  return out;
}

// Prints one PASS/FAIL line per invariant; returns true when all pass.
inline bool run_selftest(std::ostream& os, std::uint32_t seed = 1) {
  bool ok = true;
  for (const auto& e : run_selftest_suite(seed)) {
    os << (e.verdict.pass ? "PASS " : "FAIL ") << e.name << ": " << e.verdict.detail << "\n";
    ok = ok && e.verdict.pass;
  }
  return ok;
}

}  // namespace attnscope
