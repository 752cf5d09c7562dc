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

// ATW1 weights container: "ATW1", version u8, entry count u32 LE, then per
// entry a u16 LE name length, the UTF-8 name and a complete ATT1 record.

#pragma once

#include "attnscope/encoder.hpp"
#include "attnscope/io/tensor_file.hpp"

#include <map>
#include <set>

namespace attnscope::io {

inline constexpr std::string_view kWeightsMagic = "ATW1";
inline constexpr std::uint8_t kWeightsVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline Bytes encode_weights(const std::vector<NamedTensor>& entries) {
  Bytes out(kWeightsMagic.begin(), kWeightsMagic.end());
  detail::put_u8(out, kWeightsVersion);
  detail::put_le(out, entries.size(), 4);
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.name).second) throw IoError(IoErrc::kDuplicateName, e.name);
    if (e.name.size() > 0xFFFF) throw IoError(IoErrc::kDimsOverflow, "name too long");
    detail::put_le(out, e.name.size(), 2);
    out.insert(out.end(), e.name.begin(), e.name.end());
    encode_tensor(e.tensor, out);
  }
  return out;
}

inline std::vector<NamedTensor> decode_weights(std::span<const std::uint8_t> bytes) {
  detail::Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kWeightsMagic.data(), 4) != 0)
    throw IoError(IoErrc::kBadMagic, "expected ATW1");
  const auto version = r.le(1, "version");
  if (version != kWeightsVersion)
    throw IoError(IoErrc::kBadVersion, attnscope::detail::concat("version ", version));
  const auto count = r.le(4, "entry count");
  std::vector<NamedTensor> entries;
  std::set<std::string> seen;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.le(2, "name length");
    auto name_bytes = r.take(static_cast<std::size_t>(len), "name");
    std::string name(name_bytes.begin(), name_bytes.end());
    if (!seen.insert(name).second) throw IoError(IoErrc::kDuplicateName, name);
    entries.push_back({std::move(name), decode_tensor(r)});
  }
  if (r.remaining() != 0)
    throw IoError(IoErrc::kTrailingBytes,
                  attnscope::detail::concat(r.remaining(), " bytes after last entry"));
  return entries;
}

inline std::vector<NamedTensor> weight_entries(const WeightSet& w) {
  std::vector<NamedTensor> entries;
  visit_parameters(w, [&](const std::string& name, const auto&, const auto& t) {
    entries.push_back({name, to_tensor(t)});
  });
  return entries;
}

// Builds a WeightSet for the config from named entries. The head input
// standardization may be absent (identity); every other tensor is required and
// unknown names are rejected.
inline WeightSet weights_from_entries(const std::vector<NamedTensor>& entries,
                                      const EncoderConfig& cfg) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e.tensor;
  WeightSet w = allocate_weights(cfg);
  std::size_t used = 0;
  visit_parameters(w, [&](const std::string& name, const auto& shape, auto& t) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      if (name == "head.input.shift" || name == "head.input.scale") return;
      attnscope::detail::fail("weights: missing tensor '", name, "'");
    }
    const Tensor& src = *it->second;
    if (src.dims.size() != shape.size() ||
        !std::equal(shape.begin(), shape.end(), src.dims.begin()))
      attnscope::detail::fail("weights: tensor '", name,
                              "' shape does not match the encoder config");
    for (std::size_t i = 0; i < src.data.size(); ++i) t.data()[i] = src.data[i];
    ++used;
  });
  if (used != entries.size()) {
    for (const auto& e : entries) {
      bool known = false;
      visit_parameters(w, [&](const std::string& name, const auto&, const auto&) {
        known = known || name == e.name;
      });
      if (!known) attnscope::detail::fail("weights: unknown tensor '", e.name, "'");
    }
  }
  check_weights(w, cfg);
  return w;
}

inline void save_weights(const std::string& path, const WeightSet& w) {
  write_file(path, encode_weights(weight_entries(w)));
}

inline WeightSet load_weights(const std::string& path, const EncoderConfig& cfg) {
  return weights_from_entries(decode_weights(read_file(path)), cfg);
}

}  // namespace attnscope::io
