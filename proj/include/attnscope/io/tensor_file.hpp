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

// ATT1 tensor container.
//
//   offset  size        field
//   0       4           magic "ATT1"
//   4       1           version (1)
//   5       1           dtype (1 = float32 little-endian)
//   6       1           ndim
//   7       8 * ndim    dims, u64 little-endian
//   ...     4 * prod    payload, row-major
//
// A 2x3 tensor therefore occupies 7 + 16 + 24 = 47 bytes.

#pragma once

#include "attnscope/common.hpp"
#include "attnscope/encoder.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <span>
#include <string_view>

namespace attnscope::io {

enum class IoErrc {
  kOpenFailed = 1,
  kReadFailed,
  kWriteFailed,
  kBadMagic,
  kBadVersion,
  kBadDtype,
  kTruncated,
  kDimsOverflow,
  kTrailingBytes,
  kDuplicateName,
};

inline const char* to_string(IoErrc e) {
  switch (e) {
    case IoErrc::kOpenFailed: return "open failed";
    case IoErrc::kReadFailed: return "read failed";
    case IoErrc::kWriteFailed: return "write failed";
    case IoErrc::kBadMagic: return "bad magic";
    case IoErrc::kBadVersion: return "unsupported version";
    case IoErrc::kBadDtype: return "unsupported dtype";
    case IoErrc::kTruncated: return "truncated data";
    case IoErrc::kDimsOverflow: return "dims overflow";
    case IoErrc::kTrailingBytes: return "trailing bytes";
    case IoErrc::kDuplicateName: return "duplicate name";
  }
  return "unknown";
}

class IoError : public std::runtime_error {
 public:
  IoError(IoErrc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code) {}
  IoErrc code() const noexcept { return code_; }

 private:
  IoErrc code_;
};

inline constexpr std::string_view kTensorMagic = "ATT1";
inline constexpr std::uint8_t kTensorVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  friend bool operator==(const Tensor& a, const Tensor& b) {
    if (a.dims != b.dims || a.data.size() != b.data.size()) return false;
    // Bitwise, so NaN payloads and signed zeros compare exactly.
    return std::memcmp(a.data.data(), b.data.data(), a.data.size() * 4) == 0;
  }
};

using Bytes = std::vector<std::uint8_t>;

namespace detail {

inline void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }
inline void put_le(Bytes& out, std::uint64_t v, int width) {
  for (int i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (remaining() < n)
      throw IoError(IoErrc::kTruncated,
                    attnscope::detail::concat(what, ": need ", n, " bytes, have ",
                                              remaining()));
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t le(int width, const char* what) {
    auto s = take(static_cast<std::size_t>(width), what);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void encode_tensor(const Tensor& t, Bytes& out) {
  if (t.dims.size() > 255)
    throw IoError(IoErrc::kDimsOverflow, "more than 255 dimensions");
  if (t.element_count() != t.data.size())
    attnscope::detail::fail("encode_tensor: dims describe ", t.element_count(),
                            " elements, payload has ", t.data.size());
  out.insert(out.end(), kTensorMagic.begin(), kTensorMagic.end());
  detail::put_u8(out, kTensorVersion);
  detail::put_u8(out, kDtypeF32);
  detail::put_u8(out, static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) detail::put_le(out, d, 8);
  for (float f : t.data) detail::put_le(out, std::bit_cast<std::uint32_t>(f), 4);
}

inline Bytes encode_tensor(const Tensor& t) {
  Bytes out;
  encode_tensor(t, out);
  return out;
}

inline Tensor decode_tensor(detail::Reader& r) {
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kTensorMagic.data(), 4) != 0)
    throw IoError(IoErrc::kBadMagic, "expected ATT1");
  const auto version = r.le(1, "version");
  if (version != kTensorVersion)
    throw IoError(IoErrc::kBadVersion, attnscope::detail::concat("version ", version));
  const auto dtype = r.le(1, "dtype");
  if (dtype != kDtypeF32)
    throw IoError(IoErrc::kBadDtype, attnscope::detail::concat("dtype ", dtype));
  const auto ndim = r.le(1, "ndim");
  Tensor t;
  std::uint64_t count = 1;
  for (std::uint64_t i = 0; i < ndim; ++i) {
    const std::uint64_t d = r.le(8, "dims");
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / d)
      throw IoError(IoErrc::kDimsOverflow, "element count does not fit in 64 bits");
    count *= d;
    t.dims.push_back(d);
  }
  if (count > r.remaining() / 4)
    throw IoError(IoErrc::kTruncated,
                  attnscope::detail::concat("payload needs ", count, " floats, ",
                                            r.remaining(), " bytes left"));
  auto payload = r.take(static_cast<std::size_t>(count) * 4, "payload");
  t.data.resize(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(payload[i * 4 + b]) << (8 * b);
    t.data[i] = std::bit_cast<float>(bits);
  }
  return t;
}

inline Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  detail::Reader r(bytes);
  Tensor t = decode_tensor(r);
  if (r.remaining() != 0)
    throw IoError(IoErrc::kTrailingBytes,
                  attnscope::detail::concat(r.remaining(), " bytes after payload"));
  return t;
}

inline Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrc::kOpenFailed, path);
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(IoErrc::kReadFailed, path);
  return bytes;
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrc::kOpenFailed, path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(IoErrc::kWriteFailed, path);
}

inline Tensor read_tensor(const std::string& path) {
  return decode_tensor(read_file(path));
}

inline void write_tensor(const std::string& path, const Tensor& t) {
  write_file(path, encode_tensor(t));
}

// Conversions between compute types and the float32 container.

inline Tensor to_tensor(const Matrix& m) {
  Tensor t{{static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
  t.data.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) t.data[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  return t;
}

inline Tensor to_tensor(const Vector& v) {
  Tensor t{{static_cast<std::uint64_t>(v.size())}, {}};
  t.data.resize(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
  return t;
}

inline Tensor to_tensor(const AttentionStack& s) {
  Tensor t{{s.layers, s.heads, s.tokens, s.tokens}, {}};
  t.data.reserve(s.layers * s.heads * s.tokens * s.tokens);
  for (const auto& m : s.weights)
    for (Eigen::Index i = 0; i < m.size(); ++i) t.data.push_back(static_cast<float>(m.data()[i]));
  return t;
}

inline Matrix to_matrix(const Tensor& t) {
  if (t.dims.size() != 2)
    attnscope::detail::fail("expected a 2-D tensor, got ", t.dims.size(), "-D");
  Matrix m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
  for (std::size_t i = 0; i < t.data.size(); ++i) m.data()[i] = t.data[i];
  return m;
}

// Raw 4-D conversion without any stochasticity check.
inline AttentionStack to_attention_stack(const Tensor& t) {
  if (t.dims.size() != 4)
    attnscope::detail::fail("attention tensor must be 4-D, got ", t.dims.size(), "-D");
  if (t.dims[2] != t.dims[3])
    attnscope::detail::fail("attention tensor: last two dims differ (", t.dims[2],
                            " vs ", t.dims[3], ")");
  AttentionStack s(t.dims[0], t.dims[1], t.dims[2]);
  std::size_t k = 0;
  for (auto& m : s.weights)
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = t.data[k++];
  return s;
}

struct ExternalAttention {
  AttentionStack stack;
  std::vector<std::string> warnings;
};

inline constexpr double kExternalRowTolerance = 1e-3;
inline constexpr double kRenormalizeWarnAbove = 1e-5;

// Accepts float32-lossy exports: every row must be non-negative and sum to
// 1 within 1e-3. Rows are renormalized; deviations above 1e-5 are reported.
inline ExternalAttention validate_external_attention(AttentionStack stack,
                                                     std::size_t expected_tokens) {
  if (expected_tokens != 0 && stack.tokens != expected_tokens)
    attnscope::detail::fail("attention has ", stack.tokens, " tokens, expected ",
                            expected_tokens);
  ExternalAttention out;
  std::size_t warned_rows = 0;
  double worst = 0.0;
  for (std::size_t l = 0; l < stack.layers; ++l)
    for (std::size_t h = 0; h < stack.heads; ++h) {
      Matrix& m = stack.at(l, h);
      if (!m.allFinite())
        attnscope::detail::fail("attention layer ", l, " head ", h, " has non-finite values");
      if (m.minCoeff() < 0.0)
        attnscope::detail::fail("attention layer ", l, " head ", h,
                                " has negative entries; not attention data");
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double sum = m.row(r).sum();
        const double err = std::abs(sum - 1.0);
        if (err > kExternalRowTolerance)
          attnscope::detail::fail("attention layer ", l, " head ", h, " row ", r,
                                  " sums to ", sum, "; not attention data");
        if (err > kRenormalizeWarnAbove) {
          ++warned_rows;
          worst = std::max(worst, err);
        }
        m.row(r) /= sum;
      }
    }
  if (warned_rows)
    out.warnings.push_back(attnscope::detail::concat(
        "renormalized ", warned_rows, " attention rows (max |sum-1| = ", worst, ")"));
  out.stack = std::move(stack);
  return out;
}

inline ExternalAttention load_attention_external(const std::string& path,
                                                 std::size_t expected_tokens = 0) {
  return validate_external_attention(to_attention_stack(read_tensor(path)),
                                     expected_tokens);
}

}  // namespace attnscope::io
