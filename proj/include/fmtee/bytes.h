// Copyright 2026 The fmtee Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FMTEE_BYTES_H_
#define FMTEE_BYTES_H_

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fmtee/error.h"

namespace fmtee {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

std::string to_hex(ByteView bytes);
// Throws Error(kMalformed) on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }
inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

Bytes concat(std::initializer_list<ByteView> parts);

// True if `needle` occurs as a contiguous run inside `haystack`.
bool contains_subsequence(ByteView haystack, ByteView needle);

// Fixed-size byte value with a phantom tag so that digests, keys and ids do
// not silently convert into one another.
template <std::size_t N, typename Tag>
class FixedBytes {
 public:
  static constexpr std::size_t kSize = N;

  constexpr FixedBytes() : bytes_{} {}
  explicit constexpr FixedBytes(const std::array<std::uint8_t, N>& bytes)
      : bytes_(bytes) {}

  // Throws Error(kMalformed) unless `view` is exactly N bytes.
  static FixedBytes from(ByteView view) {
    if (view.size() != N) {
      throw Error(ErrorCode::kMalformed,
                  "expected " + std::to_string(N) + " bytes, got " +
                      std::to_string(view.size()));
    }
    FixedBytes out;
    std::copy(view.begin(), view.end(), out.bytes_.begin());
    return out;
  }
  static FixedBytes from_hex(std::string_view hex) {
    return from(::fmtee::from_hex(hex));
  }

  std::uint8_t* data() { return bytes_.data(); }
  const std::uint8_t* data() const { return bytes_.data(); }
  static constexpr std::size_t size() { return N; }
  ByteView view() const { return {bytes_.data(), N}; }
  Bytes to_vector() const { return Bytes(bytes_.begin(), bytes_.end()); }
  std::string hex() const { return to_hex(view()); }
  bool is_zero() const {
    return std::all_of(bytes_.begin(), bytes_.end(),
                       [](std::uint8_t b) { return b == 0; });
  }
  std::uint8_t& operator[](std::size_t i) { return bytes_[i]; }
  std::uint8_t operator[](std::size_t i) const { return bytes_[i]; }

  friend auto operator<=>(const FixedBytes&, const FixedBytes&) = default;

 private:
  std::array<std::uint8_t, N> bytes_;
};

// Big-endian, length-prefixed serialization helpers shared by every wire and
// file format in the project.
class ByteWriter {
 public:
  ByteWriter& u8(std::uint8_t v);
  ByteWriter& u16(std::uint16_t v);
  ByteWriter& u32(std::uint32_t v);
  ByteWriter& u64(std::uint64_t v);
  ByteWriter& i32(std::int32_t v) { return u32(static_cast<std::uint32_t>(v)); }
  ByteWriter& raw(ByteView bytes);
  // u32 length followed by the bytes.
  ByteWriter& lp(ByteView bytes);
  ByteWriter& lp(std::string_view s) { return lp(as_bytes(s)); }
  template <std::size_t N, typename Tag>
  ByteWriter& fixed(const FixedBytes<N, Tag>& v) {
    return raw(v.view());
  }

  const Bytes& bytes() const { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

// Reader over a borrowed buffer. Every short read throws Error(`code`), so a
// caller parsing a quote reports a quote error, a channel reports a handshake
// error, and so on.
class ByteReader {
 public:
  explicit ByteReader(ByteView in, ErrorCode code = ErrorCode::kMalformed)
      : in_(in), code_(code) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  ByteView raw(std::size_t n);
  Bytes lp(std::size_t max_len = 1u << 30);
  std::string lp_string(std::size_t max_len = 1u << 20);
  template <typename T>
  T fixed() {
    return T::from(raw(T::kSize));
  }
  ByteView rest();

  std::size_t remaining() const { return in_.size() - pos_; }
  bool done() const { return pos_ == in_.size(); }
  // Throws unless the whole buffer was consumed.
  void expect_end() const;

 private:
  void need(std::size_t n) const;

  ByteView in_;
  std::size_t pos_ = 0;
  ErrorCode code_;
};

}  // namespace fmtee

#endif  // FMTEE_BYTES_H_
