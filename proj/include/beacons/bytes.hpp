#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace beacons {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

template <std::size_t N>
using ByteArray = std::array<std::uint8_t, N>;

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_hex(ByteView bytes);
Bytes from_hex(std::string_view hex);

template <std::size_t N>
ByteArray<N> array_from_hex(std::string_view hex) {
  auto raw = from_hex(hex);
  if (raw.size() != N) {
    throw DecodeError("expected " + std::to_string(N) + " bytes of hex, got " +
                      std::to_string(raw.size()));
  }
  ByteArray<N> out{};
  std::copy(raw.begin(), raw.end(), out.begin());
  return out;
}

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// Canonical encoder: big-endian integers, every variable or fixed byte field
/// prefixed with a u32 length. Two encoders fed the same sequence of calls
/// produce identical bytes.
class ByteWriter {
 public:
  ByteWriter& u8(std::uint8_t v) {
    out_.push_back(v);
    return *this;
  }
  ByteWriter& u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
  }
  ByteWriter& u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
  }
  ByteWriter& field(ByteView bytes) {
    u32(static_cast<std::uint32_t>(bytes.size()));
    out_.insert(out_.end(), bytes.begin(), bytes.end());
    return *this;
  }
  ByteWriter& str(std::string_view s) { return field(as_bytes(s)); }

  const Bytes& bytes() const& { return out_; }
  Bytes take() && { return std::move(out_); }

 private:
  Bytes out_;
};

class ByteReader {
 public:
  explicit ByteReader(ByteView in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | in_[pos_++];
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | in_[pos_++];
    return v;
  }
  Bytes field() {
    auto len = u32();
    need(len);
    Bytes out(in_.begin() + pos_, in_.begin() + pos_ + len);
    pos_ += len;
    return out;
  }
  template <std::size_t N>
  ByteArray<N> fixed() {
    auto raw = field();
    if (raw.size() != N) throw DecodeError("fixed field length mismatch");
    ByteArray<N> out{};
    std::copy(raw.begin(), raw.end(), out.begin());
    return out;
  }
  std::string str() {
    auto raw = field();
    return {raw.begin(), raw.end()};
  }

  bool done() const { return pos_ == in_.size(); }
  void expect_done() const {
    if (!done()) throw DecodeError("trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw DecodeError("truncated input");
  }

  ByteView in_;
  std::size_t pos_ = 0;
};

}  // namespace beacons
