#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "common/errors.hpp"

namespace pagestore {

using bytes = std::vector<std::uint8_t>;
using byte_span = std::span<const std::uint8_t>;

// All on-disk and wire integers are little-endian.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void raw(byte_span s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::size_t size() const { return buf_.size(); }
  const bytes& data() const { return buf_; }
  bytes take() { return std::move(buf_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; i++) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(byte_span s) : s_(s) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  byte_span raw(std::size_t n) {
    need(n);
    byte_span out = s_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return s_.size() - pos_; }
  std::size_t position() const { return pos_; }
  bool exhausted() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > s_.size()) throw CorruptPayload("truncated input");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; i++) v |= static_cast<std::uint64_t>(s_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  byte_span s_;
  std::size_t pos_ = 0;
};

inline bytes to_bytes(const std::string& s) {
  return bytes(s.begin(), s.end());
}

inline std::string to_string(byte_span s) {
  return std::string(s.begin(), s.end());
}

}  // namespace pagestore
