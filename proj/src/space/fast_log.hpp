#pragma once

#include <cstdint>
#include <filesystem>

#include "common/serde.hpp"

namespace pagestore::space {

// Append-only byte stream on the fast uncompressed device (the Optane-class
// stand-in). Appends buffer in memory; flush() marks them durable. crash()
// models power loss: everything past the durable watermark vanishes except an
// optional torn prefix, which lets tests plant a partially written tail.
class FastLog {
 public:
  explicit FastLog(std::uint64_t capacity_bytes) : capacity_(capacity_bytes) {}

  std::uint64_t append(byte_span data);  // returns logical offset of the record
  void flush() { durable_ = buf_.size(); }

  std::uint64_t size() const { return base_ + buf_.size(); }
  std::uint64_t durable_size() const { return base_ + durable_; }
  std::uint64_t bytes_appended() const { return appended_; }
  std::uint64_t capacity() const { return capacity_; }
  std::uint64_t base_offset() const { return base_; }

  byte_span durable_bytes() const { return byte_span(buf_.data(), durable_); }
  byte_span all_bytes() const { return byte_span(buf_.data(), buf_.size()); }

  void crash(std::uint64_t keep_unflushed = 0);
  // Reclaims the stream up to an absolute offset (bytes below it are gone).
  void truncate_prefix(std::uint64_t new_base);

  void save(const std::filesystem::path& path) const;
  static FastLog load(const std::filesystem::path& path);

 private:
  std::uint64_t capacity_;
  std::uint64_t base_ = 0;      // absolute offset of buf_[0]
  std::uint64_t durable_ = 0;   // durable watermark within buf_
  std::uint64_t appended_ = 0;  // lifetime byte counter (bypass probes)
  bytes buf_;
};

}  // namespace pagestore::space
