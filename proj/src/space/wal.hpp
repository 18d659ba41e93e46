#pragma once

#include <cstdint>
#include <vector>

#include "common/serde.hpp"
#include "space/fast_log.hpp"

namespace pagestore::space {

enum class WalKind : std::uint8_t {
  kIndexUpdate = 1,
  kAlloc = 2,
  kFree = 3,
  kCheckpoint = 4,
};

struct WalRecord {
  std::uint64_t lsn;
  WalKind kind;
  bytes payload;
};

// Record framing: lsn u64, kind u8, payload_len u32, payload, crc32 u32 over
// everything before the crc; little-endian.
bytes encode_wal_record(const WalRecord& rec);

// Replays a durable stream. An incomplete or crc-failing final record is a
// torn tail and is dropped; a crc failure with further data behind it is
// interior corruption and raises CorruptWal.
std::vector<WalRecord> replay_wal(byte_span stream);

// Appender with monotonically increasing lsns over a FastLog; the caller
// flushes at acknowledgment boundaries (group commit).
class Wal {
 public:
  explicit Wal(FastLog* log) : log_(log) {}

  std::uint64_t append(WalKind kind, byte_span payload);
  void flush() { log_->flush(); }
  std::uint64_t next_lsn() const { return next_lsn_; }
  void set_next_lsn(std::uint64_t lsn) { next_lsn_ = lsn; }
  FastLog* log() { return log_; }

 private:
  FastLog* log_;
  std::uint64_t next_lsn_ = 1;
};

}  // namespace pagestore::space
