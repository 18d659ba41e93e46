#include "space/wal.hpp"

#include "common/crc.hpp"
#include "common/errors.hpp"

namespace pagestore::space {

namespace {
constexpr std::size_t kHeaderSize = 8 + 1 + 4;
}

bytes encode_wal_record(const WalRecord& rec) {
  ByteWriter w;
  w.u64(rec.lsn);
  w.u8(static_cast<std::uint8_t>(rec.kind));
  w.u32(static_cast<std::uint32_t>(rec.payload.size()));
  w.raw(rec.payload);
  w.u32(crc32_of(w.data()));
  return w.take();
}

std::vector<WalRecord> replay_wal(byte_span stream) {
  std::vector<WalRecord> out;
  std::size_t pos = 0;
  while (stream.size() - pos >= kHeaderSize + 4) {
    ByteReader r(stream.subspan(pos));
    std::uint64_t lsn = r.u64();
    std::uint8_t kind = r.u8();
    std::uint32_t payload_len = r.u32();
    std::size_t record_size = kHeaderSize + payload_len + 4;
    if (pos + record_size > stream.size()) break;  // torn tail
    byte_span payload = r.raw(payload_len);
    std::uint32_t crc = r.u32();
    bool valid = kind >= 1 && kind <= 4 &&
                 crc32_of(stream.subspan(pos, kHeaderSize + payload_len)) == crc;
    if (!valid) {
      if (pos + record_size == stream.size()) break;  // torn final record
      throw CorruptWal("interior wal record failed crc");
    }
    out.push_back({lsn, static_cast<WalKind>(kind), bytes(payload.begin(), payload.end())});
    pos += record_size;
  }
  return out;
}

std::uint64_t Wal::append(WalKind kind, byte_span payload) {
  WalRecord rec{next_lsn_++, kind, bytes(payload.begin(), payload.end())};
  log_->append(encode_wal_record(rec));
  return rec.lsn;
}

}  // namespace pagestore::space
