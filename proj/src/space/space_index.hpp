#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "codec/compressors.hpp"
#include "common/serde.hpp"
#include "space/allocators.hpp"
#include "space/wal.hpp"

namespace pagestore::space {

enum class PageMode : std::uint8_t { kNormal = 0, kNone = 1, kHeavy = 2 };

inline constexpr std::uint32_t kNoSlot = 0xFFFFFFFF;

// Per-page mapping: data blocks (or the shared heavy-segment run), the
// materialized lsn of the stored image, and the page's per-page log slot.
struct IndexEntry {
  std::uint64_t page_id = 0;
  PageMode mode = PageMode::kNone;
  codec::Algo algorithm = codec::Algo::kNone;
  std::uint64_t base_lsn = 0;
  BlockRun blocks;
  std::uint32_t payload_len = 0;
  std::uint16_t heavy_index = 0;
  std::uint16_t heavy_count = 0;
  std::uint32_t slot_lba = kNoSlot;
  std::uint16_t slot_bytes = 0;
  std::uint16_t slot_records = 0;
  std::vector<std::uint32_t> scattered_lbas;  // comparison mode only

  bool operator==(const IndexEntry&) const = default;

  void serialize(ByteWriter& w) const;
  static IndexEntry deserialize(ByteReader& r);
};

// Mapping plus allocation state for one chunk, recoverable from
// checkpoint + WAL. Mutations append to the WAL before becoming visible;
// the caller flushes at acknowledgment boundaries.
class SpaceIndex {
 public:
  using TrimFn = std::function<void(std::uint64_t lba, std::uint32_t count)>;

  SpaceIndex(std::uint64_t device_logical_capacity, FastLog* wal_log, TrimFn trim);

  BlockRun allocate_blocks(std::uint32_t n);
  void free_blocks(const BlockRun& run);

  void index_put(const IndexEntry& entry);
  const IndexEntry& index_get(std::uint64_t page_id) const;  // NotFound
  const IndexEntry* index_find(std::uint64_t page_id) const;
  void index_remove(std::uint64_t page_id);

  void flush() { wal_.flush(); }

  // Durable engine marker riding a CHECKPOINT-kind record; recovery keeps the
  // payload of the last one seen.
  void append_marker(byte_span payload);
  byte_span last_marker() const { return last_marker_; }

  // Snapshot covering index, allocators and an opaque engine blob; truncates
  // the WAL to records after the snapshot.
  bytes checkpoint(byte_span engine_meta = {});
  static byte_span checkpoint_engine_meta(byte_span snapshot);
  void recover(byte_span snapshot, byte_span wal_stream);

  const std::map<std::uint64_t, IndexEntry>& entries() const { return index_; }
  std::uint64_t allocated_blocks() const { return bitmap_.popcount(); }
  std::uint64_t owned_extents() const { return bitmap_.owned_extents().size(); }
  std::uint64_t free_extents() const { return extents_.free_count(); }
  std::uint64_t total_extents() const { return extents_.total(); }
  bool block_allocated(std::uint64_t block) const {
    return bitmap_.run_is_set({block, 1});
  }

 private:
  void apply_alloc(byte_span payload);
  void apply_free(byte_span payload);
  void apply_index_update(byte_span payload);
  bytes snapshot_locked(byte_span engine_meta) const;

  ExtentAllocator extents_;
  BlockBitmap bitmap_;
  std::map<std::uint64_t, IndexEntry> index_;
  Wal wal_;
  TrimFn trim_;
  bytes last_marker_;
};

}  // namespace pagestore::space
