#include "space/space_index.hpp"

#include <algorithm>

#include "common/errors.hpp"

namespace pagestore::space {

namespace {
constexpr std::uint8_t kOpPut = 1;
constexpr std::uint8_t kOpRemove = 2;
constexpr std::uint32_t kSnapshotMagic = 0x58444953;  // "SIDX"
constexpr std::uint16_t kSnapshotVersion = 1;
}  // namespace

void IndexEntry::serialize(ByteWriter& w) const {
  w.u64(page_id);
  w.u8(static_cast<std::uint8_t>(mode));
  w.u8(static_cast<std::uint8_t>(algorithm));
  w.u64(base_lsn);
  w.u64(blocks.start);
  w.u32(blocks.count);
  w.u32(payload_len);
  w.u16(heavy_index);
  w.u16(heavy_count);
  w.u32(slot_lba);
  w.u16(slot_bytes);
  w.u16(slot_records);
  w.u16(static_cast<std::uint16_t>(scattered_lbas.size()));
  for (std::uint32_t lba : scattered_lbas) w.u32(lba);
}

IndexEntry IndexEntry::deserialize(ByteReader& r) {
  IndexEntry e;
  e.page_id = r.u64();
  e.mode = static_cast<PageMode>(r.u8());
  e.algorithm = static_cast<codec::Algo>(r.u8());
  e.base_lsn = r.u64();
  e.blocks.start = r.u64();
  e.blocks.count = r.u32();
  e.payload_len = r.u32();
  e.heavy_index = r.u16();
  e.heavy_count = r.u16();
  e.slot_lba = r.u32();
  e.slot_bytes = r.u16();
  e.slot_records = r.u16();
  std::uint16_t n = r.u16();
  e.scattered_lbas.reserve(n);
  for (std::uint16_t i = 0; i < n; i++) e.scattered_lbas.push_back(r.u32());
  return e;
}

SpaceIndex::SpaceIndex(std::uint64_t device_logical_capacity, FastLog* wal_log, TrimFn trim)
    : extents_(device_logical_capacity / kExtentSize), wal_(wal_log), trim_(std::move(trim)) {}

BlockRun SpaceIndex::allocate_blocks(std::uint32_t n) {
  if (n == 0 || n > 256) throw InvalidArgument("allocation must be 1..256 blocks");

  auto run = bitmap_.find_free_run(n);
  std::vector<std::uint32_t> adopted;
  if (!run) {
    std::uint32_t extent_count = (n + kExtentBlocks - 1) / kExtentBlocks;
    std::uint32_t first = extent_count == 1 ? extents_.allocate()
                                            : extents_.allocate_run(extent_count);
    for (std::uint32_t i = 0; i < extent_count; i++) {
      adopted.push_back(first + i);
      bitmap_.adopt_extent(first + i);
    }
    run = BlockRun{static_cast<std::uint64_t>(first) * kExtentBlocks, n};
  }

  ByteWriter w;
  w.u64(run->start);
  w.u32(run->count);
  w.u16(static_cast<std::uint16_t>(adopted.size()));
  for (std::uint32_t e : adopted) w.u32(e);
  wal_.append(WalKind::kAlloc, w.data());

  bitmap_.set_run(*run);
  return *run;
}

void SpaceIndex::apply_alloc(byte_span payload) {
  ByteReader r(payload);
  BlockRun run{r.u64(), r.u32()};
  std::uint16_t n = r.u16();
  for (std::uint16_t i = 0; i < n; i++) {
    std::uint32_t extent = r.u32();
    extents_.mark_allocated(extent);
    bitmap_.adopt_extent(extent);
  }
  bitmap_.set_run(run);
}

void SpaceIndex::free_blocks(const BlockRun& run) {
  if (!bitmap_.run_is_set(run)) throw DoubleFree("run not allocated");

  // Extents that become empty go back to the device allocator.
  std::vector<std::uint32_t> released;
  {
    BlockBitmap probe = bitmap_;
    probe.clear_run(run);
    std::uint32_t first = static_cast<std::uint32_t>(run.start / kExtentBlocks);
    std::uint32_t last =
        static_cast<std::uint32_t>((run.start + run.count - 1) / kExtentBlocks);
    for (std::uint32_t e = first; e <= last; e++)
      if (probe.extent_is_free(e)) released.push_back(e);
  }

  ByteWriter w;
  w.u64(run.start);
  w.u32(run.count);
  w.u16(static_cast<std::uint16_t>(released.size()));
  for (std::uint32_t e : released) w.u32(e);
  wal_.append(WalKind::kFree, w.data());

  bitmap_.clear_run(run);
  for (std::uint32_t e : released) {
    bitmap_.drop_extent(e);
    extents_.release(e);
  }
  if (trim_) trim_(run.start, run.count);
}

void SpaceIndex::apply_free(byte_span payload) {
  ByteReader r(payload);
  BlockRun run{r.u64(), r.u32()};
  bitmap_.clear_run(run);
  std::uint16_t n = r.u16();
  for (std::uint16_t i = 0; i < n; i++) {
    std::uint32_t extent = r.u32();
    bitmap_.drop_extent(extent);
    extents_.release(extent);
  }
}

void SpaceIndex::index_put(const IndexEntry& entry) {
  ByteWriter w;
  w.u8(kOpPut);
  entry.serialize(w);
  wal_.append(WalKind::kIndexUpdate, w.data());
  index_[entry.page_id] = entry;
}

const IndexEntry& SpaceIndex::index_get(std::uint64_t page_id) const {
  auto it = index_.find(page_id);
  if (it == index_.end()) throw NotFound("page not in index");
  return it->second;
}

const IndexEntry* SpaceIndex::index_find(std::uint64_t page_id) const {
  auto it = index_.find(page_id);
  return it == index_.end() ? nullptr : &it->second;
}

void SpaceIndex::index_remove(std::uint64_t page_id) {
  auto it = index_.find(page_id);
  if (it == index_.end()) throw NotFound("page not in index");
  ByteWriter w;
  w.u8(kOpRemove);
  w.u64(page_id);
  wal_.append(WalKind::kIndexUpdate, w.data());
  index_.erase(it);
}

void SpaceIndex::apply_index_update(byte_span payload) {
  ByteReader r(payload);
  std::uint8_t op = r.u8();
  if (op == kOpPut) {
    IndexEntry e = IndexEntry::deserialize(r);
    index_[e.page_id] = e;
  } else if (op == kOpRemove) {
    index_.erase(r.u64());
  } else {
    throw CorruptWal("unknown index update op");
  }
}

bytes SpaceIndex::snapshot_locked(byte_span engine_meta) const {
  ByteWriter w;
  w.u32(kSnapshotMagic);
  w.u16(kSnapshotVersion);
  extents_.serialize(w);
  bitmap_.serialize(w);
  w.u64(index_.size());
  for (const auto& [page_id, entry] : index_) entry.serialize(w);
  w.u32(static_cast<std::uint32_t>(engine_meta.size()));
  w.raw(engine_meta);
  return w.take();
}

void SpaceIndex::append_marker(byte_span payload) {
  wal_.append(WalKind::kCheckpoint, payload);
  wal_.flush();
  last_marker_.assign(payload.begin(), payload.end());
}

bytes SpaceIndex::checkpoint(byte_span engine_meta) {
  bytes snapshot = snapshot_locked(engine_meta);
  wal_.append(WalKind::kCheckpoint, {});
  wal_.flush();
  wal_.log()->truncate_prefix(wal_.log()->durable_size());
  return snapshot;
}

byte_span SpaceIndex::checkpoint_engine_meta(byte_span snapshot) {
  ByteReader r(snapshot);
  if (r.u32() != kSnapshotMagic) throw CorruptImage("bad snapshot magic");
  if (r.u16() != kSnapshotVersion) throw CorruptImage("unsupported snapshot version");
  ExtentAllocator::deserialize(r);
  BlockBitmap::deserialize(r);
  std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; i++) IndexEntry::deserialize(r);
  std::uint32_t meta_len = r.u32();
  return r.raw(meta_len);
}

void SpaceIndex::recover(byte_span snapshot, byte_span wal_stream) {
  index_.clear();
  bitmap_ = BlockBitmap();
  last_marker_.clear();
  if (!snapshot.empty()) {
    ByteReader r(snapshot);
    if (r.u32() != kSnapshotMagic) throw CorruptImage("bad snapshot magic");
    if (r.u16() != kSnapshotVersion) throw CorruptImage("unsupported snapshot version");
    extents_ = ExtentAllocator::deserialize(r);
    bitmap_ = BlockBitmap::deserialize(r);
    std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; i++) {
      IndexEntry e = IndexEntry::deserialize(r);
      index_[e.page_id] = e;
    }
  } else {
    extents_ = ExtentAllocator(extents_.total());
  }

  std::uint64_t last_lsn = 0;
  for (const WalRecord& rec : replay_wal(wal_stream)) {
    last_lsn = rec.lsn;
    switch (rec.kind) {
      case WalKind::kAlloc: apply_alloc(rec.payload); break;
      case WalKind::kFree: apply_free(rec.payload); break;
      case WalKind::kIndexUpdate: apply_index_update(rec.payload); break;
      case WalKind::kCheckpoint:
        if (!rec.payload.empty()) last_marker_ = rec.payload;
        break;
    }
  }
  wal_.set_next_lsn(last_lsn + 1);
}

}  // namespace pagestore::space
