#include "store/chunk_store.hpp"

#include <algorithm>
#include <fstream>

#include "common/crc.hpp"
#include "common/errors.hpp"

namespace pagestore::store {

namespace {

constexpr std::size_t kRecordOverhead = 8 + 8 + 2 + 2 + 4;  // wire bytes around the payload
constexpr std::size_t kCacheRecordOverhead = 32;

bytes zero_page() { return bytes(kPageSize, 0); }

std::uint32_t blocks_for(std::size_t payload_len) {
  return static_cast<std::uint32_t>((payload_len + kBlockSize - 1) / kBlockSize);
}

}  // namespace

bytes encode_redo_records(const std::vector<RedoRecord>& records) {
  ByteWriter w;
  for (const RedoRecord& rec : records) {
    ByteWriter r;
    r.u64(rec.lsn);
    r.u64(rec.page_id);
    r.u16(rec.offset);
    r.u16(static_cast<std::uint16_t>(rec.data.size()));
    r.raw(rec.data);
    w.raw(r.data());
    w.u32(crc32_of(r.data()));
  }
  return w.take();
}

std::vector<RedoRecord> decode_redo_records(byte_span stream) {
  std::vector<RedoRecord> out;
  ByteReader r(stream);
  while (!r.exhausted()) {
    std::size_t start = r.position();
    RedoRecord rec;
    rec.lsn = r.u64();
    rec.page_id = r.u64();
    rec.offset = r.u16();
    std::uint16_t len = r.u16();
    byte_span payload = r.raw(len);
    std::size_t end = r.position();
    std::uint32_t crc = r.u32();
    if (crc32_of(stream.subspan(start, end - start)) != crc)
      throw CorruptPayload("redo record crc mismatch");
    rec.data.assign(payload.begin(), payload.end());
    out.push_back(std::move(rec));
  }
  return out;
}

void EngineConfig::validate() const {
  device.validate();
  selector.validate();
  if (replica_count == 0 || replica_count % 2 == 0)
    throw ConfigError("replica_count must be odd");
  if (reader_count == 0) throw ConfigError("reader_count must be positive");
  if (heavy.unit_size % kPageSize != 0 || heavy.unit_size == 0 ||
      heavy.unit_size / kBlockSize > 256)
    throw ConfigError("heavy unit must be a page multiple up to 1 MB");
  if (fast_log_capacity == 0) throw ConfigError("fast_log_capacity must be positive");
}

ChunkStore::Replica::Replica(const EngineConfig& cfg)
    : dev(cfg.device),
      wal_log(cfg.fast_log_capacity),
      redo(cfg.fast_log_capacity),
      idx(cfg.device.logical_capacity, &wal_log,
          [this](std::uint64_t lba, std::uint32_t count) { dev.trim(lba, count); }) {}

ChunkStore::ChunkStore(EngineConfig cfg) : cfg_(std::move(cfg)), probe_(codec::model_probe()) {
  cfg_.validate();
  for (std::size_t i = 0; i < cfg_.replica_count; i++)
    reps_.push_back(std::make_unique<Replica>(cfg_));
  group_ = std::make_unique<ReplicationGroup>(
      cfg_.replica_count, [this](std::size_t r, byte_span op) { apply_op(r, op); });
  reader_lsns_.assign(cfg_.reader_count, 0);
}

std::uint64_t ChunkStore::reader_floor() const {
  std::uint64_t floor = durable_lsn_;
  for (std::uint64_t lsn : reader_lsns_) floor = std::min(floor, lsn);
  return floor;
}

void ChunkStore::set_reader_lsn(std::size_t reader, std::uint64_t lsn) {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  if (reader >= reader_lsns_.size()) throw InvalidArgument("unknown reader");
  if (lsn > durable_lsn_) throw FutureLsn("reader beyond durable lsn");
  reader_lsns_[reader] = lsn;
}

LsnState ChunkStore::lsn_state() const {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  return {durable_lsn_, apply_lsn_, reader_lsns_};
}

void ChunkStore::replicate_checked(byte_span op) {
  std::size_t acks = group_->replicate(op);
  acks += group_->pump_acks();
  if (acks < group_->quorum()) throw ReplicationLost("majority unreachable");
}

void ChunkStore::apply_op(std::size_t replica, byte_span op) {
  ByteReader r(op);
  OpKind kind = static_cast<OpKind>(r.u8());
  switch (kind) {
    case OpKind::kPageWrite: apply_page_write(replica, r); break;
    case OpKind::kRedoAppend: apply_redo_append(replica, r); break;
    case OpKind::kEvictSlot: apply_evict_slot(replica, r); break;
    case OpKind::kEvictScattered: apply_evict_scattered(replica, r); break;
    case OpKind::kAdvance: apply_advance(replica, r); break;
    case OpKind::kArchiveUnit: apply_archive_unit(replica, r); break;
    default: throw CorruptPayload("unknown op kind");
  }
}

void ChunkStore::retire_entry_blocks(Replica& rep, const space::IndexEntry& old) {
  for (std::uint32_t lba : old.scattered_lbas) rep.idx.free_blocks({lba, 1});
  if (old.mode == space::PageMode::kHeavy) {
    auto it = rep.heavy_refs.find(old.blocks.start);
    if (it == rep.heavy_refs.end()) return;
    if (--it->second == 0) {
      rep.idx.free_blocks(old.blocks);
      rep.heavy_refs.erase(it);
      if (&rep == reps_[0].get() && heavy_unit_cache_ &&
          heavy_unit_cache_->first == old.blocks.start)
        heavy_unit_cache_.reset();
    }
  } else {
    rep.idx.free_blocks(old.blocks);
  }
}

void ChunkStore::apply_page_write(std::size_t replica, ByteReader& r) {
  Replica& rep = *reps_[replica];
  std::uint64_t page_id = r.u64();
  space::PageMode mode = static_cast<space::PageMode>(r.u8());
  std::uint64_t base_lsn = r.u64();
  std::uint32_t framed_len = r.u32();
  codec::CompressedPage cp = codec::decode_framed_page(r.raw(framed_len));
  codec::Algo algo = cp.algorithm;
  byte_span payload(cp.payload);
  std::uint32_t payload_len = static_cast<std::uint32_t>(payload.size());

  std::optional<space::IndexEntry> old;
  if (const space::IndexEntry* p = rep.idx.index_find(page_id)) old = *p;

  space::IndexEntry e;
  e.page_id = page_id;
  e.mode = mode;
  e.algorithm = algo;
  e.base_lsn = base_lsn;
  e.payload_len = payload_len;
  e.blocks = rep.idx.allocate_blocks(blocks_for(payload_len));
  if (old) e.slot_lba = old->slot_lba;  // the 4 KB log slot follows the page

  bytes block(kBlockSize, 0);
  for (std::uint32_t i = 0; i < e.blocks.count; i++) {
    std::size_t begin = static_cast<std::size_t>(i) * kBlockSize;
    std::size_t n = std::min<std::size_t>(kBlockSize, payload_len - begin);
    std::fill(block.begin(), block.end(), 0);
    std::copy(payload.begin() + begin, payload.begin() + begin + n, block.begin());
    rep.dev.write_block(e.blocks.start + i, block);
    if (replica == 0) metrics_.device_writes++;
  }

  rep.idx.index_put(e);
  if (old) retire_entry_blocks(rep, *old);
  rep.idx.flush();
}

void ChunkStore::apply_redo_append(std::size_t replica, ByteReader& r) {
  Replica& rep = *reps_[replica];
  std::uint64_t last_lsn = r.u64();
  std::uint32_t len = r.u32();
  byte_span blob = r.raw(len);
  rep.redo.append(blob);
  rep.redo.flush();
  rep.redo_marks.push_back({last_lsn, rep.redo.size()});
  if (replica == 0) metrics_.redo_bytes += len;
}

void ChunkStore::apply_evict_slot(std::size_t replica, ByteReader& r) {
  Replica& rep = *reps_[replica];
  std::uint64_t page_id = r.u64();
  std::uint16_t record_count = r.u16();
  std::uint16_t len = r.u16();
  byte_span blob = r.raw(len);

  space::IndexEntry e = rep.idx.index_get(page_id);
  if (e.slot_lba == space::kNoSlot) e.slot_lba =
      static_cast<std::uint32_t>(rep.idx.allocate_blocks(1).start);
  bytes block(kBlockSize, 0);
  std::copy(blob.begin(), blob.end(), block.begin());
  rep.dev.write_block(e.slot_lba, block);
  if (replica == 0) metrics_.device_writes++;
  e.slot_bytes = len;
  e.slot_records = record_count;
  rep.idx.index_put(e);
  rep.idx.flush();
}

void ChunkStore::apply_evict_scattered(std::size_t replica, ByteReader& r) {
  Replica& rep = *reps_[replica];
  std::uint64_t page_id = r.u64();
  std::uint16_t record_count = r.u16();

  space::IndexEntry e = rep.idx.index_get(page_id);
  bytes block(kBlockSize, 0);
  for (std::uint16_t i = 0; i < record_count; i++) {
    std::uint16_t len = r.u16();
    byte_span rec = r.raw(len);
    space::BlockRun run = rep.idx.allocate_blocks(1);
    std::fill(block.begin(), block.end(), 0);
    std::copy(rec.begin(), rec.end(), block.begin());
    rep.dev.write_block(run.start, block);
    if (replica == 0) metrics_.device_writes++;
    e.scattered_lbas.push_back(static_cast<std::uint32_t>(run.start));
  }
  rep.idx.index_put(e);
  rep.idx.flush();
}

void ChunkStore::apply_advance(std::size_t replica, ByteReader& r) {
  Replica& rep = *reps_[replica];
  std::uint64_t target = r.u64();
  std::uint64_t durable = r.u64();
  std::uint64_t cut = rep.redo.base_offset();
  std::size_t keep = 0;
  for (std::size_t i = 0; i < rep.redo_marks.size(); i++) {
    if (rep.redo_marks[i].first <= target) {
      cut = rep.redo_marks[i].second;
      keep = i + 1;
    } else {
      break;
    }
  }
  rep.redo.truncate_prefix(cut);
  rep.redo_marks.erase(rep.redo_marks.begin(),
                       rep.redo_marks.begin() + static_cast<std::ptrdiff_t>(keep));

  // Truncation can drop the only durable copies of the latest lsns; pin the
  // lsn state in the metadata wal before acknowledging.
  ByteWriter meta;
  meta.u64(durable);
  meta.u64(target);
  rep.idx.append_marker(meta.data());
}

void ChunkStore::apply_archive_unit(std::size_t replica, ByteReader& r) {
  Replica& rep = *reps_[replica];
  std::uint16_t count = r.u16();
  std::vector<std::uint64_t> page_ids(count);
  for (auto& id : page_ids) id = r.u64();
  codec::Algo algo = static_cast<codec::Algo>(r.u8());
  std::uint64_t base_lsn = r.u64();
  std::uint32_t payload_len = r.u32();
  byte_span payload = r.raw(payload_len);

  space::BlockRun run = rep.idx.allocate_blocks(blocks_for(payload_len));
  bytes block(kBlockSize, 0);
  for (std::uint32_t i = 0; i < run.count; i++) {
    std::size_t begin = static_cast<std::size_t>(i) * kBlockSize;
    std::size_t n = std::min<std::size_t>(kBlockSize, payload_len - begin);
    std::fill(block.begin(), block.end(), 0);
    std::copy(payload.begin() + begin, payload.begin() + begin + n, block.begin());
    rep.dev.write_block(run.start + i, block);
    if (replica == 0) metrics_.device_writes++;
  }
  rep.heavy_refs[run.start] = count;

  for (std::uint16_t i = 0; i < count; i++) {
    std::optional<space::IndexEntry> old;
    if (const space::IndexEntry* p = rep.idx.index_find(page_ids[i])) old = *p;
    space::IndexEntry e;
    e.page_id = page_ids[i];
    e.mode = space::PageMode::kHeavy;
    e.algorithm = algo;
    e.base_lsn = base_lsn;
    e.blocks = run;
    e.payload_len = payload_len;
    e.heavy_index = i;
    e.heavy_count = count;
    if (old) e.slot_lba = old->slot_lba;
    rep.idx.index_put(e);
    if (old) retire_entry_blocks(rep, *old);
  }
  rep.idx.flush();
}

codec::CompressedPage ChunkStore::compress_for_store(byte_span page, std::uint64_t page_id,
                                                     const WriteHints& hints) {
  if (!cfg_.software_compression) return {codec::Algo::kNone, bytes(page.begin(), page.end())};
  if (cfg_.forced_algorithm) {
    codec::CompressedPage cp;
    cp.payload = cfg_.forced_algorithm == codec::Algo::kLz4
                     ? codec::lz4_compress(page)
                     : codec::zstd_compress(page, cfg_.selector.zstd_hot_level);
    cp.algorithm = *cfg_.forced_algorithm;
    if (cp.padded_len() >= kPageSize) {
      cp.algorithm = codec::Algo::kNone;
      cp.payload.assign(page.begin(), page.end());
    }
    return cp;
  }
  codec::Algo last = codec::Algo::kLz4;
  if (auto it = last_algorithm_.find(page_id); it != last_algorithm_.end()) last = it->second;
  auto [cp, trace] = codec::compress_page(
      page, last, {hints.cpu_utilization, hints.update_fraction}, cfg_.selector, probe_);
  last_algorithm_[page_id] = trace.selected;
  return cp;
}

void ChunkStore::emit_page_write(std::uint64_t page_id, const codec::CompressedPage& cp,
                                 std::uint64_t base_lsn) {
  space::PageMode mode =
      cp.algorithm == codec::Algo::kNone ? space::PageMode::kNone : space::PageMode::kNormal;
  bytes framed = codec::encode_framed_page(cp);
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(OpKind::kPageWrite));
  w.u64(page_id);
  w.u8(static_cast<std::uint8_t>(mode));
  w.u64(base_lsn);
  w.u32(static_cast<std::uint32_t>(framed.size()));
  w.raw(framed);
  replicate_checked(w.data());
}

void ChunkStore::write_page(std::uint64_t page_id, byte_span data, WriteMode mode,
                            const WriteHints& hints) {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  if (data.size() != kPageSize) throw InvalidArgument("page writes take exactly 16384 bytes");
  if (mode == WriteMode::kHeavy) throw InvalidArgument("heavy mode only via archive_range");
  if (page_id == RedoRecord::kTxnMarkPageId) throw InvalidArgument("reserved page id");

  codec::CompressedPage cp;
  if (mode == WriteMode::kNormal) {
    cp = compress_for_store(data, page_id, hints);
  } else {
    cp.algorithm = codec::Algo::kNone;
    cp.payload.assign(data.begin(), data.end());
  }
  std::uint64_t base_lsn = durable_lsn_;
  emit_page_write(page_id, cp, base_lsn);
  drop_cached_upto(page_id, base_lsn);
  metrics_.page_writes++;
  metrics_.bytes_in += kPageSize;
}

void ChunkStore::write_sub_page(std::uint64_t page_id, std::uint32_t offset, byte_span data) {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  if (offset + data.size() > kPageSize) throw InvalidArgument("sub-page write out of bounds");
  Materialized m = materialize(page_id, durable_lsn_);
  metrics_.device_reads += m.base_reads + m.log_reads;
  std::copy(data.begin(), data.end(), m.page.begin() + offset);
  // Non-aligned writes always land uncompressed.
  write_page(page_id, m.page, WriteMode::kNone);
}

std::uint64_t ChunkStore::write_redo(const std::vector<RedoRecord>& records) {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  if (records.empty()) throw InvalidArgument("empty redo batch");
  std::uint64_t prev = durable_lsn_;
  for (const RedoRecord& rec : records) {
    if (rec.lsn <= prev) throw InvalidArgument("redo lsn must increase");
    if (!rec.is_txn_mark() && rec.offset + rec.data.size() > kPageSize)
      throw InvalidArgument("redo patch beyond page");
    prev = rec.lsn;
  }

  bytes blob = encode_redo_records(records);
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(OpKind::kRedoAppend));
  w.u64(records.back().lsn);
  w.u32(static_cast<std::uint32_t>(blob.size()));
  w.raw(blob);
  replicate_checked(w.data());

  durable_lsn_ = records.back().lsn;
  for (const RedoRecord& rec : records) {
    if (rec.is_txn_mark()) continue;
    insert_cached(rec.page_id, {rec.lsn, rec.offset, rec.data});
  }
  metrics_.redo_appends++;
  metrics_.bytes_in += blob.size();
  enforce_cache_budget();
  return durable_lsn_;
}

void ChunkStore::insert_cached(std::uint64_t page_id, CachedRecord rec) {
  PageCache& pc = cache_[page_id];
  pc.byte_size += rec.data.size() + kCacheRecordOverhead;
  cache_bytes_ += rec.data.size() + kCacheRecordOverhead;
  pc.last_append_seq = ++cache_seq_;
  // keep lsn order (slot leftovers may re-enter behind newer records)
  auto it = std::upper_bound(pc.records.begin(), pc.records.end(), rec.lsn,
                             [](std::uint64_t l, const CachedRecord& r) { return l < r.lsn; });
  pc.records.insert(it, std::move(rec));
}

void ChunkStore::drop_cached_upto(std::uint64_t page_id, std::uint64_t lsn) {
  auto it = cache_.find(page_id);
  if (it == cache_.end()) return;
  auto& recs = it->second.records;
  std::size_t freed = 0;
  std::erase_if(recs, [&](const CachedRecord& r) {
    if (r.lsn <= lsn) {
      freed += r.data.size() + kCacheRecordOverhead;
      return true;
    }
    return false;
  });
  it->second.byte_size -= freed;
  cache_bytes_ -= freed;
  if (recs.empty()) cache_.erase(it);
}

void ChunkStore::enforce_cache_budget() {
  if (in_recovery_) return;
  while (cache_bytes_ > cfg_.log_cache_budget) {
    // Evict the page whose latest append is oldest, provided it has a base
    // entry to anchor a slot.
    std::uint64_t victim = 0;
    std::uint64_t best_seq = ~0ull;
    bool found = false;
    for (const auto& [pid, pc] : cache_) {
      if (pc.last_append_seq < best_seq && reps_[0]->idx.index_find(pid)) {
        best_seq = pc.last_append_seq;
        victim = pid;
        found = true;
      }
    }
    if (!found) break;
    evict_page(victim);
  }
}

void ChunkStore::evict_logs(const std::vector<std::uint64_t>& page_ids) {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  for (std::uint64_t pid : page_ids) evict_page(pid);
}

std::vector<ChunkStore::CachedRecord> ChunkStore::read_slot_records(
    const space::IndexEntry& entry, std::uint64_t* log_reads) {
  std::vector<CachedRecord> out;
  if (entry.slot_records > 0 && entry.slot_lba != space::kNoSlot) {
    bytes block = reps_[0]->dev.read_block(entry.slot_lba);
    if (log_reads) (*log_reads)++;
    auto records = decode_redo_records(byte_span(block.data(), entry.slot_bytes));
    for (auto& rec : records) out.push_back({rec.lsn, rec.offset, std::move(rec.data)});
  }
  for (std::uint32_t lba : entry.scattered_lbas) {
    bytes block = reps_[0]->dev.read_block(lba);
    if (log_reads) (*log_reads)++;
    ByteReader r(block);
    RedoRecord rec;
    rec.lsn = r.u64();
    rec.page_id = r.u64();
    rec.offset = r.u16();
    std::uint16_t len = r.u16();
    byte_span payload = r.raw(len);
    std::size_t body = r.position();
    if (crc32_of(byte_span(block.data(), body)) != r.u32())
      throw CorruptPayload("scattered log record corrupt");
    out.push_back({rec.lsn, rec.offset, bytes(payload.begin(), payload.end())});
  }
  return out;
}

void ChunkStore::evict_page(std::uint64_t page_id) {
  auto it = cache_.find(page_id);
  if (it == cache_.end() || it->second.records.empty()) return;
  const space::IndexEntry* entry = reps_[0]->idx.index_find(page_id);
  if (!entry) return;  // nothing to anchor the slot to; records stay cached

  if (!cfg_.per_page_log) {
    // Comparison mode: every record goes to its own 4 KB location.
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(OpKind::kEvictScattered));
    w.u64(page_id);
    w.u16(static_cast<std::uint16_t>(it->second.records.size()));
    for (const CachedRecord& rec : it->second.records) {
      std::vector<RedoRecord> one;
      one.push_back({rec.lsn, page_id, rec.offset, rec.data});
      bytes blob = encode_redo_records(one);
      w.u16(static_cast<std::uint16_t>(blob.size()));
      w.raw(blob);
    }
    replicate_checked(w.data());
    metrics_.evictions++;
    drop_cached_upto(page_id, it->second.records.back().lsn);
    return;
  }

  // Merge existing slot contents with the cached records.
  std::uint64_t merge_reads = 0;
  std::vector<CachedRecord> merged = read_slot_records(*entry, &merge_reads);
  metrics_.device_reads += merge_reads;
  for (const CachedRecord& rec : it->second.records) merged.push_back(rec);
  std::sort(merged.begin(), merged.end(),
            [](const CachedRecord& a, const CachedRecord& b) { return a.lsn < b.lsn; });

  std::vector<RedoRecord> wire;
  wire.reserve(merged.size());
  for (const CachedRecord& rec : merged)
    wire.push_back({rec.lsn, page_id, rec.offset, rec.data});
  bytes blob = encode_redo_records(wire);

  if (blob.size() > kBlockSize) {
    // Slot overflow: consolidate instead, clearing the slot.
    consolidate_to(page_id, reader_floor());
    metrics_.evictions++;
    return;
  }

  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(OpKind::kEvictSlot));
  w.u64(page_id);
  w.u16(static_cast<std::uint16_t>(merged.size()));
  w.u16(static_cast<std::uint16_t>(blob.size()));
  w.raw(blob);
  replicate_checked(w.data());
  metrics_.evictions++;
  drop_cached_upto(page_id, merged.back().lsn);
}

ChunkStore::Materialized ChunkStore::materialize(std::uint64_t page_id, std::uint64_t at_lsn) {
  Replica& rep = *reps_[0];
  const space::IndexEntry* entry = rep.idx.index_find(page_id);

  Materialized m;
  std::uint64_t base_lsn = entry ? entry->base_lsn : 0;

  // Collect candidate records: per-page slot (one read), scattered blocks
  // (one read each), then the in-memory cache. Dedup by lsn.
  std::map<std::uint64_t, const CachedRecord*> candidates;
  std::vector<CachedRecord> slot_records;
  if (entry) slot_records = read_slot_records(*entry, &m.log_reads);
  for (CachedRecord& rec : slot_records) {
    if (rec.lsn > base_lsn && rec.lsn <= at_lsn)
      candidates[rec.lsn] = &rec;
    else if (rec.lsn > at_lsn)
      m.slot_leftover.push_back(rec);
  }
  auto cache_it = cache_.find(page_id);
  if (cache_it != cache_.end())
    for (const CachedRecord& rec : cache_it->second.records)
      if (rec.lsn > base_lsn && rec.lsn <= at_lsn) candidates[rec.lsn] = &rec;

  if (!entry && candidates.empty()) throw NotFound("page does not exist at this lsn");

  if (!entry) {
    m.page = zero_page();
  } else if (entry->mode == space::PageMode::kHeavy) {
    const bytes* unit = nullptr;
    if (heavy_unit_cache_ && heavy_unit_cache_->first == entry->blocks.start) {
      unit = &heavy_unit_cache_->second;
    } else {
      bytes payload;
      payload.reserve(entry->blocks.count * kBlockSize);
      for (std::uint32_t i = 0; i < entry->blocks.count; i++) {
        bytes block = rep.dev.read_block(entry->blocks.start + i);
        payload.insert(payload.end(), block.begin(), block.end());
        m.base_reads++;
      }
      payload.resize(entry->payload_len);
      bytes unit_bytes =
          entry->algorithm == codec::Algo::kNone
              ? std::move(payload)
              : codec::zstd_decompress(payload,
                                       static_cast<std::size_t>(entry->heavy_count) * kPageSize);
      heavy_unit_cache_ = {entry->blocks.start, std::move(unit_bytes)};
      unit = &heavy_unit_cache_->second;
    }
    auto begin = unit->begin() + static_cast<std::ptrdiff_t>(entry->heavy_index) *
                                     static_cast<std::ptrdiff_t>(kPageSize);
    m.page.assign(begin, begin + kPageSize);
    m.has_base = true;
  } else {
    bytes payload;
    payload.reserve(entry->blocks.count * kBlockSize);
    for (std::uint32_t i = 0; i < entry->blocks.count; i++) {
      bytes block = rep.dev.read_block(entry->blocks.start + i);
      payload.insert(payload.end(), block.begin(), block.end());
      m.base_reads++;
    }
    payload.resize(entry->payload_len);
    codec::CompressedPage cp{entry->algorithm, std::move(payload)};
    m.page = codec::decompress_page(cp);
    m.has_base = true;
  }

  for (const auto& [lsn, rec] : candidates) {
    std::copy(rec->data.begin(), rec->data.end(),
              m.page.begin() + static_cast<std::ptrdiff_t>(rec->offset));
    m.applied_records++;
    m.applied_bytes += rec->data.size();
  }
  return m;
}

bytes ChunkStore::read_page(std::uint64_t page_id, std::uint64_t at_lsn) {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  if (at_lsn > durable_lsn_) throw FutureLsn("lsn beyond durable");
  Materialized m = materialize(page_id, at_lsn);
  metrics_.page_reads++;
  metrics_.bytes_out += kPageSize;
  metrics_.device_reads += m.base_reads + m.log_reads;
  if (m.applied_records > 0 || m.log_reads > 0) {
    std::size_t bucket = std::min<std::size_t>(m.log_reads, metrics_.log_reads_hist.size() - 1);
    metrics_.log_reads_hist[bucket]++;
    metrics_.last_consolidation_log_reads = m.log_reads;
  }
  return std::move(m.page);
}

void ChunkStore::consolidate_to(std::uint64_t page_id, std::uint64_t target_lsn) {
  target_lsn = std::min(target_lsn, durable_lsn_);
  const space::IndexEntry* entry = reps_[0]->idx.index_find(page_id);
  auto cache_it = cache_.find(page_id);
  bool has_records = (entry && (entry->slot_records > 0 || !entry->scattered_lbas.empty())) ||
                     (cache_it != cache_.end() && !cache_it->second.records.empty());
  if (!entry && !has_records) return;

  Materialized m = materialize(page_id, target_lsn);
  metrics_.device_reads += m.base_reads + m.log_reads;
  if (m.applied_records > 0 || m.log_reads > 0) {
    std::size_t bucket = std::min<std::size_t>(m.log_reads, metrics_.log_reads_hist.size() - 1);
    metrics_.log_reads_hist[bucket]++;
    metrics_.last_consolidation_log_reads = m.log_reads;
  }
  if (m.applied_records == 0 && entry) return;  // already materialized

  double update_fraction =
      static_cast<double>(m.applied_bytes) / static_cast<double>(kPageSize);
  codec::CompressedPage cp =
      compress_for_store(m.page, page_id, {0.0, std::min(update_fraction, 1.0)});
  emit_page_write(page_id, cp, target_lsn);

  // Slot records above the target survive the rewrite in memory.
  drop_cached_upto(page_id, target_lsn);
  for (CachedRecord& rec : m.slot_leftover) insert_cached(page_id, std::move(rec));
  metrics_.consolidations++;
}

void ChunkStore::consolidate(std::uint64_t page_id) {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  consolidate_to(page_id, reader_floor());
}

std::uint64_t ChunkStore::advance_apply_lsn() {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  std::uint64_t target = reader_floor();
  if (target <= apply_lsn_) return apply_lsn_;

  std::vector<std::uint64_t> pids;
  for (const auto& [pid, pc] : cache_)
    if (!pc.records.empty() && pc.records.front().lsn <= target) pids.push_back(pid);
  for (const auto& [pid, entry] : reps_[0]->idx.entries())
    if (entry.slot_records > 0 || !entry.scattered_lbas.empty()) pids.push_back(pid);
  std::sort(pids.begin(), pids.end());
  pids.erase(std::unique(pids.begin(), pids.end()), pids.end());
  for (std::uint64_t pid : pids) consolidate_to(pid, target);

  apply_lsn_ = target;
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(OpKind::kAdvance));
  w.u64(target);
  w.u64(durable_lsn_);
  replicate_checked(w.data());
  return apply_lsn_;
}

void ChunkStore::archive_range(const std::vector<std::uint64_t>& page_ids) {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  if (page_ids.empty()) throw InvalidArgument("empty archive range");
  for (std::uint64_t pid : page_ids) {
    bool known = reps_[0]->idx.index_find(pid) != nullptr || cache_.contains(pid);
    if (!known) throw NotFound("archive target does not exist");
  }

  std::size_t per_unit = cfg_.heavy.pages_per_unit();
  for (std::size_t begin = 0; begin < page_ids.size(); begin += per_unit) {
    std::size_t end = std::min(page_ids.size(), begin + per_unit);
    std::vector<bytes> pages;
    pages.reserve(end - begin);
    for (std::size_t i = begin; i < end; i++) {
      Materialized m = materialize(page_ids[i], durable_lsn_);
      metrics_.device_reads += m.base_reads + m.log_reads;
      pages.push_back(std::move(m.page));
    }
    codec::HeavySegment seg = codec::HeavySegment::build(pages, cfg_.heavy);

    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(OpKind::kArchiveUnit));
    w.u16(static_cast<std::uint16_t>(end - begin));
    for (std::size_t i = begin; i < end; i++) w.u64(page_ids[i]);
    w.u8(static_cast<std::uint8_t>(seg.algorithm()));
    w.u64(durable_lsn_);
    w.u32(static_cast<std::uint32_t>(seg.payload().size()));
    w.raw(seg.payload());
    replicate_checked(w.data());

    for (std::size_t i = begin; i < end; i++)
      drop_cached_upto(page_ids[i], durable_lsn_);
  }
  metrics_.archive_ops++;
}

bytes ChunkStore::engine_meta() const {
  ByteWriter w;
  w.u64(durable_lsn_);
  w.u64(apply_lsn_);
  return w.take();
}

void ChunkStore::checkpoint() {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  bytes meta = engine_meta();
  for (auto& rep : reps_) rep->checkpoint_blob = rep->idx.checkpoint(meta);
}

void ChunkStore::crash(std::uint64_t torn_wal_bytes, std::uint64_t torn_redo_bytes) {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  for (auto& rep : reps_) {
    rep->wal_log.crash(torn_wal_bytes);
    rep->redo.crash(torn_redo_bytes);
    rep->redo_marks.clear();
    rep->heavy_refs.clear();
  }
  cache_.clear();
  cache_bytes_ = 0;
  last_algorithm_.clear();
  heavy_unit_cache_.reset();
  metrics_.crashes++;
}

void ChunkStore::recover() {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  in_recovery_ = true;
  std::uint64_t meta_durable = 0, meta_apply = 0;
  for (auto& rep : reps_) {
    rep->idx.recover(rep->checkpoint_blob, rep->wal_log.all_bytes());
    rep->heavy_refs.clear();
    for (const auto& [pid, entry] : rep->idx.entries())
      if (entry.mode == space::PageMode::kHeavy) rep->heavy_refs[entry.blocks.start]++;
  }
  if (!reps_[0]->checkpoint_blob.empty()) {
    byte_span meta = space::SpaceIndex::checkpoint_engine_meta(reps_[0]->checkpoint_blob);
    if (meta.size() >= 16) {
      ByteReader r(meta);
      meta_durable = r.u64();
      meta_apply = r.u64();
    }
  }
  byte_span marker = reps_[0]->idx.last_marker();
  if (marker.size() >= 16) {
    ByteReader r(marker);
    meta_durable = std::max(meta_durable, r.u64());
    meta_apply = std::max(meta_apply, r.u64());
  }

  cache_.clear();
  cache_bytes_ = 0;
  heavy_unit_cache_.reset();
  durable_lsn_ = meta_durable;
  apply_lsn_ = meta_apply;

  // Rebuild batch marks on every replica, and the log cache on the leader.
  for (std::size_t ri = 0; ri < reps_.size(); ri++) {
    Replica& rep = *reps_[ri];
    rep.redo_marks.clear();
    byte_span stream = rep.redo.all_bytes();
    ByteReader scan(stream);
    while (scan.remaining() >= 24) {
      std::size_t start = scan.position();
      RedoRecord rec;
      rec.lsn = scan.u64();
      rec.page_id = scan.u64();
      rec.offset = scan.u16();
      std::uint16_t len = scan.u16();
      if (scan.remaining() < static_cast<std::size_t>(len) + 4) break;  // torn tail
      byte_span payload = scan.raw(len);
      std::size_t end = scan.position();
      std::uint32_t crc = scan.u32();
      if (crc32_of(stream.subspan(start, end - start)) != crc) {
        if (scan.exhausted()) break;  // torn final record
        throw CorruptWal("redo stream corrupt");
      }
      rep.redo_marks.push_back({rec.lsn, rep.redo.base_offset() + scan.position()});
      if (ri != 0) continue;
      durable_lsn_ = std::max(durable_lsn_, rec.lsn);
      if (rec.page_id == RedoRecord::kTxnMarkPageId) continue;
      const space::IndexEntry* entry = rep.idx.index_find(rec.page_id);
      if (entry && rec.lsn <= entry->base_lsn) continue;
      insert_cached(rec.page_id, {rec.lsn, rec.offset, bytes(payload.begin(), payload.end())});
    }
  }

  reader_lsns_.assign(cfg_.reader_count, apply_lsn_);
  group_ = std::make_unique<ReplicationGroup>(
      cfg_.replica_count, [this](std::size_t r, byte_span op) { apply_op(r, op); });
  in_recovery_ = false;
}

std::uint64_t ChunkStore::cached_record_count(std::uint64_t page_id) const {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  auto it = cache_.find(page_id);
  return it == cache_.end() ? 0 : it->second.records.size();
}

std::vector<std::uint64_t> ChunkStore::cached_pages() const {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  std::vector<std::uint64_t> out;
  out.reserve(cache_.size());
  for (const auto& [pid, pc] : cache_)
    if (!pc.records.empty()) out.push_back(pid);
  return out;
}

void ChunkStore::save(const std::filesystem::path& dir) const {
  std::lock_guard<std::recursive_mutex> lock(api_mu_);
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t i = 0; i < reps_.size(); i++) {
    const Replica& rep = *reps_[i];
    std::string prefix = "r" + std::to_string(i);
    rep.dev.save_image(dir / (prefix + ".dev"));
    rep.wal_log.save(dir / (prefix + ".wal"));
    rep.redo.save(dir / (prefix + ".redo"));
    std::ofstream ckpt(dir / (prefix + ".ckpt"), std::ios::binary | std::ios::trunc);
    ckpt.write(reinterpret_cast<const char*>(rep.checkpoint_blob.data()),
               static_cast<std::streamsize>(rep.checkpoint_blob.size()));
  }
  ByteWriter w;
  w.u64(durable_lsn_);
  w.u64(apply_lsn_);
  std::ofstream meta(dir / "engine.meta", std::ios::binary | std::ios::trunc);
  meta.write(reinterpret_cast<const char*>(w.data().data()),
             static_cast<std::streamsize>(w.size()));
}

std::unique_ptr<ChunkStore> ChunkStore::load(const std::filesystem::path& dir,
                                             EngineConfig cfg) {
  namespace fs = std::filesystem;
  auto store = std::make_unique<ChunkStore>(cfg);
  for (std::size_t i = 0; i < store->reps_.size(); i++) {
    Replica& rep = *store->reps_[i];
    std::string prefix = "r" + std::to_string(i);
    if (!fs::exists(dir / (prefix + ".dev"))) throw ConfigError("engine directory incomplete");
    rep.dev.restore_image(dir / (prefix + ".dev"));
    rep.wal_log = space::FastLog::load(dir / (prefix + ".wal"));
    rep.redo = space::FastLog::load(dir / (prefix + ".redo"));
    std::ifstream ckpt(dir / (prefix + ".ckpt"), std::ios::binary);
    rep.checkpoint_blob.assign(std::istreambuf_iterator<char>(ckpt),
                               std::istreambuf_iterator<char>());
  }
  store->recover();
  return store;
}

}  // namespace pagestore::store
