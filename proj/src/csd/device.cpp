#include "csd/device.hpp"

#include <algorithm>
#include <fstream>

#include "codec/compressors.hpp"
#include "common/crc.hpp"
#include "common/errors.hpp"

namespace pagestore::csd {

namespace {

constexpr std::uint32_t kMaxBase4k = 1u << 15;    // 4 KB-aligned base within segment
constexpr std::uint32_t kMaxSegmentId = 1u << 24;

std::uint32_t round_up(std::uint32_t n, std::uint32_t granularity) {
  return (n + granularity - 1) / granularity * granularity;
}

}  // namespace

void DeviceConfig::validate() const {
  if (logical_capacity == 0 || logical_capacity % kLbaSize != 0)
    throw ConfigError("logical_capacity must be a positive multiple of 4096");
  if (physical_capacity == 0) throw ConfigError("physical_capacity must be positive");
  if (deflate_level < 0 || deflate_level > 9) throw ConfigError("deflate_level must be 0..9");
  if (gc_segment_size % kLbaSize != 0 || gc_segment_size == 0 ||
      gc_segment_size > kMaxBase4k * kLbaSize)
    throw ConfigError("gc_segment_size must be a 4 KB multiple up to 128 MB");
  if (gc_trigger_garbage_fraction <= 0 || gc_trigger_garbage_fraction > 1)
    throw ConfigError("gc_trigger_garbage_fraction must be in (0,1]");
  if (total_slabs() == 0) throw ConfigError("physical_capacity below one gc segment");
  if (total_slabs() >= kMaxSegmentId) throw ConfigError("physical_capacity exceeds segment id space");
}

std::size_t entry_encoded_size(EntryFormat f) {
  return f == EntryFormat::kV1 ? 8 : 7;
}

// V1 (64 bits): offset_low:12 | length:12 | raw:1 | base4k:15 | segment:24.
// A raw entry stores exactly one LBA of data; its length rides on the flag so
// 4096 never has to fit the 12-bit field.
bytes encode_entry(const L2PEntry& e, EntryFormat f) {
  std::uint32_t base4k = e.offset / kLbaSize;
  std::uint32_t off_low = e.offset % kLbaSize;
  if (base4k >= kMaxBase4k || e.segment_id >= kMaxSegmentId)
    throw Unrepresentable("offset or segment beyond entry field width");
  if (e.raw_flag && e.length != kLbaSize)
    throw Unrepresentable("raw entry must store exactly 4096 bytes");

  if (f == EntryFormat::kV1) {
    if (!e.raw_flag && e.length >= kLbaSize)
      throw Unrepresentable("V1 length field is 12 bits");
    std::uint64_t word = off_low;
    word |= static_cast<std::uint64_t>(e.raw_flag ? 0 : e.length) << 12;
    word |= static_cast<std::uint64_t>(e.raw_flag ? 1 : 0) << 24;
    word |= static_cast<std::uint64_t>(base4k) << 25;
    word |= static_cast<std::uint64_t>(e.segment_id) << 40;
    ByteWriter w;
    w.u64(word);
    return w.take();
  }

  // V2 (56 bits): offset16:8 | length16:8 | raw:1 | base4k:15 | segment:24.
  if (e.offset % 16 != 0) throw Unrepresentable("V2 offset must be 16-byte aligned");
  if (e.length % 16 != 0) throw Unrepresentable("V2 length stored in 16-byte units");
  if (!e.raw_flag && e.length >= kLbaSize) throw Unrepresentable("V2 length field is 8 bits");
  std::uint64_t word = off_low / 16;
  word |= static_cast<std::uint64_t>(e.raw_flag ? 0 : e.length / 16) << 8;
  word |= static_cast<std::uint64_t>(e.raw_flag ? 1 : 0) << 16;
  word |= static_cast<std::uint64_t>(base4k) << 17;
  word |= static_cast<std::uint64_t>(e.segment_id) << 32;
  bytes out(7);
  for (int i = 0; i < 7; i++) out[i] = static_cast<std::uint8_t>(word >> (8 * i));
  return out;
}

L2PEntry decode_entry(byte_span in, EntryFormat f) {
  if (in.size() != entry_encoded_size(f)) throw Unrepresentable("bad entry size");
  L2PEntry e;
  if (f == EntryFormat::kV1) {
    ByteReader r(in);
    std::uint64_t word = r.u64();
    std::uint32_t off_low = word & 0xFFF;
    std::uint32_t length = (word >> 12) & 0xFFF;
    e.raw_flag = (word >> 24) & 1;
    std::uint32_t base4k = (word >> 25) & 0x7FFF;
    e.segment_id = static_cast<std::uint32_t>(word >> 40);
    e.offset = base4k * kLbaSize + off_low;
    e.length = e.raw_flag ? kLbaSize : length;
    return e;
  }
  std::uint64_t word = 0;
  for (int i = 0; i < 7; i++) word |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  std::uint32_t off16 = word & 0xFF;
  std::uint32_t len16 = (word >> 8) & 0xFF;
  e.raw_flag = (word >> 16) & 1;
  std::uint32_t base4k = (word >> 17) & 0x7FFF;
  e.segment_id = static_cast<std::uint32_t>(word >> 32);
  e.offset = base4k * kLbaSize + off16 * 16;
  e.length = e.raw_flag ? kLbaSize : len16 * 16;
  return e;
}

Device::Device(DeviceConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  free_slabs_.reserve(cfg_.total_slabs());
  for (std::uint64_t i = cfg_.total_slabs(); i > 0; i--)
    free_slabs_.push_back(static_cast<std::uint32_t>(i - 1));
}

void Device::open_segment_locked(bool for_gc) {
  // One slab stays in reserve so garbage collection can always relocate.
  std::size_t reserve = (!for_gc && cfg_.total_slabs() >= 2) ? 1 : 0;
  if (free_slabs_.size() <= reserve) {
    if (!for_gc) {
      gc_pass_locked(1e-9);  // forced pass: any garbage qualifies
      if (free_slabs_.size() <= reserve)
        throw OutOfPhysicalSpace("physical segments exhausted");
    } else {
      throw OutOfPhysicalSpace("physical segments exhausted during gc");
    }
  }
  std::uint32_t slab = free_slabs_.back();
  free_slabs_.pop_back();
  Segment seg;
  seg.data.resize(cfg_.gc_segment_size);
  segments_.emplace(slab, std::move(seg));
  active_ = slab;
}

void Device::seal_active_locked() {
  if (active_ < 0) return;
  Segment& seg = segments_.at(static_cast<std::uint32_t>(active_));
  // The unusable tail is consumed space; count it as garbage immediately.
  seg.garbage += static_cast<std::uint32_t>(cfg_.gc_segment_size) - seg.write_pos;
  seg.sealed = true;
  active_ = -1;
}

L2PEntry Device::append_locked(std::uint64_t lba, byte_span payload, bool raw, bool for_gc) {
  std::uint32_t stored_len = round_up(static_cast<std::uint32_t>(payload.size()),
                                      cfg_.offset_granularity());
  if (active_ < 0 ||
      segments_.at(static_cast<std::uint32_t>(active_)).write_pos + stored_len >
          cfg_.gc_segment_size) {
    seal_active_locked();
    open_segment_locked(for_gc);
  }
  std::uint32_t seg_id = static_cast<std::uint32_t>(active_);
  Segment& seg = segments_.at(seg_id);
  L2PEntry e;
  e.segment_id = seg_id;
  e.offset = seg.write_pos;
  e.length = stored_len;
  e.raw_flag = raw;
  std::copy(payload.begin(), payload.end(), seg.data.begin() + seg.write_pos);
  seg.records.push_back({lba, e.offset, stored_len});
  seg.write_pos += stored_len;
  stats_.physical_live += stored_len;
  return e;
}

void Device::retire_locked(std::uint64_t lba, const L2PEntry& old) {
  (void)lba;
  auto it = segments_.find(old.segment_id);
  if (it != segments_.end()) it->second.garbage += old.length;
  stats_.physical_live -= old.length;
}

void Device::write_block(std::uint64_t lba, byte_span data) {
  if (data.size() != kLbaSize) throw InvalidArgument("write_block takes exactly 4096 bytes");
  std::lock_guard<std::mutex> lock(mu_);
  if (lba >= cfg_.logical_blocks()) throw InvalidArgument("lba beyond logical capacity");

  bytes compressed = codec::deflate_compress(data, cfg_.deflate_level);
  // Raw when compression saves nothing after granularity rounding; a rounded
  // length of 4096 would not fit V2's length field anyway.
  bool raw = round_up(static_cast<std::uint32_t>(compressed.size()),
                      cfg_.offset_granularity()) >= kLbaSize;
  byte_span payload = raw ? data : byte_span(compressed);

  auto prior = l2p_.find(lba);
  L2PEntry e = append_locked(lba, payload, raw, /*for_gc=*/false);
  if (prior != l2p_.end()) {
    retire_locked(lba, prior->second);
    prior->second = e;
  } else {
    stats_.logical_used += kLbaSize;
    l2p_.emplace(lba, e);
  }
  stats_.writes++;
}

bytes Device::read_entry_locked(const L2PEntry& e) const {
  const Segment& seg = segments_.at(e.segment_id);
  byte_span stored(seg.data.data() + e.offset, e.length);
  if (e.raw_flag) return bytes(stored.begin(), stored.end());
  return codec::inflate_exact(stored, kLbaSize);
}

bytes Device::read_block(std::uint64_t lba) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = l2p_.find(lba);
  if (it == l2p_.end()) throw Unmapped("lba not mapped");
  stats_.reads++;
  return read_entry_locked(it->second);
}

void Device::trim(std::uint64_t lba, std::uint64_t block_count) {
  std::lock_guard<std::mutex> lock(mu_);
  for (std::uint64_t i = 0; i < block_count; i++) {
    auto it = l2p_.find(lba + i);
    if (it == l2p_.end()) continue;
    retire_locked(lba + i, it->second);
    l2p_.erase(it);
    stats_.logical_used -= kLbaSize;
    stats_.trims++;
  }
}

std::uint64_t Device::gc_pass_locked(double min_garbage_fraction) {
  // Snapshot the victim set up front: segments sealed during relocation are
  // not revisited, so a pass always terminates.
  std::vector<std::pair<double, std::uint32_t>> victims;
  for (const auto& [id, seg] : segments_) {
    if (!seg.sealed) continue;
    double fraction =
        static_cast<double>(seg.garbage) / static_cast<double>(cfg_.gc_segment_size);
    if (fraction > min_garbage_fraction) victims.push_back({fraction, id});
  }
  std::sort(victims.begin(), victims.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });

  std::uint64_t reclaimed = 0;
  for (const auto& [fraction, victim] : victims) {
    Segment& seg = segments_.at(victim);
    std::uint64_t moved = 0;
    for (const SegmentRecord& rec : seg.records) {
      auto it = l2p_.find(rec.lba);
      if (it == l2p_.end() || it->second.segment_id != victim ||
          it->second.offset != rec.offset)
        continue;  // superseded or trimmed
      byte_span payload(seg.data.data() + rec.offset, rec.stored_len);
      bool raw = it->second.raw_flag;
      stats_.physical_live -= rec.stored_len;  // re-added by append
      it->second = append_locked(rec.lba, payload, raw, /*for_gc=*/true);
      moved += rec.stored_len;
    }
    stats_.gc_bytes_moved += moved;
    segments_.erase(victim);
    free_slabs_.push_back(victim);
    std::sort(free_slabs_.rbegin(), free_slabs_.rend());
    reclaimed += cfg_.gc_segment_size - std::min<std::uint64_t>(moved, cfg_.gc_segment_size);
  }
  return reclaimed;
}

std::uint64_t Device::run_gc() {
  std::lock_guard<std::mutex> lock(mu_);
  return gc_pass_locked(cfg_.gc_trigger_garbage_fraction);
}

DeviceStats Device::stats() const {
  std::lock_guard<std::mutex> lock(mu_);
  DeviceStats s = stats_;
  s.physical_used = 0;
  for (const auto& [id, seg] : segments_)
    s.physical_used += seg.sealed ? cfg_.gc_segment_size : seg.write_pos;
  return s;
}

bool Device::is_mapped(std::uint64_t lba) const {
  std::lock_guard<std::mutex> lock(mu_);
  return l2p_.contains(lba);
}

std::uint64_t Device::live_segment_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return segments_.size();
}

std::uint64_t Device::recompute_physical_live() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::uint64_t total = 0;
  for (const auto& [lba, e] : l2p_) total += e.length;
  return total;
}

// Image layout: header [magic u32 "CSDM", version u16, config, header crc32],
// L2P region [entry_format u8, count u64, (lba u64 + encoded entry)...],
// segment region [count u32, per segment: id, write_pos, garbage, sealed,
// record list, payload, crc32(payload)], trailing stats.
namespace {
constexpr std::uint32_t kImageMagic = 0x4D445343;  // "CSDM"
constexpr std::uint16_t kImageVersion = 1;
}  // namespace

void Device::save_image(const std::filesystem::path& path) const {
  std::lock_guard<std::mutex> lock(mu_);

  ByteWriter header;
  header.u32(kImageMagic);
  header.u16(kImageVersion);
  header.u64(cfg_.logical_capacity);
  header.u64(cfg_.physical_capacity);
  header.u8(static_cast<std::uint8_t>(cfg_.deflate_level));
  header.u64(cfg_.gc_segment_size);
  header.u64(static_cast<std::uint64_t>(cfg_.gc_trigger_garbage_fraction * 1e9));

  ByteWriter w;
  w.raw(header.data());
  w.u32(crc32_of(header.data()));

  // L2P region owns the entry format tag so images with identical contents
  // differ only here across formats.
  w.u8(static_cast<std::uint8_t>(cfg_.entry_format));
  w.u64(l2p_.size());
  std::vector<std::uint64_t> lbas;
  lbas.reserve(l2p_.size());
  for (const auto& [lba, e] : l2p_) lbas.push_back(lba);
  std::sort(lbas.begin(), lbas.end());
  for (std::uint64_t lba : lbas) {
    w.u64(lba);
    w.raw(encode_entry(l2p_.at(lba), cfg_.entry_format));
  }

  w.u32(static_cast<std::uint32_t>(segments_.size()));
  for (const auto& [id, seg] : segments_) {
    w.u32(id);
    w.u32(seg.write_pos);
    w.u32(seg.garbage);
    w.u8(seg.sealed ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(seg.records.size()));
    for (const auto& rec : seg.records) {
      w.u64(rec.lba);
      w.u32(rec.offset);
      w.u32(rec.stored_len);
    }
    byte_span payload(seg.data.data(), seg.write_pos);
    w.raw(payload);
    w.u32(crc32_of(payload));
  }
  w.u64(stats_.logical_used);
  w.u64(stats_.physical_live);
  w.u64(stats_.gc_bytes_moved);
  w.u64(stats_.reads);
  w.u64(stats_.writes);
  w.u64(stats_.trims);
  w.u8(active_ >= 0 ? 1 : 0);
  w.u32(active_ >= 0 ? static_cast<std::uint32_t>(active_) : 0);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write image: " + path.string());
  out.write(reinterpret_cast<const char*>(w.data().data()),
            static_cast<std::streamsize>(w.size()));
}

void Device::restore_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open image: " + path.string());
  bytes blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  ByteReader r(blob);
  if (r.u32() != kImageMagic) throw CorruptImage("bad image magic");
  if (r.u16() != kImageVersion) throw CorruptImage("unsupported image version");
  DeviceConfig cfg;
  cfg.logical_capacity = r.u64();
  cfg.physical_capacity = r.u64();
  cfg.deflate_level = r.u8();
  cfg.gc_segment_size = r.u64();
  cfg.gc_trigger_garbage_fraction = static_cast<double>(r.u64()) / 1e9;
  std::size_t header_end = r.position();
  std::uint32_t header_crc = r.u32();
  if (crc32_of(byte_span(blob.data(), header_end)) != header_crc)
    throw CorruptImage("image header crc mismatch");

  cfg.entry_format = static_cast<EntryFormat>(r.u8());
  if (cfg.entry_format != EntryFormat::kV1 && cfg.entry_format != EntryFormat::kV2)
    throw CorruptImage("bad entry format tag");
  cfg.validate();

  std::lock_guard<std::mutex> lock(mu_);
  cfg_ = cfg;
  l2p_.clear();
  segments_.clear();
  free_slabs_.clear();
  stats_ = DeviceStats{};
  for (std::uint64_t i = cfg_.total_slabs(); i > 0; i--)
    free_slabs_.push_back(static_cast<std::uint32_t>(i - 1));

  std::uint64_t entries = r.u64();
  for (std::uint64_t i = 0; i < entries; i++) {
    std::uint64_t lba = r.u64();
    l2p_.emplace(lba, decode_entry(r.raw(entry_encoded_size(cfg.entry_format)),
                                   cfg.entry_format));
  }

  std::uint32_t seg_count = r.u32();
  for (std::uint32_t i = 0; i < seg_count; i++) {
    std::uint32_t id = r.u32();
    Segment seg;
    seg.data.resize(cfg.gc_segment_size);
    seg.write_pos = r.u32();
    seg.garbage = r.u32();
    seg.sealed = r.u8() != 0;
    std::uint32_t nrec = r.u32();
    seg.records.reserve(nrec);
    for (std::uint32_t k = 0; k < nrec; k++) {
      SegmentRecord rec;
      rec.lba = r.u64();
      rec.offset = r.u32();
      rec.stored_len = r.u32();
      seg.records.push_back(rec);
    }
    byte_span payload = r.raw(seg.write_pos);
    std::uint32_t crc = r.u32();
    if (crc32_of(payload) != crc) throw CorruptImage("segment crc mismatch");
    std::copy(payload.begin(), payload.end(), seg.data.begin());
    segments_.emplace(id, std::move(seg));
    std::erase(free_slabs_, id);
  }
  stats_.logical_used = r.u64();
  stats_.physical_live = r.u64();
  stats_.gc_bytes_moved = r.u64();
  stats_.reads = r.u64();
  stats_.writes = r.u64();
  stats_.trims = r.u64();
  bool has_active = r.u8() != 0;
  std::uint32_t active_id = r.u32();
  active_ = has_active ? static_cast<std::int64_t>(active_id) : -1;
}

}  // namespace pagestore::csd
