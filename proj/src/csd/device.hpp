#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "common/serde.hpp"

namespace pagestore::csd {

inline constexpr std::uint64_t kLbaSize = 4096;

enum class EntryFormat : std::uint8_t { kV1 = 1, kV2 = 2 };

struct DeviceConfig {
  // Desk-scale default keeps the 2.5 logical:physical provisioning of the
  // production sizing (9.6 TB over 3.84 TB).
  std::uint64_t logical_capacity = 160ull << 20;
  std::uint64_t physical_capacity = 64ull << 20;
  EntryFormat entry_format = EntryFormat::kV2;
  int deflate_level = 5;
  std::uint64_t gc_segment_size = 256 * 1024;
  double gc_trigger_garbage_fraction = 0.5;

  std::uint32_t offset_granularity() const {
    return entry_format == EntryFormat::kV1 ? 1 : 16;
  }
  std::uint64_t logical_blocks() const { return logical_capacity / kLbaSize; }
  std::uint64_t total_slabs() const { return physical_capacity / gc_segment_size; }
  void validate() const;
};

// Mapping value from one 4 KB LBA to a byte-granular physical location.
// V1 packs into 8 bytes (12-bit offset/length within a 4 KB-aligned base),
// V2 into 7 bytes (offset and length coarsened to 16-byte units).
struct L2PEntry {
  std::uint32_t segment_id = 0;
  std::uint32_t offset = 0;  // bytes from segment start
  std::uint32_t length = 0;  // stored bytes (V2: already rounded up to 16)
  bool raw_flag = false;

  bool operator==(const L2PEntry&) const = default;
};

std::size_t entry_encoded_size(EntryFormat f);  // 8 for V1, 7 for V2
bytes encode_entry(const L2PEntry& e, EntryFormat f);
L2PEntry decode_entry(byte_span in, EntryFormat f);

struct DeviceStats {
  std::uint64_t logical_used = 0;
  std::uint64_t physical_used = 0;
  std::uint64_t physical_live = 0;
  std::uint64_t gc_bytes_moved = 0;
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  std::uint64_t trims = 0;
};

// Simulated computational storage device: 4 KB block interface, per-block
// deflate, thin-provisioned logical space over append-only physical segments
// with copy-forward garbage collection. Internally serialized; one handle
// may be shared across threads.
class Device {
 public:
  explicit Device(DeviceConfig cfg);

  void write_block(std::uint64_t lba, byte_span data);
  bytes read_block(std::uint64_t lba) const;
  void trim(std::uint64_t lba, std::uint64_t block_count = 1);
  std::uint64_t run_gc();

  DeviceStats stats() const;
  const DeviceConfig& config() const { return cfg_; }
  bool is_mapped(std::uint64_t lba) const;
  std::uint64_t live_segment_count() const;

  // Recomputes physical_live from the mapping table (accounting invariant).
  std::uint64_t recompute_physical_live() const;

  void save_image(const std::filesystem::path& path) const;
  // Replaces this device's entire state with the image contents.
  void restore_image(const std::filesystem::path& path);

 private:
  struct SegmentRecord {
    std::uint64_t lba;
    std::uint32_t offset;
    std::uint32_t stored_len;
  };
  struct Segment {
    bytes data;
    std::uint32_t write_pos = 0;
    std::uint32_t garbage = 0;
    bool sealed = false;
    std::vector<SegmentRecord> records;
  };

  void open_segment_locked(bool for_gc);
  void seal_active_locked();
  L2PEntry append_locked(std::uint64_t lba, byte_span payload, bool raw, bool for_gc);
  void retire_locked(std::uint64_t lba, const L2PEntry& old);
  std::uint64_t gc_pass_locked(double min_garbage_fraction);
  bytes read_entry_locked(const L2PEntry& e) const;

  DeviceConfig cfg_;
  mutable std::mutex mu_;
  std::unordered_map<std::uint64_t, L2PEntry> l2p_;
  std::map<std::uint32_t, Segment> segments_;  // keyed by slab index
  std::vector<std::uint32_t> free_slabs_;      // kept sorted descending; pop lowest from back
  std::int64_t active_ = -1;
  mutable DeviceStats stats_;
};

}  // namespace pagestore::csd
