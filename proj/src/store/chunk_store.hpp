#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "codec/page_codec.hpp"
#include "common/serde.hpp"
#include "csd/device.hpp"
#include "space/fast_log.hpp"
#include "space/space_index.hpp"
#include "store/replication.hpp"

namespace pagestore::store {

using codec::kBlockSize;
using codec::kPageSize;

enum class WriteMode : std::uint8_t { kNormal = 0, kNone = 1, kHeavy = 2 };

// Byte-range patch against one page. Transaction marks carry no page; they
// ride the sentinel page id on the wire.
struct RedoRecord {
  static constexpr std::uint64_t kTxnMarkPageId = ~0ull;

  std::uint64_t lsn = 0;
  std::uint64_t page_id = 0;
  std::uint16_t offset = 0;
  bytes data;

  bool is_txn_mark() const { return page_id == kTxnMarkPageId; }
};

bytes encode_redo_records(const std::vector<RedoRecord>& records);
std::vector<RedoRecord> decode_redo_records(byte_span stream);

struct LsnState {
  std::uint64_t durable_lsn = 0;
  std::uint64_t apply_lsn = 0;
  std::vector<std::uint64_t> reader_lsns;
};

struct Metrics {
  std::uint64_t page_writes = 0, page_reads = 0, redo_appends = 0;
  std::uint64_t evictions = 0, consolidations = 0, archive_ops = 0, crashes = 0;
  std::uint64_t device_reads = 0, device_writes = 0;
  std::uint64_t bytes_in = 0, bytes_out = 0;
  std::uint64_t redo_bytes = 0;
  std::uint64_t errors = 0;
  // log reads needed per page consolidation, capped at the last bucket
  std::array<std::uint64_t, 17> log_reads_hist{};
  std::uint64_t last_consolidation_log_reads = 0;
};

struct EngineConfig {
  csd::DeviceConfig device;
  codec::SelectorConfig selector;
  codec::HeavyConfig heavy;
  std::uint64_t fast_log_capacity = 64ull << 20;
  std::size_t replica_count = 3;
  std::size_t reader_count = 2;
  std::uint64_t log_cache_budget = 1 << 20;
  bool per_page_log = true;  // false: scattered-slot comparison mode
  bool software_compression = true;
  std::optional<codec::Algo> forced_algorithm;

  void validate() const;
};

struct WriteHints {
  double cpu_utilization = 0.0;
  double update_fraction = 1.0;
};

// Page-store engine for one chunk: compression modes, redo path with
// compression bypass, per-page log slots, consolidation at the reader
// LSN floor, archival recompression, all over a majority-commit replica
// group. Single writer; reads see committed state only.
class ChunkStore {
 public:
  explicit ChunkStore(EngineConfig cfg);

  void write_page(std::uint64_t page_id, byte_span data, WriteMode mode,
                  const WriteHints& hints = {});
  void write_sub_page(std::uint64_t page_id, std::uint32_t offset, byte_span data);
  std::uint64_t write_redo(const std::vector<RedoRecord>& records);
  bytes read_page(std::uint64_t page_id, std::uint64_t at_lsn);
  void evict_logs(const std::vector<std::uint64_t>& page_ids);
  void consolidate(std::uint64_t page_id);
  std::uint64_t advance_apply_lsn();
  void archive_range(const std::vector<std::uint64_t>& page_ids);

  void set_reader_lsn(std::size_t reader, std::uint64_t lsn);
  LsnState lsn_state() const;

  void checkpoint();
  // Power loss: volatile state gone, fast logs cut at their durable
  // watermarks. Tests may keep a prefix of unflushed bytes to model a record
  // torn mid-write.
  void crash(std::uint64_t torn_wal_bytes = 0, std::uint64_t torn_redo_bytes = 0);
  void recover();

  Metrics& metrics() { return metrics_; }
  const EngineConfig& config() const { return cfg_; }
  csd::Device& device(std::size_t replica = 0) { return reps_[replica]->dev; }
  space::SpaceIndex& index(std::size_t replica = 0) { return reps_[replica]->idx; }
  space::FastLog& redo_log(std::size_t replica = 0) { return reps_[replica]->redo; }
  space::FastLog& wal_log(std::size_t replica = 0) { return reps_[replica]->wal_log; }
  ReplicationGroup& replication() { return *group_; }
  void set_latency_probe(codec::LatencyProbe probe) { probe_ = std::move(probe); }
  std::uint64_t cached_record_count(std::uint64_t page_id) const;
  std::vector<std::uint64_t> cached_pages() const;
  std::uint64_t cache_bytes() const { return cache_bytes_; }

  void save(const std::filesystem::path& dir) const;
  static std::unique_ptr<ChunkStore> load(const std::filesystem::path& dir,
                                          EngineConfig cfg);

 private:
  struct Replica {
    csd::Device dev;
    space::FastLog wal_log;
    space::FastLog redo;
    space::SpaceIndex idx;
    bytes checkpoint_blob;
    std::unordered_map<std::uint64_t, std::uint32_t> heavy_refs;
    // redo batch boundaries: (last lsn in batch, absolute end offset)
    std::vector<std::pair<std::uint64_t, std::uint64_t>> redo_marks;

    Replica(const EngineConfig& cfg);
  };

  struct CachedRecord {
    std::uint64_t lsn;
    std::uint16_t offset;
    bytes data;
  };

  struct PageCache {
    std::vector<CachedRecord> records;  // lsn order
    std::uint64_t last_append_seq = 0;
    std::size_t byte_size = 0;
  };

  struct Materialized {
    bytes page;
    bool has_base = false;
    std::uint64_t base_reads = 0;
    std::uint64_t log_reads = 0;
    std::uint64_t applied_records = 0;
    std::uint64_t applied_bytes = 0;
    std::vector<CachedRecord> slot_leftover;  // slot records above at_lsn
  };

  // Replicated op stream
  enum class OpKind : std::uint8_t {
    kPageWrite = 1,
    kRedoAppend = 2,
    kEvictSlot = 3,
    kEvictScattered = 4,
    kAdvance = 5,
    kArchiveUnit = 6,
  };

  void replicate_checked(byte_span op);
  void apply_op(std::size_t replica, byte_span op);
  void apply_page_write(std::size_t replica, ByteReader& r);
  void apply_redo_append(std::size_t replica, ByteReader& r);
  void apply_evict_slot(std::size_t replica, ByteReader& r);
  void apply_evict_scattered(std::size_t replica, ByteReader& r);
  void apply_advance(std::size_t replica, ByteReader& r);
  void apply_archive_unit(std::size_t replica, ByteReader& r);

  void retire_entry_blocks(Replica& rep, const space::IndexEntry& old);
  bytes device_read_counted(std::uint64_t lba, bool is_leader_data_path);
  void emit_page_write(std::uint64_t page_id, const codec::CompressedPage& cp,
                       std::uint64_t base_lsn);
  codec::CompressedPage compress_for_store(byte_span page, std::uint64_t page_id,
                                           const WriteHints& hints);
  Materialized materialize(std::uint64_t page_id, std::uint64_t at_lsn);
  std::vector<CachedRecord> read_slot_records(const space::IndexEntry& entry,
                                              std::uint64_t* log_reads);
  void consolidate_to(std::uint64_t page_id, std::uint64_t target_lsn);
  void insert_cached(std::uint64_t page_id, CachedRecord rec);
  void drop_cached_upto(std::uint64_t page_id, std::uint64_t lsn);
  void enforce_cache_budget();
  void evict_page(std::uint64_t page_id);
  std::uint64_t reader_floor() const;
  bytes engine_meta() const;

  EngineConfig cfg_;
  // Serializes the public surface: one writer per chunk, readers may share
  // the handle from any thread and observe committed state only.
  mutable std::recursive_mutex api_mu_;
  std::vector<std::unique_ptr<Replica>> reps_;
  std::unique_ptr<ReplicationGroup> group_;

  // leader-side volatile state
  std::map<std::uint64_t, PageCache> cache_;
  std::size_t cache_bytes_ = 0;
  std::uint64_t cache_seq_ = 0;
  std::uint64_t durable_lsn_ = 0;
  std::uint64_t apply_lsn_ = 0;
  std::vector<std::uint64_t> reader_lsns_;
  std::unordered_map<std::uint64_t, codec::Algo> last_algorithm_;
  std::optional<std::pair<std::uint64_t, bytes>> heavy_unit_cache_;
  codec::LatencyProbe probe_;
  Metrics metrics_;
  bool in_recovery_ = false;
};

}  // namespace pagestore::store
