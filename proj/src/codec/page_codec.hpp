#pragma once

#include <functional>
#include <mutex>
#include <utility>
#include <vector>

#include "codec/compressors.hpp"
#include "common/serde.hpp"

namespace pagestore::codec {

inline constexpr std::size_t kPageSize = 16384;
inline constexpr std::size_t kBlockSize = 4096;

inline std::size_t pad_to_block(std::size_t n) {
  return (n + kBlockSize - 1) / kBlockSize * kBlockSize;
}

struct SelectorConfig {
  // Switch to zstd when saved bytes per extra microsecond of decompression
  // exceed this; derived from ~12-14 us saved per 4 KB of read I/O.
  double benefit_per_overhead_threshold = 300.0;
  double cpu_utilization_ceiling = 0.20;
  double update_fraction_trigger = 0.30;
  double io_latency_saving_per_4k_us = 13.0;  // informational
  int zstd_hot_level = 1;

  void validate() const;
};

struct CompressHints {
  double cpu_utilization = 0.0;
  // Callers pass 1.0 on a page's first write so selection always runs.
  double update_fraction = 1.0;
};

struct CompressedPage {
  Algo algorithm = Algo::kNone;
  bytes payload;

  std::size_t padded_len() const { return pad_to_block(payload.size()); }
  std::size_t block_count() const { return padded_len() / kBlockSize; }
};

// Injectable decompression-latency probe (microseconds). The default times a
// real decompression; a model probe gives bit-stable reports; tests inject
// fixed values.
using LatencyProbe =
    std::function<double(Algo algo, byte_span payload, std::size_t original_len)>;

LatencyProbe timing_probe();
LatencyProbe model_probe();

struct DecisionTrace {
  enum class Path : std::uint8_t { kCpuCeiling = 0, kDualCompare = 1, kReuseLast = 2 };
  Path path = Path::kReuseLast;
  Algo selected = Algo::kLz4;  // selector outcome; feeds the next call's last_algorithm
  Algo stored = Algo::kNone;   // kNone when the payload saved nothing after alignment
  std::size_t lz4_padded = 0, zstd_padded = 0;
  double lz4_latency_us = 0.0, zstd_latency_us = 0.0;
  double benefit_bytes = 0.0, overhead_us = 0.0;
};

std::pair<CompressedPage, DecisionTrace> compress_page(
    byte_span page, Algo last_algorithm, const CompressHints& hints,
    const SelectorConfig& cfg = {}, const LatencyProbe& probe = model_probe());

bytes decompress_page(const CompressedPage& cp);

// 8-byte on-wire header: algo u8, reserved u8, uncompressed u16, payload u16,
// crc16(payload) u16; little-endian. Frames compressed pages in WAL payloads
// and replication messages.
inline constexpr std::size_t kPageHeaderSize = 8;
bytes encode_framed_page(const CompressedPage& cp, std::size_t uncompressed_len = kPageSize);
CompressedPage decode_framed_page(byte_span framed, std::size_t* uncompressed_len = nullptr);

struct HeavyConfig {
  std::size_t unit_size = 1 << 20;
  int zstd_level = 19;

  std::size_t pages_per_unit() const { return unit_size / kPageSize; }
};

struct PageExtent {
  std::uint32_t page_index;
  std::uint32_t offset;
  std::uint32_t length;
};

// One archival compression unit: several pages compressed as a whole. Keeps
// the decompressed unit cached so repeated extracts cost one decompression.
class HeavySegment {
 public:
  HeavySegment(HeavySegment&& other) noexcept
      : algorithm_(other.algorithm_),
        payload_(std::move(other.payload_)),
        page_count_(other.page_count_),
        unit_cache_(std::move(other.unit_cache_)),
        unit_decompressions_(other.unit_decompressions_) {}
  HeavySegment& operator=(HeavySegment&&) = delete;

  static HeavySegment build(const std::vector<bytes>& pages, const HeavyConfig& cfg = {});
  static HeavySegment from_payload(bytes payload, std::uint32_t page_count, Algo algorithm);

  bytes extract_page(std::uint32_t page_index) const;
  std::vector<PageExtent> page_offsets() const;

  const bytes& payload() const { return payload_; }
  std::uint32_t page_count() const { return page_count_; }
  std::size_t unit_len() const { return page_count_ * kPageSize; }
  Algo algorithm() const { return algorithm_; }
  std::uint64_t unit_decompressions() const { return unit_decompressions_; }

 private:
  HeavySegment() = default;
  Algo algorithm_ = Algo::kZstd;
  bytes payload_;
  std::uint32_t page_count_ = 0;

  mutable std::mutex cache_mu_;
  mutable bytes unit_cache_;
  mutable std::uint64_t unit_decompressions_ = 0;
};

}  // namespace pagestore::codec
