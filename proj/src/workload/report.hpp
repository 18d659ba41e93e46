#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "codec/page_codec.hpp"
#include "common/serde.hpp"

namespace pagestore::workload {

enum class Pipeline : std::uint8_t { kLz4Only = 0, kZstdOnly = 1, kAdaptive = 2, kHeavy = 3 };

const char* pipeline_name(Pipeline p);
Pipeline pipeline_from_name(const std::string& name);

struct ReportOptions {
  codec::SelectorConfig selector;
  codec::HeavyConfig heavy;
  int deflate_level = 5;          // device stage
  std::uint32_t granularity = 16; // device offset granularity (V2)
};

struct PipelineReport {
  Pipeline pipeline = Pipeline::kZstdOnly;
  std::uint64_t pages = 0;
  std::uint64_t logical_bytes = 0;
  // software layer
  std::uint64_t soft_payload_bytes = 0;  // byte-granular accounting
  std::uint64_t soft_aligned_bytes = 0;  // 4 KB-aligned accounting
  // after the device's per-block deflate stage
  std::uint64_t dual_physical_bytes = 0;
  std::uint64_t pages_lz4 = 0, pages_zstd = 0, pages_none = 0;

  double soft_ratio_aligned() const {
    return static_cast<double>(logical_bytes) / static_cast<double>(soft_aligned_bytes);
  }
  double soft_ratio_byte() const {
    return static_cast<double>(logical_bytes) / static_cast<double>(soft_payload_bytes);
  }
  double dual_ratio() const {
    return static_cast<double>(logical_bytes) / static_cast<double>(dual_physical_bytes);
  }
  double alignment_overhead() const {
    return static_cast<double>(soft_aligned_bytes) /
               static_cast<double>(soft_payload_bytes) -
           1.0;
  }
};

// Bytes the device keeps for one software-layer payload: each 4 KB block is
// deflated independently, incompressible blocks stay raw.
std::uint64_t device_stage_bytes(byte_span payload, const ReportOptions& opts = {});

// Serial reference implementation; the parallel kernel must match it
// field-for-field.
PipelineReport analyze_corpus_serial(const std::vector<bytes>& pages, Pipeline pipeline,
                                     const ReportOptions& opts = {});
// OpenMP kernel: pages (or heavy units) are independent work items.
PipelineReport analyze_corpus_parallel(const std::vector<bytes>& pages, Pipeline pipeline,
                                       const ReportOptions& opts = {});

PipelineReport analyze_corpus(const std::vector<bytes>& pages, Pipeline pipeline,
                              const ReportOptions& opts = {}, bool parallel = true);

void write_report(std::ostream& out, const std::vector<PipelineReport>& reports);

}  // namespace pagestore::workload
