#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "store/chunk_store.hpp"
#include "workload/generator.hpp"

namespace pagestore::workload {

// Line format: `W <page> <normal|none>`, `R <page> <lsn|durable>`,
// `REDO <page> <off> <len>`, `ARCHIVE <lo> <hi>`, `CRASH`, `EVICT`.
struct TraceOp {
  enum class Kind : std::uint8_t { kWrite, kRead, kRedo, kArchive, kCrash, kEvict };
  Kind kind = Kind::kWrite;
  std::uint64_t page_id = 0;
  std::int64_t lsn = -1;  // -1: read at durable
  std::uint32_t offset = 0;
  std::uint32_t length = 0;
  std::uint64_t range_lo = 0, range_hi = 0;
  store::WriteMode mode = store::WriteMode::kNormal;
};

std::vector<TraceOp> parse_trace(std::istream& in);

struct TraceResult {
  store::Metrics metrics;
  csd::DeviceStats device;
  double compression_ratio = 0.0;  // logical_used / physical_live
  std::uint64_t ops_executed = 0;
  std::vector<std::string> errors;  // recorded, not raised
};

// Deterministic under (trace, seed): page payloads and redo patches derive
// from the seed. Engine errors land in the error list. With reader_threads
// > 1, runs of consecutive reads execute on that many threads, exercising
// the engine's concurrent-read contract; aggregate results are unchanged.
TraceResult run_trace(const std::vector<TraceOp>& ops, store::ChunkStore& engine,
                      std::uint64_t seed, std::size_t reader_threads = 1);

void write_metrics(std::ostream& out, const TraceResult& result);

}  // namespace pagestore::workload
