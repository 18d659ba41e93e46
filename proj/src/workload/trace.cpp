#include "workload/trace.hpp"

#include <atomic>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "common/errors.hpp"
#include "common/rng.hpp"

namespace pagestore::workload {

std::vector<TraceOp> parse_trace(std::istream& in) {
  std::vector<TraceOp> ops;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    TraceOp op;
    if (kind == "W") {
      std::string mode;
      op.kind = TraceOp::Kind::kWrite;
      ls >> op.page_id >> mode;
      if (mode == "normal") op.mode = store::WriteMode::kNormal;
      else if (mode == "none") op.mode = store::WriteMode::kNone;
      else ls.setstate(std::ios::failbit);
    } else if (kind == "R") {
      std::string lsn;
      op.kind = TraceOp::Kind::kRead;
      ls >> op.page_id >> lsn;
      op.lsn = lsn == "durable" ? -1 : std::stoll(lsn);
    } else if (kind == "REDO") {
      op.kind = TraceOp::Kind::kRedo;
      ls >> op.page_id >> op.offset >> op.length;
    } else if (kind == "ARCHIVE") {
      op.kind = TraceOp::Kind::kArchive;
      ls >> op.range_lo >> op.range_hi;
    } else if (kind == "CRASH") {
      op.kind = TraceOp::Kind::kCrash;
    } else if (kind == "EVICT") {
      op.kind = TraceOp::Kind::kEvict;
    } else {
      throw ConfigError("unknown trace op '" + kind + "' at line " + std::to_string(lineno));
    }
    if (!ls && kind != "CRASH" && kind != "EVICT")
      throw ConfigError("malformed trace line " + std::to_string(lineno));
    ops.push_back(op);
  }
  return ops;
}

TraceResult run_trace(const std::vector<TraceOp>& ops, store::ChunkStore& engine,
                      std::uint64_t seed, std::size_t reader_threads) {
  TraceResult result;
  CompressibilitySpec page_spec{1.0, Generator::kTextMix, seed};
  std::unordered_map<std::uint64_t, std::uint64_t> version;
  std::mutex result_mu;

  auto read_batch = [&](std::size_t begin, std::size_t end) {
    // consecutive reads; distribute across reader threads
    std::atomic<std::size_t> next{begin};
    std::atomic<std::uint64_t> done{0};
    auto worker = [&]() {
      for (std::size_t i = next++; i < end; i = next++) {
        const TraceOp& op = ops[i];
        try {
          std::uint64_t at = op.lsn < 0 ? engine.lsn_state().durable_lsn
                                        : static_cast<std::uint64_t>(op.lsn);
          engine.read_page(op.page_id, at);
          done++;
        } catch (const StoreError& e) {
          std::lock_guard<std::mutex> guard(result_mu);
          result.errors.push_back(e.what());
          engine.metrics().errors++;
        }
      }
    };
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < reader_threads; t++) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    result.ops_executed += done;
  };

  for (std::size_t idx = 0; idx < ops.size(); idx++) {
    const TraceOp& op = ops[idx];
    if (reader_threads > 1 && op.kind == TraceOp::Kind::kRead) {
      std::size_t end = idx;
      while (end < ops.size() && ops[end].kind == TraceOp::Kind::kRead) end++;
      read_batch(idx, end);
      idx = end - 1;
      continue;
    }
    try {
      switch (op.kind) {
        case TraceOp::Kind::kWrite: {
          std::uint64_t v = version[op.page_id]++;
          bytes page = generate_page(page_spec, op.page_id * 7919 + v);
          engine.write_page(op.page_id, page, op.mode);
          break;
        }
        case TraceOp::Kind::kRead: {
          std::uint64_t at = op.lsn < 0 ? engine.lsn_state().durable_lsn
                                        : static_cast<std::uint64_t>(op.lsn);
          engine.read_page(op.page_id, at);
          break;
        }
        case TraceOp::Kind::kRedo: {
          Rng rng(mix_seed(seed, engine.lsn_state().durable_lsn + op.page_id));
          store::RedoRecord rec;
          rec.lsn = engine.lsn_state().durable_lsn + 1;
          rec.page_id = op.page_id;
          rec.offset = static_cast<std::uint16_t>(op.offset);
          rec.data.resize(op.length);
          for (auto& b : rec.data) b = static_cast<std::uint8_t>(rng.next());
          engine.write_redo({rec});
          break;
        }
        case TraceOp::Kind::kArchive: {
          std::vector<std::uint64_t> ids;
          for (std::uint64_t p = op.range_lo; p <= op.range_hi; p++) ids.push_back(p);
          engine.archive_range(ids);
          break;
        }
        case TraceOp::Kind::kCrash:
          engine.crash();
          engine.recover();
          break;
        case TraceOp::Kind::kEvict:
          engine.evict_logs(engine.cached_pages());
          break;
      }
      result.ops_executed++;
    } catch (const StoreError& e) {
      result.errors.push_back(e.what());
      engine.metrics().errors++;
    }
  }
  result.metrics = engine.metrics();
  result.device = engine.device().stats();
  result.compression_ratio =
      result.device.physical_live == 0
          ? 0.0
          : static_cast<double>(result.device.logical_used) /
                static_cast<double>(result.device.physical_live);
  return result;
}

void write_metrics(std::ostream& out, const TraceResult& result) {
  const store::Metrics& m = result.metrics;
  out << "ops executed        " << result.ops_executed << "\n"
      << "errors              " << result.errors.size() << "\n"
      << "page writes         " << m.page_writes << "\n"
      << "page reads          " << m.page_reads << "\n"
      << "redo appends        " << m.redo_appends << "\n"
      << "evictions           " << m.evictions << "\n"
      << "consolidations      " << m.consolidations << "\n"
      << "device reads        " << m.device_reads << "\n"
      << "device writes       " << m.device_writes << "\n"
      << "redo bytes          " << m.redo_bytes << "\n"
      << "logical used        " << result.device.logical_used << "\n"
      << "physical live       " << result.device.physical_live << "\n"
      << "compression ratio   " << result.compression_ratio << "\n";
  out << "log-read histogram  ";
  for (std::size_t i = 0; i < m.log_reads_hist.size(); i++)
    if (m.log_reads_hist[i]) out << i << ":" << m.log_reads_hist[i] << " ";
  out << "\n";
  out << "#DATA ops=" << result.ops_executed << " errors=" << result.errors.size()
      << " page_writes=" << m.page_writes << " page_reads=" << m.page_reads
      << " redo_appends=" << m.redo_appends << " device_reads=" << m.device_reads
      << " device_writes=" << m.device_writes << " logical=" << result.device.logical_used
      << " physical_live=" << result.device.physical_live
      << " ratio=" << result.compression_ratio << "\n";
}

}  // namespace pagestore::workload
