#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "codec/compressors.hpp"
#include "common/errors.hpp"
#include "workload/generator.hpp"
#include "workload/report.hpp"
#include "workload/trace.hpp"

using namespace pagestore;
using namespace pagestore::workload;

namespace {

double measured_deflate_ratio(const bytes& page, std::uint32_t granularity = 16) {
  std::uint64_t stored = 0;
  for (std::size_t off = 0; off < page.size(); off += 4096) {
    bytes compressed =
        codec::deflate_compress(byte_span(page.data() + off, 4096), 5);
    std::uint64_t n = compressed.size() >= 4096
                          ? 4096
                          : (compressed.size() + granularity - 1) / granularity * granularity;
    stored += n;
  }
  return static_cast<double>(page.size()) / static_cast<double>(stored);
}

}  // namespace

TEST_CASE("page generation is deterministic under (seed, index)") {
  CompressibilitySpec spec{2.0, Generator::kRepeatFill, 9};
  CHECK(generate_page(spec, 4) == generate_page(spec, 4));
  CHECK(generate_page(spec, 4) != generate_page(spec, 5));
  CompressibilitySpec other{2.0, Generator::kRepeatFill, 10};
  CHECK(generate_page(spec, 4) != generate_page(other, 4));
}

TEST_CASE("random pages are incompressible") {
  CompressibilitySpec spec{1.0, Generator::kRandom, 3};
  for (int i = 0; i < 8; i++) {
    double ratio = measured_deflate_ratio(generate_page(spec, i));
    CHECK(ratio > 0.98);
    CHECK(ratio < 1.02);
  }
}

TEST_CASE("repeat fill hits the target ratio within 15 percent") {
  for (double target : {1.5, 2.0, 2.5, 4.0}) {
    CAPTURE(target);
    CompressibilitySpec spec{target, Generator::kRepeatFill, 21};
    double total = 0;
    int n = 12;
    for (int i = 0; i < n; i++) total += measured_deflate_ratio(generate_page(spec, i));
    double mean = total / n;
    CHECK(mean > target * 0.85);
    CHECK(mean < target * 1.15);
  }
}

TEST_CASE("repeat fill target 2.0 lands in the calibrated band") {
  CompressibilitySpec spec{2.0, Generator::kRepeatFill, 33};
  for (int i = 0; i < 8; i++) {
    double ratio = measured_deflate_ratio(generate_page(spec, i));
    CHECK(ratio >= 1.7);
    CHECK(ratio <= 2.3);
  }
}

TEST_CASE("spec validation rejects compressible random data") {
  CompressibilitySpec bad{2.0, Generator::kRandom, 0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CompressibilitySpec sub{0.5, Generator::kRepeatFill, 0};
  CHECK_THROWS_AS(sub.validate(), ConfigError);
}

TEST_CASE("corpus write/read roundtrip") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "workload_test_corpus";
  fs::remove_all(dir);
  auto pages = bundled_corpus(40, 5);
  write_corpus(dir, pages, 16);
  auto loaded = read_corpus(dir);
  REQUIRE(loaded.size() == pages.size());
  for (std::size_t i = 0; i < pages.size(); i++) CHECK(loaded[i] == pages[i]);
  fs::remove_all(dir);
  CHECK_THROWS_AS(read_corpus(dir), MissingCorpus);
}

TEST_CASE("parallel corpus analysis matches the serial reference exactly") {
  auto pages = bundled_corpus(52, 7);
  for (auto pipeline : {Pipeline::kLz4Only, Pipeline::kZstdOnly, Pipeline::kAdaptive,
                        Pipeline::kHeavy}) {
    CAPTURE(pipeline_name(pipeline));
    ReportOptions opts;
    opts.heavy.unit_size = 16 * codec::kPageSize;
    auto serial = analyze_corpus_serial(pages, pipeline, opts);
    auto parallel = analyze_corpus_parallel(pages, pipeline, opts);
    CHECK(serial.soft_payload_bytes == parallel.soft_payload_bytes);
    CHECK(serial.soft_aligned_bytes == parallel.soft_aligned_bytes);
    CHECK(serial.dual_physical_bytes == parallel.dual_physical_bytes);
    CHECK(serial.pages_lz4 == parallel.pages_lz4);
    CHECK(serial.pages_zstd == parallel.pages_zstd);
    CHECK(serial.pages_none == parallel.pages_none);
  }
}

TEST_CASE("aligned accounting never undercuts byte-granular accounting") {
  auto pages = bundled_corpus(26, 11);
  for (auto pipeline : {Pipeline::kLz4Only, Pipeline::kZstdOnly, Pipeline::kAdaptive}) {
    auto report = analyze_corpus_serial(pages, pipeline);
    CHECK(report.soft_aligned_bytes >= report.soft_payload_bytes);
  }
}

TEST_CASE("adaptive stays within the selection slack of the best single choice") {
  auto pages = bundled_corpus(52, 13);
  auto lz4 = analyze_corpus_serial(pages, Pipeline::kLz4Only);
  auto zstd = analyze_corpus_serial(pages, Pipeline::kZstdOnly);
  auto adaptive = analyze_corpus_serial(pages, Pipeline::kAdaptive);
  std::uint64_t best = std::min(lz4.soft_aligned_bytes, zstd.soft_aligned_bytes);
  CHECK(adaptive.soft_aligned_bytes <= best + best * 3 / 100);
}

TEST_CASE("trace parser handles every record form") {
  std::stringstream in(
      "# comment\n"
      "W 3 normal\n"
      "W 4 none\n"
      "R 3 durable\n"
      "R 3 7\n"
      "REDO 3 128 64\n"
      "ARCHIVE 0 5\n"
      "CRASH\n"
      "EVICT\n");
  auto ops = parse_trace(in);
  REQUIRE(ops.size() == 8);
  CHECK(ops[0].kind == TraceOp::Kind::kWrite);
  CHECK(ops[1].mode == store::WriteMode::kNone);
  CHECK(ops[2].lsn == -1);
  CHECK(ops[3].lsn == 7);
  CHECK(ops[4].offset == 128);
  CHECK(ops[5].range_hi == 5);
  CHECK(ops[6].kind == TraceOp::Kind::kCrash);
  CHECK(ops[7].kind == TraceOp::Kind::kEvict);

  std::stringstream bad("W 3 sideways\n");
  CHECK_THROWS_AS(parse_trace(bad), ConfigError);
}

TEST_CASE("trace execution is deterministic and records errors") {
  std::stringstream in(
      "W 1 normal\n"
      "W 2 normal\n"
      "REDO 1 100 32\n"
      "R 1 durable\n"
      "R 99 durable\n"  // NotFound, recorded not raised
      "EVICT\n"
      "R 1 durable\n"
      "CRASH\n"
      "R 1 durable\n");
  auto ops = parse_trace(in);

  auto run_once = [&]() {
    store::EngineConfig cfg;
    cfg.device.logical_capacity = 40ull << 20;
    cfg.device.physical_capacity = 16ull << 20;
    store::ChunkStore engine(cfg);
    return run_trace(ops, engine, 123);
  };
  TraceResult a = run_once();
  TraceResult b = run_once();
  CHECK(a.errors.size() == 1);
  CHECK(a.ops_executed == 8);
  CHECK(a.metrics.device_reads == b.metrics.device_reads);
  CHECK(a.metrics.device_writes == b.metrics.device_writes);
  CHECK(a.device.physical_live == b.device.physical_live);

  std::stringstream ra, rb;
  write_metrics(ra, a);
  write_metrics(rb, b);
  CHECK(ra.str() == rb.str());
}

TEST_CASE("write-only traces issue at least one device write per page") {
  std::stringstream in("W 1 normal\nW 2 normal\nW 3 normal\n");
  auto ops = parse_trace(in);
  store::EngineConfig cfg;
  cfg.device.logical_capacity = 40ull << 20;
  cfg.device.physical_capacity = 16ull << 20;
  store::ChunkStore engine(cfg);
  TraceResult result = run_trace(ops, engine, 5);
  CHECK(result.errors.empty());
  CHECK(result.metrics.device_writes >= 3);
  CHECK(result.compression_ratio ==
        doctest::Approx(static_cast<double>(result.device.logical_used) /
                        static_cast<double>(result.device.physical_live)));
}

TEST_CASE("multi-reader trace execution matches single-threaded results") {
  std::stringstream in(
      "W 0 normal\nW 1 normal\nW 2 normal\nW 3 normal\n"
      "REDO 0 10 20\nREDO 1 30 20\n"
      "R 0 durable\nR 1 durable\nR 2 durable\nR 3 durable\n"
      "R 0 durable\nR 1 durable\nR 2 durable\nR 3 durable\n");
  auto ops = parse_trace(in);
  auto run_with = [&](std::size_t readers) {
    store::EngineConfig cfg;
    cfg.device.logical_capacity = 40ull << 20;
    cfg.device.physical_capacity = 16ull << 20;
    store::ChunkStore engine(cfg);
    return run_trace(ops, engine, 77, readers);
  };
  TraceResult serial = run_with(1);
  TraceResult parallel = run_with(4);
  CHECK(serial.errors.empty());
  CHECK(parallel.errors.empty());
  CHECK(parallel.ops_executed == serial.ops_executed);
  CHECK(parallel.metrics.page_reads == serial.metrics.page_reads);
  CHECK(parallel.metrics.device_reads == serial.metrics.device_reads);
  CHECK(parallel.device.physical_live == serial.device.physical_live);
}

TEST_CASE("ablation monotonicity: dual-layer beats hardware-only beats raw") {
  auto pages = bundled_corpus(52, 17);
  std::uint64_t logical = pages.size() * codec::kPageSize;
  std::uint64_t hardware_only = 0;
  for (const auto& page : pages) hardware_only += device_stage_bytes(page);
  auto dual = analyze_corpus_serial(pages, Pipeline::kZstdOnly);
  double hw_ratio = static_cast<double>(logical) / static_cast<double>(hardware_only);
  CHECK(dual.dual_ratio() >= hw_ratio);
  CHECK(hw_ratio >= 1.0);
}
