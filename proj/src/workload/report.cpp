#include "workload/report.hpp"

#include <algorithm>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "codec/compressors.hpp"
#include "common/errors.hpp"

namespace pagestore::workload {

using codec::Algo;
using codec::kBlockSize;
using codec::kPageSize;

const char* pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::kLz4Only: return "lz4";
    case Pipeline::kZstdOnly: return "zstd";
    case Pipeline::kAdaptive: return "adaptive";
    case Pipeline::kHeavy: return "heavy";
  }
  return "?";
}

Pipeline pipeline_from_name(const std::string& name) {
  if (name == "lz4") return Pipeline::kLz4Only;
  if (name == "zstd") return Pipeline::kZstdOnly;
  if (name == "adaptive") return Pipeline::kAdaptive;
  if (name == "heavy") return Pipeline::kHeavy;
  throw ConfigError("unknown pipeline: " + name);
}

namespace {

std::uint64_t round_up(std::uint64_t n, std::uint32_t granularity) {
  return (n + granularity - 1) / granularity * granularity;
}

}  // namespace

std::uint64_t device_stage_bytes(byte_span payload, const ReportOptions& opts) {
  std::uint64_t total = 0;
  bytes block(kBlockSize, 0);
  for (std::size_t off = 0; off < payload.size(); off += kBlockSize) {
    std::size_t n = std::min<std::size_t>(kBlockSize, payload.size() - off);
    std::fill(block.begin(), block.end(), 0);
    std::copy(payload.begin() + off, payload.begin() + off + n, block.begin());
    bytes compressed = codec::deflate_compress(block, opts.deflate_level);
    std::uint64_t stored = compressed.size() >= kBlockSize
                               ? kBlockSize
                               : round_up(compressed.size(), opts.granularity);
    total += stored;
  }
  return total;
}

namespace {

struct PageContribution {
  std::uint64_t payload = 0;
  std::uint64_t aligned = 0;
  std::uint64_t dual = 0;
  Algo algo = Algo::kNone;
};

PageContribution analyze_page(const bytes& page, Pipeline pipeline,
                              const ReportOptions& opts) {
  codec::CompressedPage cp;
  switch (pipeline) {
    case Pipeline::kLz4Only: {
      cp.payload = codec::lz4_compress(page);
      cp.algorithm = Algo::kLz4;
      break;
    }
    case Pipeline::kZstdOnly: {
      cp.payload = codec::zstd_compress(page, opts.selector.zstd_hot_level);
      cp.algorithm = Algo::kZstd;
      break;
    }
    case Pipeline::kAdaptive: {
      auto [chosen, trace] =
          codec::compress_page(page, Algo::kLz4, {0.0, 1.0}, opts.selector,
                               codec::model_probe());
      cp = std::move(chosen);
      break;
    }
    case Pipeline::kHeavy:
      throw InvalidArgument("heavy pipeline is unit-based");
  }
  if (cp.padded_len() >= kPageSize) {
    cp.algorithm = Algo::kNone;
    cp.payload = page;
  }
  PageContribution out;
  out.payload = cp.payload.size();
  out.aligned = cp.padded_len();
  out.dual = device_stage_bytes(cp.payload, opts);
  out.algo = cp.algorithm;
  return out;
}

PageContribution analyze_heavy_unit(const std::vector<bytes>& pages, std::size_t begin,
                                    std::size_t end, const ReportOptions& opts) {
  std::vector<bytes> unit(pages.begin() + static_cast<std::ptrdiff_t>(begin),
                          pages.begin() + static_cast<std::ptrdiff_t>(end));
  codec::HeavySegment seg = codec::HeavySegment::build(unit, opts.heavy);
  PageContribution out;
  out.payload = seg.payload().size();
  out.aligned = (seg.payload().size() + kBlockSize - 1) / kBlockSize * kBlockSize;
  out.dual = device_stage_bytes(seg.payload(), opts);
  out.algo = seg.algorithm();
  return out;
}

void accumulate(PipelineReport& report, const PageContribution& c) {
  report.soft_payload_bytes += c.payload;
  report.soft_aligned_bytes += c.aligned;
  report.dual_physical_bytes += c.dual;
  switch (c.algo) {
    case Algo::kLz4: report.pages_lz4++; break;
    case Algo::kZstd: report.pages_zstd++; break;
    case Algo::kNone: report.pages_none++; break;
  }
}

}  // namespace

PipelineReport analyze_corpus_serial(const std::vector<bytes>& pages, Pipeline pipeline,
                                     const ReportOptions& opts) {
  if (pages.empty()) throw MissingCorpus("empty corpus");
  PipelineReport report;
  report.pipeline = pipeline;
  report.pages = pages.size();
  report.logical_bytes = pages.size() * kPageSize;

  if (pipeline == Pipeline::kHeavy) {
    std::size_t per_unit = opts.heavy.pages_per_unit();
    for (std::size_t begin = 0; begin < pages.size(); begin += per_unit)
      accumulate(report,
                 analyze_heavy_unit(pages, begin, std::min(pages.size(), begin + per_unit),
                                    opts));
    return report;
  }
  for (const bytes& page : pages) accumulate(report, analyze_page(page, pipeline, opts));
  return report;
}

PipelineReport analyze_corpus_parallel(const std::vector<bytes>& pages, Pipeline pipeline,
                                       const ReportOptions& opts) {
  if (pages.empty()) throw MissingCorpus("empty corpus");
  PipelineReport report;
  report.pipeline = pipeline;
  report.pages = pages.size();
  report.logical_bytes = pages.size() * kPageSize;

  if (pipeline == Pipeline::kHeavy) {
    std::size_t per_unit = opts.heavy.pages_per_unit();
    std::size_t units = (pages.size() + per_unit - 1) / per_unit;
    std::vector<PageContribution> parts(units);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t u = 0; u < static_cast<std::int64_t>(units); u++) {
      std::size_t begin = static_cast<std::size_t>(u) * per_unit;
      parts[static_cast<std::size_t>(u)] =
          analyze_heavy_unit(pages, begin, std::min(pages.size(), begin + per_unit), opts);
    }
    for (const auto& part : parts) accumulate(report, part);
    return report;
  }

  std::vector<PageContribution> parts(pages.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(pages.size()); i++)
    parts[static_cast<std::size_t>(i)] =
        analyze_page(pages[static_cast<std::size_t>(i)], pipeline, opts);
  for (const auto& part : parts) accumulate(report, part);
  return report;
}

PipelineReport analyze_corpus(const std::vector<bytes>& pages, Pipeline pipeline,
                              const ReportOptions& opts, bool parallel) {
  return parallel ? analyze_corpus_parallel(pages, pipeline, opts)
                  : analyze_corpus_serial(pages, pipeline, opts);
}

void write_report(std::ostream& out, const std::vector<PipelineReport>& reports) {
  out << "pipeline  pages  logical      soft-byte    soft-4k      dual-phys    "
         "r(4k)  r(byte) r(dual) lz4/zstd/raw\n";
  char line[256];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line,
                  "%-9s %-6llu %-12llu %-12llu %-12llu %-12llu %-6.2f %-7.2f %-7.2f "
                  "%llu/%llu/%llu\n",
                  pipeline_name(r.pipeline), static_cast<unsigned long long>(r.pages),
                  static_cast<unsigned long long>(r.logical_bytes),
                  static_cast<unsigned long long>(r.soft_payload_bytes),
                  static_cast<unsigned long long>(r.soft_aligned_bytes),
                  static_cast<unsigned long long>(r.dual_physical_bytes),
                  r.soft_ratio_aligned(), r.soft_ratio_byte(), r.dual_ratio(),
                  static_cast<unsigned long long>(r.pages_lz4),
                  static_cast<unsigned long long>(r.pages_zstd),
                  static_cast<unsigned long long>(r.pages_none));
    out << line;
    std::snprintf(line, sizeof line,
                  "#DATA pipeline=%s pages=%llu logical=%llu soft_byte=%llu soft_4k=%llu "
                  "dual=%llu lz4=%llu zstd=%llu raw=%llu\n",
                  pipeline_name(r.pipeline), static_cast<unsigned long long>(r.pages),
                  static_cast<unsigned long long>(r.logical_bytes),
                  static_cast<unsigned long long>(r.soft_payload_bytes),
                  static_cast<unsigned long long>(r.soft_aligned_bytes),
                  static_cast<unsigned long long>(r.dual_physical_bytes),
                  static_cast<unsigned long long>(r.pages_lz4),
                  static_cast<unsigned long long>(r.pages_zstd),
                  static_cast<unsigned long long>(r.pages_none));
    out << line;
  }
}

}  // namespace pagestore::workload
