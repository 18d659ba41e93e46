#include "codec/page_codec.hpp"

#include <chrono>

#include "common/crc.hpp"
#include "common/errors.hpp"

namespace pagestore::codec {

void SelectorConfig::validate() const {
  if (benefit_per_overhead_threshold <= 0) throw ConfigError("selector threshold must be > 0");
  if (cpu_utilization_ceiling < 0 || cpu_utilization_ceiling > 1)
    throw ConfigError("cpu ceiling must be in [0,1]");
  if (update_fraction_trigger < 0 || update_fraction_trigger > 1)
    throw ConfigError("update trigger must be in [0,1]");
}

LatencyProbe timing_probe() {
  return [](Algo algo, byte_span payload, std::size_t original_len) {
    auto t0 = std::chrono::steady_clock::now();
    switch (algo) {
      case Algo::kLz4: lz4_decompress(payload, original_len); break;
      case Algo::kZstd: zstd_decompress(payload, original_len); break;
      case Algo::kNone: break;
    }
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::micro>(t1 - t0).count();
  };
}

LatencyProbe model_probe() {
  // Linear cost model fit to desk measurements of 16 KB page decompression;
  // keeps reports reproducible across runs.
  return [](Algo algo, byte_span payload, std::size_t original_len) {
    double len = static_cast<double>(payload.size() + original_len);
    switch (algo) {
      case Algo::kLz4: return 1.0 + len * 0.00022;
      case Algo::kZstd: return 3.0 + len * 0.00055;
      case Algo::kNone: return 0.0;
    }
    return 0.0;
  };
}

static bytes compress_with(Algo algo, byte_span page, const SelectorConfig& cfg) {
  switch (algo) {
    case Algo::kLz4: return lz4_compress(page);
    case Algo::kZstd: return zstd_compress(page, cfg.zstd_hot_level);
    case Algo::kNone: break;
  }
  return bytes(page.begin(), page.end());
}

std::pair<CompressedPage, DecisionTrace> compress_page(byte_span page, Algo last_algorithm,
                                                       const CompressHints& hints,
                                                       const SelectorConfig& cfg,
                                                       const LatencyProbe& probe) {
  if (page.size() != kPageSize) throw InvalidArgument("page must be exactly 16384 bytes");
  cfg.validate();

  DecisionTrace trace;
  bytes payload;

  if (hints.cpu_utilization > cfg.cpu_utilization_ceiling) {
    trace.path = DecisionTrace::Path::kCpuCeiling;
    trace.selected = Algo::kLz4;
    payload = lz4_compress(page);
  } else if (hints.update_fraction > cfg.update_fraction_trigger) {
    trace.path = DecisionTrace::Path::kDualCompare;
    bytes lz4_payload = lz4_compress(page);
    bytes zstd_payload = zstd_compress(page, cfg.zstd_hot_level);
    trace.lz4_padded = pad_to_block(lz4_payload.size());
    trace.zstd_padded = pad_to_block(zstd_payload.size());
    trace.lz4_latency_us = probe(Algo::kLz4, lz4_payload, kPageSize);
    trace.zstd_latency_us = probe(Algo::kZstd, zstd_payload, kPageSize);
    trace.benefit_bytes =
        static_cast<double>(trace.lz4_padded) - static_cast<double>(trace.zstd_padded);
    trace.overhead_us = trace.zstd_latency_us - trace.lz4_latency_us;
    // Positive benefit with non-positive overhead is a free win; otherwise
    // strictly exceed the bytes-per-microsecond threshold.
    bool choose_zstd =
        trace.benefit_bytes > 0 &&
        (trace.overhead_us <= 0 ||
         trace.benefit_bytes / trace.overhead_us > cfg.benefit_per_overhead_threshold);
    if (choose_zstd) {
      trace.selected = Algo::kZstd;
      payload = std::move(zstd_payload);
    } else {
      trace.selected = Algo::kLz4;
      payload = std::move(lz4_payload);
    }
  } else {
    trace.path = DecisionTrace::Path::kReuseLast;
    trace.selected = last_algorithm == Algo::kNone ? Algo::kLz4 : last_algorithm;
    payload = compress_with(trace.selected, page, cfg);
  }

  CompressedPage cp;
  if (pad_to_block(payload.size()) >= kPageSize) {
    cp.algorithm = Algo::kNone;
    cp.payload.assign(page.begin(), page.end());
  } else {
    cp.algorithm = trace.selected;
    cp.payload = std::move(payload);
  }
  trace.stored = cp.algorithm;
  return {std::move(cp), trace};
}

bytes decompress_page(const CompressedPage& cp) {
  switch (cp.algorithm) {
    case Algo::kLz4: return lz4_decompress(cp.payload, kPageSize);
    case Algo::kZstd: return zstd_decompress(cp.payload, kPageSize);
    case Algo::kNone:
      if (cp.payload.size() != kPageSize) throw CorruptPayload("raw page has wrong size");
      return cp.payload;
  }
  throw CorruptPayload("unknown algorithm tag");
}

bytes encode_framed_page(const CompressedPage& cp, std::size_t uncompressed_len) {
  if (cp.payload.size() > 0xFFFF || uncompressed_len > 0xFFFF)
    throw InvalidArgument("framed page lengths exceed u16");
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(cp.algorithm));
  w.u8(0);
  w.u16(static_cast<std::uint16_t>(uncompressed_len));
  w.u16(static_cast<std::uint16_t>(cp.payload.size()));
  w.u16(crc16_of(cp.payload));
  w.raw(cp.payload);
  return w.take();
}

CompressedPage decode_framed_page(byte_span framed, std::size_t* uncompressed_len) {
  ByteReader r(framed);
  std::uint8_t tag = r.u8();
  if (tag > 2) throw CorruptPayload("bad algorithm tag");
  r.u8();
  std::uint16_t orig = r.u16();
  std::uint16_t plen = r.u16();
  std::uint16_t crc = r.u16();
  byte_span payload = r.raw(plen);
  if (crc16_of(payload) != crc) throw CorruptPayload("page header crc mismatch");
  if (uncompressed_len) *uncompressed_len = orig;
  CompressedPage cp;
  cp.algorithm = static_cast<Algo>(tag);
  cp.payload.assign(payload.begin(), payload.end());
  return cp;
}

HeavySegment HeavySegment::build(const std::vector<bytes>& pages, const HeavyConfig& cfg) {
  if (pages.empty() || pages.size() > cfg.pages_per_unit())
    throw InvalidArgument("heavy unit holds 1..unit_size/16384 pages");
  bytes unit;
  unit.reserve(pages.size() * kPageSize);
  for (const auto& p : pages) {
    if (p.size() != kPageSize) throw InvalidArgument("heavy member must be a full page");
    unit.insert(unit.end(), p.begin(), p.end());
  }
  HeavySegment seg;
  seg.algorithm_ = Algo::kZstd;
  seg.page_count_ = static_cast<std::uint32_t>(pages.size());
  seg.payload_ = zstd_compress(unit, cfg.zstd_level);
  if (seg.payload_.size() >= unit.size()) {
    seg.algorithm_ = Algo::kNone;
    seg.payload_ = std::move(unit);
  }
  return seg;
}

HeavySegment HeavySegment::from_payload(bytes payload, std::uint32_t page_count, Algo algorithm) {
  if (page_count == 0) throw InvalidArgument("empty heavy segment");
  HeavySegment seg;
  seg.algorithm_ = algorithm;
  seg.page_count_ = page_count;
  seg.payload_ = std::move(payload);
  return seg;
}

bytes HeavySegment::extract_page(std::uint32_t page_index) const {
  if (page_index >= page_count_) throw OutOfRange("page index beyond segment");
  if (algorithm_ == Algo::kNone) {
    auto begin = payload_.begin() + static_cast<std::ptrdiff_t>(page_index * kPageSize);
    return bytes(begin, begin + kPageSize);
  }
  std::lock_guard<std::mutex> lock(cache_mu_);
  if (unit_cache_.empty()) {
    unit_cache_ = zstd_decompress(payload_, unit_len());
    unit_decompressions_++;
  }
  auto begin = unit_cache_.begin() + static_cast<std::ptrdiff_t>(page_index * kPageSize);
  return bytes(begin, begin + kPageSize);
}

std::vector<PageExtent> HeavySegment::page_offsets() const {
  std::vector<PageExtent> out;
  out.reserve(page_count_);
  for (std::uint32_t i = 0; i < page_count_; i++)
    out.push_back({i, static_cast<std::uint32_t>(i * kPageSize),
                   static_cast<std::uint32_t>(kPageSize)});
  return out;
}

}  // namespace pagestore::codec
