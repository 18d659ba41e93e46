#pragma once

#include <atomic>
#include <cstdint>

#include "common/serde.hpp"

namespace pagestore::codec {

enum class Algo : std::uint8_t { kLz4 = 0, kZstd = 1, kNone = 2 };

const char* algo_name(Algo a);

bytes lz4_compress(byte_span src);
bytes lz4_decompress(byte_span src, std::size_t original_len);

bytes zstd_compress(byte_span src, int level);
bytes zstd_decompress(byte_span src, std::size_t original_len);

bytes deflate_compress(byte_span src, int level);
// Inflates a stream that may carry trailing padding (alignment fill); stops
// at end-of-stream and checks the output length.
bytes inflate_exact(byte_span src, std::size_t original_len);

// Process-wide invocation counters. The redo-bypass probes assert these stay
// flat across the log path.
struct CodecCounters {
  std::atomic<std::uint64_t> lz4_compress{0}, lz4_decompress{0};
  std::atomic<std::uint64_t> zstd_compress{0}, zstd_decompress{0};
  std::atomic<std::uint64_t> deflate_calls{0}, inflate_calls{0};

  std::uint64_t total() const {
    return lz4_compress + lz4_decompress + zstd_compress + zstd_decompress +
           deflate_calls + inflate_calls;
  }
  void reset() {
    lz4_compress = lz4_decompress = 0;
    zstd_compress = zstd_decompress = 0;
    deflate_calls = inflate_calls = 0;
  }
};

CodecCounters& codec_counters();

}  // namespace pagestore::codec
