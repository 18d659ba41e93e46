#include "codec/compressors.hpp"

#include <zlib.h>

#include "common/errors.hpp"

// Stable C ABI of liblz4/libzstd, declared locally: this environment ships
// the runtime libraries without development headers.
extern "C" {
int LZ4_compressBound(int inputSize);
int LZ4_compress_default(const char* src, char* dst, int srcSize, int dstCapacity);
int LZ4_decompress_safe(const char* src, char* dst, int compressedSize, int dstCapacity);
size_t ZSTD_compressBound(size_t srcSize);
size_t ZSTD_compress(void* dst, size_t dstCapacity, const void* src, size_t srcSize, int level);
size_t ZSTD_decompress(void* dst, size_t dstCapacity, const void* src, size_t srcSize);
unsigned ZSTD_isError(size_t code);
}

namespace pagestore::codec {

const char* algo_name(Algo a) {
  switch (a) {
    case Algo::kLz4: return "lz4";
    case Algo::kZstd: return "zstd";
    case Algo::kNone: return "none";
  }
  return "?";
}

CodecCounters& codec_counters() {
  static CodecCounters counters;
  return counters;
}

bytes lz4_compress(byte_span src) {
  codec_counters().lz4_compress++;
  bytes out(static_cast<std::size_t>(LZ4_compressBound(static_cast<int>(src.size()))));
  int n = LZ4_compress_default(reinterpret_cast<const char*>(src.data()),
                               reinterpret_cast<char*>(out.data()),
                               static_cast<int>(src.size()), static_cast<int>(out.size()));
  if (n <= 0) throw CorruptPayload("lz4 compression failed");
  out.resize(static_cast<std::size_t>(n));
  return out;
}

bytes lz4_decompress(byte_span src, std::size_t original_len) {
  codec_counters().lz4_decompress++;
  bytes out(original_len);
  int n = LZ4_decompress_safe(reinterpret_cast<const char*>(src.data()),
                              reinterpret_cast<char*>(out.data()),
                              static_cast<int>(src.size()), static_cast<int>(original_len));
  if (n < 0 || static_cast<std::size_t>(n) != original_len)
    throw CorruptPayload("lz4 payload corrupt");
  return out;
}

bytes zstd_compress(byte_span src, int level) {
  codec_counters().zstd_compress++;
  bytes out(ZSTD_compressBound(src.size()));
  size_t n = ZSTD_compress(out.data(), out.size(), src.data(), src.size(), level);
  if (ZSTD_isError(n)) throw CorruptPayload("zstd compression failed");
  out.resize(n);
  return out;
}

bytes zstd_decompress(byte_span src, std::size_t original_len) {
  codec_counters().zstd_decompress++;
  bytes out(original_len);
  size_t n = ZSTD_decompress(out.data(), out.size(), src.data(), src.size());
  if (ZSTD_isError(n) || n != original_len) throw CorruptPayload("zstd payload corrupt");
  return out;
}

bytes deflate_compress(byte_span src, int level) {
  codec_counters().deflate_calls++;
  uLongf dest_len = compressBound(static_cast<uLong>(src.size()));
  bytes out(dest_len);
  int rc = compress2(out.data(), &dest_len, reinterpret_cast<const Bytef*>(src.data()),
                     static_cast<uLong>(src.size()), level);
  if (rc != Z_OK) throw CorruptPayload("deflate failed");
  out.resize(dest_len);
  return out;
}

bytes inflate_exact(byte_span src, std::size_t original_len) {
  codec_counters().inflate_calls++;
  bytes out(original_len);
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw CorruptPayload("inflate init failed");
  zs.next_in = const_cast<Bytef*>(reinterpret_cast<const Bytef*>(src.data()));
  zs.avail_in = static_cast<uInt>(src.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(original_len);
  int rc = inflate(&zs, Z_FINISH);
  bool ok = rc == Z_STREAM_END && zs.total_out == original_len;
  inflateEnd(&zs);
  if (!ok) throw CorruptPayload("deflate payload corrupt");
  return out;
}

}  // namespace pagestore::codec
