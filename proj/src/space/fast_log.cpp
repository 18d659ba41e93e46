#include "space/fast_log.hpp"

#include <fstream>

#include "common/errors.hpp"

namespace pagestore::space {

std::uint64_t FastLog::append(byte_span data) {
  if (size() + data.size() > capacity_)
    throw OutOfLogicalSpace("fast log capacity exceeded");
  std::uint64_t offset = size();
  buf_.insert(buf_.end(), data.begin(), data.end());
  appended_ += data.size();
  return offset;
}

void FastLog::crash(std::uint64_t keep_unflushed) {
  std::uint64_t keep = std::min<std::uint64_t>(durable_ + keep_unflushed, buf_.size());
  buf_.resize(keep);
  durable_ = keep;
}

void FastLog::truncate_prefix(std::uint64_t new_base) {
  if (new_base <= base_) return;
  if (new_base > durable_size()) throw InvalidArgument("truncation past durable data");
  std::uint64_t drop = new_base - base_;
  buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(drop));
  durable_ -= drop;
  base_ = new_base;
}

void FastLog::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write log: " + path.string());
  std::uint64_t header[3] = {capacity_, base_, durable_};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(reinterpret_cast<const char*>(buf_.data()),
            static_cast<std::streamsize>(durable_));
}

FastLog FastLog::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open log: " + path.string());
  std::uint64_t header[3];
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (!in) throw CorruptImage("log file truncated");
  FastLog log(header[0]);
  log.base_ = header[1];
  log.buf_.resize(header[2]);
  in.read(reinterpret_cast<char*>(log.buf_.data()),
          static_cast<std::streamsize>(header[2]));
  if (!in) throw CorruptImage("log file truncated");
  log.durable_ = header[2];
  log.appended_ = header[1] + header[2];
  return log;
}

}  // namespace pagestore::space
