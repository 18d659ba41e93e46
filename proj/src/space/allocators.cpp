#include "space/allocators.hpp"

#include <algorithm>
#include <bit>

#include "common/errors.hpp"

namespace pagestore::space {

ExtentAllocator::ExtentAllocator(std::uint64_t total_extents)
    : used_(total_extents, false), free_(total_extents) {}

std::uint32_t ExtentAllocator::allocate() {
  for (std::size_t i = 0; i < used_.size(); i++) {
    if (!used_[i]) {
      used_[i] = true;
      free_--;
      return static_cast<std::uint32_t>(i);
    }
  }
  throw OutOfLogicalSpace("extents exhausted");
}

std::uint32_t ExtentAllocator::allocate_run(std::uint32_t n) {
  if (n == 0) throw InvalidArgument("zero-extent run");
  std::uint32_t run = 0;
  for (std::size_t i = 0; i < used_.size(); i++) {
    run = used_[i] ? 0 : run + 1;
    if (run == n) {
      std::size_t start = i + 1 - n;
      for (std::size_t k = start; k <= i; k++) used_[k] = true;
      free_ -= n;
      return static_cast<std::uint32_t>(start);
    }
  }
  throw OutOfLogicalSpace("no contiguous extent run");
}

void ExtentAllocator::release(std::uint32_t extent_id) {
  if (extent_id >= used_.size() || !used_[extent_id])
    throw DoubleFree("extent not allocated");
  used_[extent_id] = false;
  free_++;
}

void ExtentAllocator::mark_allocated(std::uint32_t extent_id) {
  if (extent_id >= used_.size()) throw InvalidArgument("extent beyond device");
  if (!used_[extent_id]) {
    used_[extent_id] = true;
    free_--;
  }
}

void ExtentAllocator::serialize(ByteWriter& w) const {
  w.u64(used_.size());
  for (std::size_t i = 0; i < used_.size(); i += 8) {
    std::uint8_t b = 0;
    for (std::size_t k = 0; k < 8 && i + k < used_.size(); k++)
      if (used_[i + k]) b |= static_cast<std::uint8_t>(1u << k);
    w.u8(b);
  }
}

ExtentAllocator ExtentAllocator::deserialize(ByteReader& r) {
  std::uint64_t total = r.u64();
  ExtentAllocator a(total);
  for (std::uint64_t i = 0; i < total; i += 8) {
    std::uint8_t b = r.u8();
    for (std::uint64_t k = 0; k < 8 && i + k < total; k++)
      if (b & (1u << k)) {
        a.used_[i + k] = true;
        a.free_--;
      }
  }
  return a;
}

std::uint32_t* BlockBitmap::slot(std::uint32_t extent_id) {
  auto it = std::find(owned_.begin(), owned_.end(), extent_id);
  return it == owned_.end() ? nullptr : &bitmap_[it - owned_.begin()];
}

const std::uint32_t* BlockBitmap::slot(std::uint32_t extent_id) const {
  auto it = std::find(owned_.begin(), owned_.end(), extent_id);
  return it == owned_.end() ? nullptr : &bitmap_[it - owned_.begin()];
}

void BlockBitmap::adopt_extent(std::uint32_t extent_id) {
  if (slot(extent_id)) throw InvalidArgument("extent already owned");
  owned_.push_back(extent_id);
  bitmap_.push_back(0);
}

void BlockBitmap::drop_extent(std::uint32_t extent_id) {
  auto it = std::find(owned_.begin(), owned_.end(), extent_id);
  if (it == owned_.end()) throw InvalidArgument("extent not owned");
  std::size_t idx = static_cast<std::size_t>(it - owned_.begin());
  if (bitmap_[idx] != 0) throw InvalidArgument("dropping extent with live blocks");
  owned_.erase(it);
  bitmap_.erase(bitmap_.begin() + static_cast<std::ptrdiff_t>(idx));
}

bool BlockBitmap::owns_block(std::uint64_t block) const {
  return slot(static_cast<std::uint32_t>(block / kExtentBlocks)) != nullptr;
}

bool BlockBitmap::extent_is_free(std::uint32_t extent_id) const {
  const std::uint32_t* s = slot(extent_id);
  return s && *s == 0;
}

std::optional<BlockRun> BlockBitmap::find_free_run(std::uint32_t n) const {
  if (n == 0) return std::nullopt;
  // Newest extent first. A run may continue into the adjacent extent when the
  // chunk owns it too.
  for (auto it = owned_.rbegin(); it != owned_.rend(); ++it) {
    std::uint32_t extent = *it;
    for (std::uint32_t bit = 0; bit < kExtentBlocks; bit++) {
      std::uint64_t start = static_cast<std::uint64_t>(extent) * kExtentBlocks + bit;
      bool ok = true;
      for (std::uint32_t k = 0; k < n; k++) {
        std::uint64_t block = start + k;
        const std::uint32_t* s = slot(static_cast<std::uint32_t>(block / kExtentBlocks));
        if (!s || (*s >> (block % kExtentBlocks)) & 1u) {
          ok = false;
          break;
        }
      }
      if (ok) return BlockRun{start, n};
    }
  }
  return std::nullopt;
}

void BlockBitmap::set_run(const BlockRun& run) {
  for (std::uint32_t k = 0; k < run.count; k++) {
    std::uint64_t block = run.start + k;
    std::uint32_t* s = slot(static_cast<std::uint32_t>(block / kExtentBlocks));
    if (!s) throw InvalidArgument("block outside owned extents");
    std::uint32_t mask = 1u << (block % kExtentBlocks);
    if (*s & mask) throw InvalidArgument("block already allocated");
    *s |= mask;
  }
}

void BlockBitmap::clear_run(const BlockRun& run) {
  if (!run_is_set(run)) throw DoubleFree("run not fully allocated");
  for (std::uint32_t k = 0; k < run.count; k++) {
    std::uint64_t block = run.start + k;
    *slot(static_cast<std::uint32_t>(block / kExtentBlocks)) &=
        ~(1u << (block % kExtentBlocks));
  }
}

bool BlockBitmap::run_is_set(const BlockRun& run) const {
  for (std::uint32_t k = 0; k < run.count; k++) {
    std::uint64_t block = run.start + k;
    const std::uint32_t* s = slot(static_cast<std::uint32_t>(block / kExtentBlocks));
    if (!s || !((*s >> (block % kExtentBlocks)) & 1u)) return false;
  }
  return true;
}

std::uint64_t BlockBitmap::popcount() const {
  std::uint64_t total = 0;
  for (std::uint32_t word : bitmap_) total += static_cast<std::uint64_t>(std::popcount(word));
  return total;
}

void BlockBitmap::serialize(ByteWriter& w) const {
  w.u32(static_cast<std::uint32_t>(owned_.size()));
  for (std::size_t i = 0; i < owned_.size(); i++) {
    w.u32(owned_[i]);
    w.u32(bitmap_[i]);
  }
}

BlockBitmap BlockBitmap::deserialize(ByteReader& r) {
  BlockBitmap b;
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; i++) {
    b.owned_.push_back(r.u32());
    b.bitmap_.push_back(r.u32());
  }
  return b;
}

}  // namespace pagestore::space
