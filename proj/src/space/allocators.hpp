#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "common/serde.hpp"

namespace pagestore::space {

inline constexpr std::uint64_t kExtentSize = 131072;  // 128 KB
inline constexpr std::uint32_t kExtentBlocks = 32;    // 4 KB blocks per extent

// Device-level allocator handing out 128 KB extents of logical space.
class ExtentAllocator {
 public:
  explicit ExtentAllocator(std::uint64_t total_extents = 0);

  std::uint32_t allocate();                      // lowest free extent
  std::uint32_t allocate_run(std::uint32_t n);   // lowest n adjacent free extents
  void release(std::uint32_t extent_id);
  void mark_allocated(std::uint32_t extent_id);  // recovery replay

  bool is_allocated(std::uint32_t extent_id) const { return used_[extent_id]; }
  std::uint64_t total() const { return used_.size(); }
  std::uint64_t free_count() const { return free_; }

  void serialize(ByteWriter& w) const;
  static ExtentAllocator deserialize(ByteReader& r);

 private:
  std::vector<bool> used_;
  std::uint64_t free_ = 0;
};

struct BlockRun {
  std::uint64_t start = 0;  // absolute 4 KB block index
  std::uint32_t count = 0;

  bool operator==(const BlockRun&) const = default;
};

// Chunk-scoped bitmap over the extents the chunk owns: one bit per 4 KB
// block, first-fit starting from the newest extent.
class BlockBitmap {
 public:
  void adopt_extent(std::uint32_t extent_id);
  void drop_extent(std::uint32_t extent_id);

  std::optional<BlockRun> find_free_run(std::uint32_t n) const;
  void set_run(const BlockRun& run);    // throws DoubleFree style misuse
  void clear_run(const BlockRun& run);  // throws DoubleFree when any bit clear
  bool run_is_set(const BlockRun& run) const;

  bool owns_block(std::uint64_t block) const;
  bool extent_is_free(std::uint32_t extent_id) const;
  std::uint64_t popcount() const;
  const std::vector<std::uint32_t>& owned_extents() const { return owned_; }

  void serialize(ByteWriter& w) const;
  static BlockBitmap deserialize(ByteReader& r);

 private:
  std::uint32_t* slot(std::uint32_t extent_id);
  const std::uint32_t* slot(std::uint32_t extent_id) const;

  std::vector<std::uint32_t> owned_;   // adoption order; newest last
  std::vector<std::uint32_t> bitmap_;  // parallel to owned_, one u32 per extent
};

}  // namespace pagestore::space
