#include <doctest.h>

#include "common/errors.hpp"
#include "common/rng.hpp"
#include "oracles.hpp"
#include "space/allocators.hpp"
#include "space/space_index.hpp"
#include "space/wal.hpp"

using namespace pagestore;
using namespace pagestore::space;

namespace {

struct IndexFixture {
  FastLog wal_log{8 << 20};
  std::vector<std::pair<std::uint64_t, std::uint32_t>> trims;
  SpaceIndex idx;

  IndexFixture(std::uint64_t capacity = 16 << 20)
      : idx(capacity, &wal_log, [this](std::uint64_t lba, std::uint32_t n) {
          trims.push_back({lba, n});
        }) {}
};

IndexEntry sample_entry(std::uint64_t page_id, BlockRun run) {
  IndexEntry e;
  e.page_id = page_id;
  e.mode = PageMode::kNormal;
  e.algorithm = codec::Algo::kZstd;
  e.base_lsn = 42;
  e.blocks = run;
  e.payload_len = 5000;
  return e;
}

}  // namespace

TEST_CASE("extent allocator basics") {
  ExtentAllocator a(8);
  std::uint32_t e0 = a.allocate();
  std::uint32_t e1 = a.allocate();
  CHECK(e0 == 0);
  CHECK(e1 == 1);
  a.release(e0);
  CHECK_THROWS_AS(a.release(e0), DoubleFree);
  CHECK(a.allocate() == 0);  // lowest free returns first
  std::uint32_t run = a.allocate_run(3);
  CHECK(run == 2);
  CHECK(a.free_count() == 3);
}

TEST_CASE("extent allocator run requires adjacency") {
  ExtentAllocator a(6);
  for (int i = 0; i < 6; i++) a.allocate();
  a.release(1);
  a.release(3);
  a.release(4);
  CHECK(a.allocate_run(2) == 3);
  CHECK_THROWS_AS(a.allocate_run(2), OutOfLogicalSpace);
}

TEST_CASE("first allocation on a fresh chunk takes the first extent blocks") {
  IndexFixture f;
  BlockRun run = f.idx.allocate_blocks(4);
  CHECK(run.start == 0);
  CHECK(run.count == 4);
  CHECK(f.idx.owned_extents() == 1);
}

TEST_CASE("32 single-block allocations consume exactly one extent") {
  IndexFixture f;
  for (int i = 0; i < 32; i++) f.idx.allocate_blocks(1);
  CHECK(f.idx.owned_extents() == 1);
  f.idx.allocate_blocks(1);
  CHECK(f.idx.owned_extents() == 2);
}

TEST_CASE("large allocations span adjacent extents") {
  IndexFixture f;
  BlockRun run = f.idx.allocate_blocks(256);  // 8 extents
  CHECK(run.count == 256);
  CHECK(run.start % kExtentBlocks == 0);
  CHECK(f.idx.owned_extents() == 8);
  CHECK(f.idx.allocated_blocks() == 256);
}

TEST_CASE("free returns empty extents and trims the device range") {
  IndexFixture f;
  BlockRun run = f.idx.allocate_blocks(8);
  f.idx.free_blocks(run);
  CHECK(f.idx.owned_extents() == 0);
  CHECK(f.idx.free_extents() == f.idx.total_extents());
  REQUIRE(f.trims.size() == 1);
  CHECK(f.trims[0] == std::pair<std::uint64_t, std::uint32_t>{run.start, 8});
  CHECK_THROWS_AS(f.idx.free_blocks(run), DoubleFree);
}

TEST_CASE("random alloc/free trace matches the reference live set") {
  IndexFixture f(64 << 20);
  oracle::ReferenceAllocator ref;
  std::vector<BlockRun> live;
  Rng rng(17);
  for (int op = 0; op < 3000; op++) {
    if (live.empty() || rng.below(100) < 60) {
      std::uint32_t n = 1 + static_cast<std::uint32_t>(rng.below(12));
      BlockRun run = f.idx.allocate_blocks(n);
      ref.mark(run.start, run.count);
      live.push_back(run);
    } else {
      std::size_t pick = rng.below(live.size());
      BlockRun run = live[pick];
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(pick));
      f.idx.free_blocks(run);
      ref.clear(run.start, run.count);
    }
  }
  CHECK(f.idx.allocated_blocks() == ref.size());
  for (const BlockRun& run : live)
    for (std::uint32_t i = 0; i < run.count; i++) CHECK(f.idx.block_allocated(run.start + i));
}

TEST_CASE("allocation sizes are bounded") {
  IndexFixture f;
  CHECK_THROWS_AS(f.idx.allocate_blocks(0), InvalidArgument);
  CHECK_THROWS_AS(f.idx.allocate_blocks(257), InvalidArgument);
}

TEST_CASE("extent exhaustion raises OutOfLogicalSpace") {
  IndexFixture f(4 * kExtentSize);
  for (int i = 0; i < 4; i++) f.idx.allocate_blocks(32);
  CHECK_THROWS_AS(f.idx.allocate_blocks(1), OutOfLogicalSpace);
}

TEST_CASE("wal record roundtrip and torn tail handling") {
  WalRecord rec{9, WalKind::kAlloc, {1, 2, 3, 4, 5}};
  bytes encoded = encode_wal_record(rec);

  auto replayed = replay_wal(encoded);
  REQUIRE(replayed.size() == 1);
  CHECK(replayed[0].lsn == 9);
  CHECK(replayed[0].kind == WalKind::kAlloc);
  CHECK(replayed[0].payload == rec.payload);

  // torn tail: drop trailing bytes
  bytes torn(encoded.begin(), encoded.end() - 3);
  CHECK(replay_wal(torn).empty());

  // torn final record: full length but mangled crc
  bytes mangled = encoded;
  mangled.back() ^= 0xFF;
  CHECK(replay_wal(mangled).empty());
}

TEST_CASE("interior wal corruption raises CorruptWal") {
  bytes stream;
  for (std::uint64_t i = 1; i <= 3; i++) {
    bytes rec = encode_wal_record({i, WalKind::kIndexUpdate, bytes(10, std::uint8_t(i))});
    stream.insert(stream.end(), rec.begin(), rec.end());
  }
  stream[20] ^= 0xFF;  // inside the first record
  CHECK_THROWS_AS(replay_wal(stream), CorruptWal);
}

TEST_CASE("index put/get/remove roundtrip") {
  IndexFixture f;
  BlockRun run = f.idx.allocate_blocks(2);
  IndexEntry e = sample_entry(7, run);
  f.idx.index_put(e);
  CHECK(f.idx.index_get(7) == e);

  IndexEntry e2 = e;
  e2.payload_len = 6000;
  f.idx.index_put(e2);
  CHECK(f.idx.index_get(7).payload_len == 6000);

  f.idx.index_remove(7);
  CHECK_THROWS_AS(f.idx.index_get(7), NotFound);
  CHECK_THROWS_AS(f.idx.index_remove(7), NotFound);
}

TEST_CASE("random index mutations match a plain map") {
  IndexFixture f;
  std::map<std::uint64_t, IndexEntry> model;
  Rng rng(23);
  BlockRun run = f.idx.allocate_blocks(1);
  for (int op = 0; op < 20000; op++) {
    std::uint64_t page = rng.below(300);
    if (rng.below(100) < 70) {
      IndexEntry e = sample_entry(page, run);
      e.payload_len = static_cast<std::uint32_t>(rng.below(16384));
      e.base_lsn = rng.below(1 << 20);
      f.idx.index_put(e);
      model[page] = e;
    } else if (model.count(page)) {
      f.idx.index_remove(page);
      model.erase(page);
    }
  }
  REQUIRE(f.idx.entries().size() == model.size());
  for (const auto& [page, e] : model) CHECK(f.idx.index_get(page) == e);
}

TEST_CASE("recovery from full wal equals recovery from checkpoint") {
  IndexFixture f;
  Rng rng(31);
  std::vector<std::pair<std::uint64_t, BlockRun>> live;
  for (std::uint64_t i = 0; i < 200; i++) {
    BlockRun run = f.idx.allocate_blocks(1 + static_cast<std::uint32_t>(rng.below(4)));
    f.idx.index_put(sample_entry(i, run));
    live.push_back({i, run});
    if (i % 3 == 0) {
      auto [victim_page, victim_run] = live.front();
      f.idx.free_blocks(victim_run);
      f.idx.index_remove(victim_page);
      live.erase(live.begin());
    }
  }
  f.idx.flush();

  // route A: replay everything from the wal
  IndexFixture a;
  a.idx.recover({}, f.wal_log.durable_bytes());

  // route B: checkpoint, then recover from snapshot + empty wal
  bytes snapshot = f.idx.checkpoint();
  IndexFixture b;
  b.idx.recover(snapshot, f.wal_log.durable_bytes().subspan(f.wal_log.durable_bytes().size()));

  CHECK(a.idx.entries().size() == f.idx.entries().size());
  CHECK(b.idx.entries().size() == f.idx.entries().size());
  CHECK(a.idx.allocated_blocks() == f.idx.allocated_blocks());
  CHECK(b.idx.allocated_blocks() == f.idx.allocated_blocks());
  for (const auto& [page, e] : f.idx.entries()) {
    CHECK(a.idx.index_get(page) == e);
    CHECK(b.idx.index_get(page) == e);
  }
}

TEST_CASE("wal append without apply still recovers the operation") {
  IndexFixture f;
  BlockRun run = f.idx.allocate_blocks(1);
  f.idx.index_put(sample_entry(1, run));
  f.idx.flush();

  // simulate: record appended and flushed, crash before in-memory apply.
  // The wal-before-ack rule means recovery must surface it.
  IndexEntry extra = sample_entry(2, run);
  ByteWriter w;
  w.u8(1);  // put
  extra.serialize(w);
  Wal side(&f.wal_log);
  side.set_next_lsn(1000);
  side.append(WalKind::kIndexUpdate, w.data());
  side.flush();

  IndexFixture recovered;
  recovered.idx.recover({}, f.wal_log.durable_bytes());
  CHECK(recovered.idx.index_get(2) == extra);
}

TEST_CASE("torn tail after the last flush is dropped silently") {
  IndexFixture f;
  BlockRun run = f.idx.allocate_blocks(1);
  f.idx.index_put(sample_entry(1, run));
  f.idx.flush();
  std::uint64_t durable = f.wal_log.durable_size();

  // unflushed partial record, then crash keeping half of it
  f.idx.index_put(sample_entry(2, run));
  f.wal_log.crash(3);
  CHECK(f.wal_log.durable_size() == durable + 3);

  IndexFixture recovered;
  recovered.idx.recover({}, f.wal_log.durable_bytes());
  CHECK(recovered.idx.index_find(1) != nullptr);
  CHECK(recovered.idx.index_find(2) == nullptr);
}

TEST_CASE("two checkpoints with no intervening ops are identical") {
  IndexFixture f;
  for (int i = 0; i < 50; i++) {
    BlockRun run = f.idx.allocate_blocks(2);
    f.idx.index_put(sample_entry(i, run));
  }
  bytes meta = {9, 9, 9};
  bytes snap1 = f.idx.checkpoint(meta);
  bytes snap2 = f.idx.checkpoint(meta);
  CHECK(snap1 == snap2);
  CHECK(SpaceIndex::checkpoint_engine_meta(snap1).size() == 3);
}

TEST_CASE("randomized crash-point recovery over wal traces") {
  Rng rng(47);
  for (int trial = 0; trial < 100; trial++) {
    IndexFixture live;
    std::map<std::uint64_t, IndexEntry> acked;    // state at the last flush
    std::map<std::uint64_t, IndexEntry> applied;  // includes unflushed ops

    int op_count = 1 + static_cast<int>(rng.below(60));
    for (int op = 0; op < op_count; op++) {
      std::uint64_t page = rng.below(40);
      if (applied.count(page) && rng.below(100) < 25) {
        live.idx.index_remove(page);
        applied.erase(page);
      } else {
        BlockRun run = live.idx.allocate_blocks(1 + static_cast<std::uint32_t>(rng.below(4)));
        IndexEntry e = sample_entry(page, run);
        e.base_lsn = rng.below(100000);
        live.idx.index_put(e);
        applied[page] = e;
      }
      if (rng.below(100) < 60) {  // ack boundary
        live.idx.flush();
        acked = applied;
      }
    }
    // crash keeping under one record header of unflushed bytes: the torn
    // fragment can never complete a record, so recovery lands exactly on the
    // acked prefix.
    live.wal_log.crash(rng.below(13));

    IndexFixture recovered;
    recovered.idx.recover({}, live.wal_log.durable_bytes());
    REQUIRE(recovered.idx.entries().size() == acked.size());
    for (const auto& [page, e] : acked) CHECK(recovered.idx.index_get(page) == e);
    CHECK(recovered.idx.owned_extents() + recovered.idx.free_extents() ==
          recovered.idx.total_extents());
  }
}
