#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "common/errors.hpp"
#include "common/rng.hpp"
#include "codec/compressors.hpp"
#include "csd/device.hpp"
#include "oracles.hpp"

using namespace pagestore;
using namespace pagestore::csd;

namespace {

DeviceConfig small_config(EntryFormat f = EntryFormat::kV2) {
  DeviceConfig cfg;
  cfg.logical_capacity = 40ull << 20;
  cfg.physical_capacity = 16ull << 20;
  cfg.entry_format = f;
  return cfg;
}

bytes constant_block(std::uint8_t fill) { return bytes(4096, fill); }

bytes random_block(std::uint64_t seed) {
  Rng rng(seed);
  bytes b(4096);
  for (auto& c : b) c = static_cast<std::uint8_t>(rng.next());
  return b;
}

bytes mixed_block(std::uint64_t seed, std::size_t random_bytes) {
  Rng rng(seed);
  bytes b(4096, 0);
  for (std::size_t i = 0; i < random_bytes; i++)
    b[i] = static_cast<std::uint8_t>(rng.next());
  return b;
}

}  // namespace

TEST_CASE("entry encoding widths and roundtrip") {
  L2PEntry e{12, 512, 2893, false};
  bytes v1 = encode_entry(e, EntryFormat::kV1);
  CHECK(v1.size() == 8);
  CHECK(decode_entry(v1, EntryFormat::kV1) == e);

  L2PEntry e2{12, 512, 2896, false};  // V2 wants 16-byte multiples
  bytes v2 = encode_entry(e2, EntryFormat::kV2);
  CHECK(v2.size() == 7);
  CHECK(decode_entry(v2, EntryFormat::kV2) == e2);
}

TEST_CASE("entry encoding rejects out-of-range fields") {
  CHECK_THROWS_AS(encode_entry({0, 520, 16, false}, EntryFormat::kV2), Unrepresentable);
  CHECK_THROWS_AS(encode_entry({0, 0, 17, false}, EntryFormat::kV2), Unrepresentable);
  CHECK_THROWS_AS(encode_entry({0, 0, 4096, false}, EntryFormat::kV1), Unrepresentable);
  CHECK_THROWS_AS(encode_entry({0, 0, 4000, true}, EntryFormat::kV1), Unrepresentable);
  CHECK_THROWS_AS(encode_entry({1u << 24, 0, 16, false}, EntryFormat::kV2), Unrepresentable);
  // raw entries carry exactly one block
  L2PEntry raw{3, 8192, 4096, true};
  CHECK(decode_entry(encode_entry(raw, EntryFormat::kV1), EntryFormat::kV1) == raw);
  L2PEntry raw2{3, 8192, 4096, true};
  CHECK(decode_entry(encode_entry(raw2, EntryFormat::kV2), EntryFormat::kV2) == raw2);
}

TEST_CASE("entry encoding: exhaustive 12-bit roundtrip for V1") {
  std::uint64_t mismatches = 0;
  for (std::uint32_t offset = 0; offset < 4096; offset++) {
    for (std::uint32_t length = 0; length < 4096; length++) {
      L2PEntry e{7, 3 * 4096 + offset, length, false};
      bytes encoded = encode_entry(e, EntryFormat::kV1);
      if (!(decode_entry(encoded, EntryFormat::kV1) == e)) mismatches++;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("write_block stores constant data tiny and random data raw") {
  Device dev(small_config());
  dev.write_block(0, constant_block(0xAB));
  auto s1 = dev.stats();
  // deflate level 5 of a constant block measures 28 bytes; stored rounded to 32
  CHECK(s1.physical_live <= 64);
  CHECK(s1.logical_used == 4096);

  dev.write_block(1, random_block(99));
  auto s2 = dev.stats();
  CHECK(s2.physical_live - s1.physical_live == 4096);  // raw_flag path
  CHECK(dev.read_block(1) == random_block(99));
}

TEST_CASE("rewrite accounts the prior version as garbage") {
  Device dev(small_config());
  dev.write_block(5, random_block(1));
  auto s1 = dev.stats();
  dev.write_block(5, random_block(2));
  auto s2 = dev.stats();
  CHECK(s2.logical_used == s1.logical_used);
  CHECK(s2.physical_live == s1.physical_live);  // same stored size, old is garbage
  CHECK(dev.read_block(5) == random_block(2));
}

TEST_CASE("read of unmapped or trimmed lba fails") {
  Device dev(small_config());
  CHECK_THROWS_AS(dev.read_block(3), Unmapped);
  dev.write_block(3, constant_block(1));
  dev.trim(3);
  CHECK_THROWS_AS(dev.read_block(3), Unmapped);
}

TEST_CASE("trim of unmapped range leaves stats unchanged") {
  Device dev(small_config());
  dev.write_block(0, constant_block(1));
  auto before = dev.stats();
  dev.trim(100, 50);
  auto after = dev.stats();
  CHECK(after.logical_used == before.logical_used);
  CHECK(after.physical_live == before.physical_live);
  CHECK(after.trims == before.trims);
}

TEST_CASE("write trim gc cycle reclaims everything") {
  Device dev(small_config());
  for (std::uint64_t i = 0; i < 100; i++) dev.write_block(i, random_block(i));
  dev.trim(0, 100);
  CHECK(dev.stats().physical_live == 0);
  dev.run_gc();
  CHECK(dev.stats().logical_used == 0);
  // active segment may retain a footprint; everything sealed is gone
  CHECK(dev.stats().physical_used <= dev.config().gc_segment_size);
}

TEST_CASE("gc with zero garbage reclaims zero") {
  Device dev(small_config());
  for (std::uint64_t i = 0; i < 10; i++) dev.write_block(i, random_block(i));
  CHECK(dev.run_gc() == 0);
}

TEST_CASE("fully garbage segment reclaims exactly one segment") {
  DeviceConfig cfg = small_config();
  Device dev(cfg);
  // fill one segment with raw blocks (64 x 4096 = 262144), then overwrite all
  for (std::uint64_t i = 0; i < 64; i++) dev.write_block(i, random_block(i));
  for (std::uint64_t i = 0; i < 64; i++) dev.write_block(i, random_block(1000 + i));
  std::uint64_t reclaimed = dev.run_gc();
  CHECK(reclaimed == cfg.gc_segment_size);
}

TEST_CASE("reads survive gc relocation") {
  DeviceConfig cfg = small_config();
  cfg.physical_capacity = 4ull << 20;
  Device dev(cfg);
  std::map<std::uint64_t, bytes> shadow;
  Rng rng(7);
  for (int round = 0; round < 40; round++) {
    for (std::uint64_t i = 0; i < 48; i++) {
      std::uint64_t lba = rng.below(96);
      bytes data = mixed_block(rng.next(), 512 + rng.below(2048));
      dev.write_block(lba, data);
      shadow[lba] = data;
    }
    dev.run_gc();
  }
  for (const auto& [lba, data] : shadow) CHECK(dev.read_block(lba) == data);
}

TEST_CASE("shadow model equivalence over a mixed trace") {
  for (EntryFormat format : {EntryFormat::kV1, EntryFormat::kV2}) {
    CAPTURE(static_cast<int>(format));
    DeviceConfig cfg = small_config(format);
    Device dev(cfg);
    oracle::ShadowDevice shadow(cfg);
    Rng rng(42);
    for (int op = 0; op < 4000; op++) {
      std::uint64_t roll = rng.below(100);
      if (roll < 70) {
        std::uint64_t lba = rng.below(400);
        bytes data;
        switch (rng.below(3)) {
          case 0: data = constant_block(static_cast<std::uint8_t>(rng.next())); break;
          case 1: data = random_block(rng.next()); break;
          default: data = mixed_block(rng.next(), rng.below(3500)); break;
        }
        dev.write_block(lba, data);
        shadow.write(lba, data);
      } else if (roll < 90) {
        std::uint64_t lba = rng.below(400);
        std::uint64_t n = 1 + rng.below(8);
        dev.trim(lba, n);
        shadow.trim(lba, n);
      } else {
        dev.run_gc();
      }
    }
    auto stats = dev.stats();
    CHECK(stats.logical_used == shadow.logical_used());
    CHECK(stats.physical_live == shadow.physical_live());
    CHECK(dev.recompute_physical_live() == stats.physical_live);
    dev.run_gc();
    CHECK(dev.stats().physical_live == shadow.physical_live());
    for (const auto& [lba, entry] : shadow.blocks())
      CHECK(dev.read_block(lba) == entry.first);
  }
}

TEST_CASE("thin provisioning: incompressible data hits physical limit early") {
  DeviceConfig cfg;
  cfg.logical_capacity = 10ull << 20;  // 2.5x over 4 MiB physical
  cfg.physical_capacity = 4ull << 20;
  Device dev(cfg);
  std::uint64_t written = 0;
  bool exhausted = false;
  for (std::uint64_t lba = 0; lba < cfg.logical_blocks(); lba++) {
    try {
      dev.write_block(lba, random_block(lba));
      written += 4096;
    } catch (const OutOfPhysicalSpace&) {
      exhausted = true;
      break;
    }
  }
  CHECK(exhausted);
  CHECK(written >= cfg.physical_capacity - 2 * cfg.gc_segment_size);
  CHECK(written <= cfg.physical_capacity);
  CHECK(dev.stats().logical_used < cfg.logical_capacity);
}

TEST_CASE("compression off never beats compression on") {
  DeviceConfig on = small_config();
  DeviceConfig off = small_config();
  off.deflate_level = 0;  // deflate level 0 stores everything raw
  Device dev_on(on), dev_off(off);
  Rng rng(11);
  for (int i = 0; i < 200; i++) {
    std::uint64_t lba = rng.below(128);
    bytes data = mixed_block(rng.next(), rng.below(4096));
    dev_on.write_block(lba, data);
    dev_off.write_block(lba, data);
  }
  CHECK(dev_on.stats().physical_live <= dev_off.stats().physical_live);
}

TEST_CASE("device image roundtrip preserves contents and stats") {
  namespace fs = std::filesystem;
  DeviceConfig cfg = small_config(EntryFormat::kV1);
  Device dev(cfg);
  Rng rng(5);
  for (std::uint64_t i = 0; i < 120; i++)
    dev.write_block(rng.below(200), mixed_block(rng.next(), rng.below(4000)));
  dev.trim(10, 5);
  auto before = dev.stats();

  fs::path img = fs::temp_directory_path() / "csd_test_image.dev";
  dev.save_image(img);
  Device loaded(small_config());
  loaded.restore_image(img);
  auto after = loaded.stats();
  CHECK(after.logical_used == before.logical_used);
  CHECK(after.physical_live == before.physical_live);
  CHECK(loaded.config().entry_format == EntryFormat::kV1);
  for (std::uint64_t lba = 0; lba < 200; lba++) {
    if (!dev.is_mapped(lba)) continue;
    CHECK(loaded.read_block(lba) == dev.read_block(lba));
  }
  fs::remove(img);
}

TEST_CASE("image corruption is detected") {
  namespace fs = std::filesystem;
  Device dev(small_config());
  dev.write_block(0, random_block(3));
  fs::path img = fs::temp_directory_path() / "csd_test_corrupt.dev";
  dev.save_image(img);

  // flip one byte inside the segment payload region
  std::fstream f(img, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(0, std::ios::end);
  auto size = static_cast<std::streamoff>(f.tellg());
  f.seekp(size / 2);
  char b;
  f.seekg(size / 2);
  f.read(&b, 1);
  b = static_cast<char>(b ^ 0xFF);
  f.seekp(size / 2);
  f.write(&b, 1);
  f.close();

  Device target(small_config());
  CHECK_THROWS_AS(target.restore_image(img), CorruptImage);
  fs::remove(img);
}

TEST_CASE("fresh device stats are all zero") {
  Device dev(small_config());
  auto s = dev.stats();
  CHECK(s.logical_used == 0);
  CHECK(s.physical_used == 0);
  CHECK(s.physical_live == 0);
  CHECK(s.reads == 0);
  CHECK(s.writes == 0);
  CHECK(s.trims == 0);
}

TEST_CASE("logical_used counts distinct written blocks") {
  Device dev(small_config());
  for (std::uint64_t i = 0; i < 17; i++) dev.write_block(i * 3, constant_block(1));
  CHECK(dev.stats().logical_used == 17 * 4096);
}

TEST_CASE("write beyond logical capacity is rejected") {
  Device dev(small_config());
  CHECK_THROWS_AS(dev.write_block(dev.config().logical_blocks(), constant_block(0)),
                  InvalidArgument);
}

TEST_CASE("V2 rejects a non-raw length that rounds to a full block") {
  CHECK_THROWS_AS(encode_entry({0, 0, 4096, false}, EntryFormat::kV2), Unrepresentable);
  // 4080 is the largest representable compressed length under V2
  L2PEntry edge{2, 64, 4080, false};
  CHECK(decode_entry(encode_entry(edge, EntryFormat::kV2), EntryFormat::kV2) == edge);
}

TEST_CASE("barely-compressible blocks fall back to raw under V2 rounding") {
  // search for a block whose deflate-5 output lands in (4080, 4096): rounding
  // to 16 would otherwise produce an unrepresentable 4096-byte entry
  Device dev(small_config(EntryFormat::kV2));
  bool found = false;
  for (std::uint64_t seed = 0; seed < 4000 && !found; seed++) {
    for (std::size_t random_bytes : {4025, 4030, 4035}) {
      bytes block = mixed_block(seed * 31 + random_bytes, random_bytes);
      std::size_t compressed =
          codec::deflate_compress(block, dev.config().deflate_level).size();
      if (compressed > 4080 && compressed < 4096) {
        auto before = dev.stats().physical_live;
        dev.write_block(7, block);
        CHECK(dev.read_block(7) == block);
        CHECK(dev.stats().physical_live - before == 4096);  // stored raw
        found = true;
        break;
      }
    }
  }
  CHECK_MESSAGE(found, "no block landed in the rounding window; widen the search");
}
