#include "workload/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "codec/page_codec.hpp"
#include "common/errors.hpp"
#include "common/rng.hpp"

namespace pagestore::workload {

using codec::kPageSize;

void CompressibilitySpec::validate() const {
  if (target_ratio < 1.0) throw ConfigError("target_ratio must be >= 1.0");
  if (generator == Generator::kRandom && target_ratio != 1.0)
    throw ConfigError("random data is incompressible; target_ratio must be 1.0");
}

namespace {

void append_str(bytes& page, const char* s) {
  page.insert(page.end(), s, s + std::strlen(s));
}

bytes random_page(Rng& rng) {
  bytes page(kPageSize);
  for (std::size_t i = 0; i < kPageSize; i += 8) {
    std::uint64_t v = rng.next();
    std::memcpy(page.data() + i, &v, 8);
  }
  return page;
}

// Leading random bytes, zero tail, per 4 KB block. Deflate keeps roughly the
// random prefix plus ~70 bytes of framing; the fill is biased to overshoot the
// target slightly so target-ratio data stays inside its physical budget.
bytes repeat_fill_page(Rng& rng, double target_ratio) {
  bytes page(kPageSize, 0);
  std::size_t random_bytes = static_cast<std::size_t>(
      4096.0 / (1.10 * target_ratio));
  random_bytes = random_bytes > 74 ? random_bytes - 74 : 0;
  for (std::size_t block = 0; block < kPageSize; block += 4096) {
    for (std::size_t i = 0; i < random_bytes; i++)
      page[block + i] = static_cast<std::uint8_t>(rng.next());
  }
  return page;
}

struct Vocabulary {
  std::vector<std::string> words;

  static const Vocabulary& instance() {
    static Vocabulary v = build();
    return v;
  }

  static Vocabulary build() {
    Vocabulary v;
    Rng rng(0x60CAB);
    const char* letters = "etaoinshrdlucmfwypvbgkjqxz";
    for (int i = 0; i < 2048; i++) {
      std::size_t len = 3 + rng.below(8);
      std::string w;
      for (std::size_t j = 0; j < len; j++) {
        double u = rng.uniform();
        w += letters[static_cast<std::size_t>(u * u * 26)];
      }
      v.words.push_back(std::move(w));
    }
    return v;
  }
};

bytes prose_page(Rng& rng, std::size_t vocab_size) {
  const auto& vocab = Vocabulary::instance().words;
  bytes page;
  page.reserve(kPageSize + 16);
  while (page.size() < kPageSize) {
    double u = rng.uniform();
    append_str(page, vocab[static_cast<std::size_t>(u * u * vocab_size)].c_str());
    append_str(page, rng.below(13) == 0 ? ".\n" : " ");
  }
  page.resize(kPageSize);
  return page;
}

bytes record_page(Rng& rng) {
  const auto& vocab = Vocabulary::instance().words;
  bytes page;
  page.reserve(kPageSize + 160);
  std::uint64_t id = rng.below(1000000);
  char buf[192];
  while (page.size() < kPageSize) {
    std::snprintf(buf, sizeof buf,
                  "{\"id\":%llu,\"ts\":\"2025-%02llu-%02lluT%02llu:%02llu:00\","
                  "\"user\":\"%s\",\"amount\":%llu.%llu0,\"status\":\"%s\","
                  "\"region\":\"zone-%llu\"}\n",
                  static_cast<unsigned long long>(id++),
                  static_cast<unsigned long long>(1 + rng.below(12)),
                  static_cast<unsigned long long>(1 + rng.below(28)),
                  static_cast<unsigned long long>(rng.below(24)),
                  static_cast<unsigned long long>(rng.below(60)),
                  vocab[rng.below(48)].c_str(),
                  static_cast<unsigned long long>(rng.below(100)),
                  static_cast<unsigned long long>(rng.below(10)),
                  rng.below(3) == 0 ? "ok" : "pending",
                  static_cast<unsigned long long>(rng.below(4)));
    append_str(page, buf);
  }
  page.resize(kPageSize);
  return page;
}

bytes sensor_page(Rng& rng) {
  bytes page;
  page.reserve(kPageSize + 96);
  std::uint64_t ts = 1726000000ull + rng.below(10000);
  char buf[96];
  while (page.size() < kPageSize) {
    std::snprintf(buf, sizeof buf, "sensor-%02llu,%llu,%2llu.%03llu,%llu.%02llu,ok\n",
                  static_cast<unsigned long long>(rng.below(16)),
                  static_cast<unsigned long long>(ts),
                  static_cast<unsigned long long>(18 + rng.below(12)),
                  static_cast<unsigned long long>(rng.below(1000)),
                  static_cast<unsigned long long>(rng.below(100)),
                  static_cast<unsigned long long>(rng.below(100)));
    ts += rng.below(30);
    append_str(page, buf);
  }
  page.resize(kPageSize);
  return page;
}

bytes binary_rows_page(Rng& rng) {
  bytes page;
  page.reserve(kPageSize + 56);
  std::uint32_t id = static_cast<std::uint32_t>(rng.below(100000));
  while (page.size() < kPageSize) {
    std::uint8_t rec[56] = {};
    std::uint32_t v = id++;
    std::memcpy(rec, &v, 4);
    std::uint64_t ts = 1726000000000ull + rng.below(86400000);
    std::memcpy(rec + 4, &ts, 8);
    std::uint16_t a = static_cast<std::uint16_t>(rng.below(500));
    std::memcpy(rec + 12, &a, 2);
    std::uint16_t b = static_cast<std::uint16_t>(rng.below(90));
    std::memcpy(rec + 14, &b, 2);
    std::uint32_t c = static_cast<std::uint32_t>(rng.below(30000));
    std::memcpy(rec + 16, &c, 4);
    rec[20] = static_cast<std::uint8_t>('A' + rng.below(5));
    for (int k = 22; k < 34; k += 4) rec[k] = static_cast<std::uint8_t>(rng.below(16));
    page.insert(page.end(), rec, rec + sizeof rec);  // bytes 34..55 stay zero
  }
  page.resize(kPageSize);
  return page;
}

bytes log_lines_page(Rng& rng) {
  static const char* levels[] = {"INFO", "WARN", "DEBUG"};
  static const char* comps[] = {"storage.engine", "repl.leader", "io.sched", "cache.mgr"};
  bytes page;
  page.reserve(kPageSize + 160);
  char buf[160];
  while (page.size() < kPageSize) {
    std::snprintf(buf, sizeof buf,
                  "2025-09-%02llu %02llu:%02llu:%02llu.%03llu %s %s: trace=%08llx "
                  "request %llu completed in %llu us, queue depth %llu\n",
                  static_cast<unsigned long long>(1 + rng.below(28)),
                  static_cast<unsigned long long>(rng.below(24)),
                  static_cast<unsigned long long>(rng.below(60)),
                  static_cast<unsigned long long>(rng.below(60)),
                  static_cast<unsigned long long>(rng.below(1000)),
                  levels[rng.below(3)], comps[rng.below(4)],
                  static_cast<unsigned long long>(rng.next() & 0xFFFFFFFF),
                  static_cast<unsigned long long>(rng.below(1000000000)),
                  static_cast<unsigned long long>(40 + rng.below(300)),
                  static_cast<unsigned long long>(rng.below(32)));
    append_str(page, buf);
  }
  page.resize(kPageSize);
  return page;
}

// Class weights: prose 3, records 2, sensor 2, binary rows 4, logs 1, random 1.
constexpr std::uint8_t kMixCycle[] = {0, 3, 2, 3, 0, 1, 3, 2, 0, 1, 3, 4, 5};

bytes text_mix_page(Rng& rng, std::uint64_t page_index) {
  switch (kMixCycle[page_index % (sizeof kMixCycle)]) {
    case 0: return prose_page(rng, 512);
    case 1: return record_page(rng);
    case 2: return sensor_page(rng);
    case 3: return binary_rows_page(rng);
    case 4: return log_lines_page(rng);
    default: return random_page(rng);
  }
}

}  // namespace

bytes generate_page(const CompressibilitySpec& spec, std::uint64_t page_index) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, page_index + 1));
  switch (spec.generator) {
    case Generator::kRandom: return random_page(rng);
    case Generator::kRepeatFill: return repeat_fill_page(rng, spec.target_ratio);
    case Generator::kTextMix: return text_mix_page(rng, page_index);
  }
  throw ConfigError("unknown generator");
}

std::vector<bytes> bundled_corpus(std::size_t page_count, std::uint64_t seed) {
  CompressibilitySpec spec{1.0, Generator::kTextMix, seed};
  std::vector<bytes> pages;
  pages.reserve(page_count);
  for (std::size_t i = 0; i < page_count; i++) pages.push_back(generate_page(spec, i));
  return pages;
}

void write_corpus(const std::filesystem::path& dir, const std::vector<bytes>& pages,
                  std::size_t pages_per_file) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::size_t file_no = 0;
  for (std::size_t begin = 0; begin < pages.size(); begin += pages_per_file, file_no++) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.pages", file_no);
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write corpus file");
    std::size_t end = std::min(pages.size(), begin + pages_per_file);
    for (std::size_t i = begin; i < end; i++)
      out.write(reinterpret_cast<const char*>(pages[i].data()),
                static_cast<std::streamsize>(pages[i].size()));
  }
}

std::vector<bytes> read_corpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw MissingCorpus("corpus directory missing: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".pages") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw MissingCorpus("no .pages files in " + dir.string());

  std::vector<bytes> pages;
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    bytes blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (blob.size() % kPageSize != 0)
      throw MissingCorpus("corpus file is not a whole number of pages: " + file.string());
    for (std::size_t off = 0; off < blob.size(); off += kPageSize)
      pages.emplace_back(blob.begin() + static_cast<std::ptrdiff_t>(off),
                         blob.begin() + static_cast<std::ptrdiff_t>(off + kPageSize));
  }
  return pages;
}

}  // namespace pagestore::workload
