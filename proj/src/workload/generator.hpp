#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "common/serde.hpp"

namespace pagestore::workload {

enum class Generator : std::uint8_t { kRepeatFill = 0, kTextMix = 1, kRandom = 2 };

struct CompressibilitySpec {
  double target_ratio = 1.0;  // deflate-level-5 target; REPEAT_FILL only
  Generator generator = Generator::kRandom;
  std::uint64_t seed = 0;

  void validate() const;
};

// Deterministic under (spec, page_index).
bytes generate_page(const CompressibilitySpec& spec, std::uint64_t page_index);

// The bundled evaluation corpus: a fixed mixed-class cycle (prose, json-ish
// records, sensor csv, binary rows, server logs, incompressible blobs).
std::vector<bytes> bundled_corpus(std::size_t page_count, std::uint64_t seed = 42);

// Corpus files hold back-to-back 16 KB records with a .pages suffix.
void write_corpus(const std::filesystem::path& dir, const std::vector<bytes>& pages,
                  std::size_t pages_per_file = 256);
std::vector<bytes> read_corpus(const std::filesystem::path& dir);  // MissingCorpus

}  // namespace pagestore::workload
