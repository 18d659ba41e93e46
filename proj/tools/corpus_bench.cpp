// Benchmark: serial reference kernel vs the OpenMP corpus analysis kernel.
#include <chrono>
#include <cstdio>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "workload/generator.hpp"
#include "workload/report.hpp"

using namespace pagestore;
using Clock = std::chrono::steady_clock;

static double run_ms(const std::vector<bytes>& pages, workload::Pipeline pipeline,
                     bool parallel) {
  auto t0 = Clock::now();
  auto report = workload::analyze_corpus(pages, pipeline, {}, parallel);
  auto t1 = Clock::now();
  (void)report;
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

int main(int argc, char** argv) {
  std::size_t page_count = argc > 1 ? std::stoul(argv[1]) : 768;
  auto pages = workload::bundled_corpus(page_count);

#ifdef _OPENMP
  std::printf("corpus: %zu pages (%.1f MiB), %d omp threads\n", pages.size(),
              static_cast<double>(pages.size() * codec::kPageSize) / (1 << 20),
              omp_get_max_threads());
#else
  std::printf("corpus: %zu pages (%.1f MiB), openmp disabled\n", pages.size(),
              static_cast<double>(pages.size() * codec::kPageSize) / (1 << 20));
#endif

  std::printf("%-9s %12s %12s %8s\n", "pipeline", "serial(ms)", "parallel(ms)", "speedup");
  for (auto pipeline : {workload::Pipeline::kLz4Only, workload::Pipeline::kZstdOnly,
                        workload::Pipeline::kAdaptive, workload::Pipeline::kHeavy}) {
    // consistency first, then timing
    auto serial_report = workload::analyze_corpus_serial(pages, pipeline);
    auto parallel_report = workload::analyze_corpus_parallel(pages, pipeline);
    if (serial_report.dual_physical_bytes != parallel_report.dual_physical_bytes ||
        serial_report.soft_payload_bytes != parallel_report.soft_payload_bytes) {
      std::fprintf(stderr, "kernel mismatch on %s\n", workload::pipeline_name(pipeline));
      return 1;
    }
    double serial_ms = run_ms(pages, pipeline, false);
    double parallel_ms = run_ms(pages, pipeline, true);
    std::printf("%-9s %12.1f %12.1f %7.2fx\n", workload::pipeline_name(pipeline), serial_ms,
                parallel_ms, serial_ms / parallel_ms);
  }
  return 0;
}
