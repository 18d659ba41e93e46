#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "common/errors.hpp"
#include "sched/scheduler.hpp"
#include "store/chunk_store.hpp"
#include "workload/generator.hpp"
#include "workload/report.hpp"
#include "workload/trace.hpp"

namespace fs = std::filesystem;
using namespace pagestore;

namespace {

constexpr const char* kConfigName = "engine.conf";

store::EngineConfig parse_engine_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config: " + file.string());
  store::EngineConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::size_t eq = line.find('=');
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    auto strip = [](std::string s) {
      std::size_t b = s.find_first_not_of(" \t");
      std::size_t e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = strip(line.substr(0, eq));
    std::string value = strip(line.substr(eq + 1));

    try {
      if (key == "logical_capacity") cfg.device.logical_capacity = std::stoull(value);
      else if (key == "physical_capacity") cfg.device.physical_capacity = std::stoull(value);
      else if (key == "entry_format") {
        if (value == "v1") cfg.device.entry_format = csd::EntryFormat::kV1;
        else if (value == "v2") cfg.device.entry_format = csd::EntryFormat::kV2;
        else throw ConfigError("entry_format must be v1 or v2");
      } else if (key == "deflate_level") cfg.device.deflate_level = std::stoi(value);
      else if (key == "gc_segment_size") cfg.device.gc_segment_size = std::stoull(value);
      else if (key == "gc_trigger_garbage_fraction")
        cfg.device.gc_trigger_garbage_fraction = std::stod(value);
      else if (key == "replica_count") cfg.replica_count = std::stoull(value);
      else if (key == "reader_count") cfg.reader_count = std::stoull(value);
      else if (key == "fast_log_capacity") cfg.fast_log_capacity = std::stoull(value);
      else if (key == "log_cache_budget") cfg.log_cache_budget = std::stoull(value);
      else if (key == "heavy_unit_size") cfg.heavy.unit_size = std::stoull(value);
      else if (key == "zstd_heavy_level") cfg.heavy.zstd_level = std::stoi(value);
      else if (key == "per_page_log") cfg.per_page_log = value == "true";
      else if (key == "software_compression") cfg.software_compression = value == "true";
      else if (key == "algorithm") {
        if (value == "adaptive") cfg.forced_algorithm.reset();
        else if (value == "lz4") cfg.forced_algorithm = codec::Algo::kLz4;
        else if (value == "zstd") cfg.forced_algorithm = codec::Algo::kZstd;
        else throw ConfigError("algorithm must be adaptive, lz4 or zstd");
      } else if (key == "benefit_threshold")
        cfg.selector.benefit_per_overhead_threshold = std::stod(value);
      else if (key == "cpu_ceiling") cfg.selector.cpu_utilization_ceiling = std::stod(value);
      else if (key == "update_trigger")
        cfg.selector.update_fraction_trigger = std::stod(value);
      else if (key == "zstd_hot_level") cfg.selector.zstd_hot_level = std::stoi(value);
      else
        throw ConfigError("unknown config key '" + key + "' at line " +
                          std::to_string(lineno));
    } catch (const std::invalid_argument&) {
      throw ConfigError("bad value for '" + key + "' at line " + std::to_string(lineno));
    } catch (const std::out_of_range&) {
      throw ConfigError("bad value for '" + key + "' at line " + std::to_string(lineno));
    }
  }
  cfg.validate();
  return cfg;
}

void write_engine_config(const fs::path& file, const store::EngineConfig& cfg) {
  std::ofstream out(file, std::ios::trunc);
  out << "logical_capacity = " << cfg.device.logical_capacity << "\n"
      << "physical_capacity = " << cfg.device.physical_capacity << "\n"
      << "entry_format = "
      << (cfg.device.entry_format == csd::EntryFormat::kV1 ? "v1" : "v2") << "\n"
      << "deflate_level = " << cfg.device.deflate_level << "\n"
      << "gc_segment_size = " << cfg.device.gc_segment_size << "\n"
      << "gc_trigger_garbage_fraction = " << cfg.device.gc_trigger_garbage_fraction << "\n"
      << "replica_count = " << cfg.replica_count << "\n"
      << "reader_count = " << cfg.reader_count << "\n"
      << "fast_log_capacity = " << cfg.fast_log_capacity << "\n"
      << "log_cache_budget = " << cfg.log_cache_budget << "\n"
      << "heavy_unit_size = " << cfg.heavy.unit_size << "\n"
      << "zstd_heavy_level = " << cfg.heavy.zstd_level << "\n"
      << "per_page_log = " << (cfg.per_page_log ? "true" : "false") << "\n"
      << "software_compression = " << (cfg.software_compression ? "true" : "false") << "\n"
      << "algorithm = "
      << (!cfg.forced_algorithm ? "adaptive"
                                : (*cfg.forced_algorithm == codec::Algo::kLz4 ? "lz4" : "zstd"))
      << "\n"
      << "benefit_threshold = " << cfg.selector.benefit_per_overhead_threshold << "\n"
      << "cpu_ceiling = " << cfg.selector.cpu_utilization_ceiling << "\n"
      << "update_trigger = " << cfg.selector.update_fraction_trigger << "\n"
      << "zstd_hot_level = " << cfg.selector.zstd_hot_level << "\n";
}

std::unique_ptr<store::ChunkStore> open_engine(const fs::path& dir) {
  if (!fs::exists(dir / kConfigName))
    throw ConfigError("not an engine directory (missing engine.conf): " + dir.string());
  store::EngineConfig cfg = parse_engine_config(dir / kConfigName);
  return store::ChunkStore::load(dir, cfg);
}

void print_stats(store::ChunkStore& engine) {
  csd::DeviceStats s = engine.device().stats();
  double ratio = s.physical_live == 0
                     ? 0.0
                     : static_cast<double>(s.logical_used) / static_cast<double>(s.physical_live);
  std::cout << "logical used        " << s.logical_used << "\n"
            << "physical used       " << s.physical_used << "\n"
            << "physical live       " << s.physical_live << "\n"
            << "gc bytes moved      " << s.gc_bytes_moved << "\n"
            << "device reads        " << s.reads << "\n"
            << "device writes       " << s.writes << "\n"
            << "trims               " << s.trims << "\n"
            << "compression ratio   " << ratio << "\n"
            << "durable lsn         " << engine.lsn_state().durable_lsn << "\n"
            << "apply lsn           " << engine.lsn_state().apply_lsn << "\n";
  std::cout << "#DATA logical=" << s.logical_used << " physical_used=" << s.physical_used
            << " physical_live=" << s.physical_live << " ratio=" << ratio
            << " durable_lsn=" << engine.lsn_state().durable_lsn << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-layer compressed page store"};
  app.require_subcommand(1);

  std::string dir, config_file, trace_file, corpus_dir, population_file, out_dir;
  std::string format = "v2", generator = "text", pipeline = "adaptive", algorithm;
  std::uint64_t seed = 0;
  std::size_t pages = 1024, nodes = 100, chunks_per_node = 40, steps = 4;
  std::uint64_t archive_lo = 0, archive_hi = 0;
  std::size_t readers = 1;
  double target_ratio = 2.0, c_low = 0, c_high = 0, ratio_median = 3.5, ratio_sigma = 0.25;
  bool no_software = false, serial = false, timed_probe = false, sweep = false;
  bool use_lz4 = false, use_zstd = false, use_adaptive = false;

  auto* init = app.add_subcommand("init", "create an engine directory");
  init->add_option("--dir", dir)->required();
  init->add_option("--config", config_file, "base config file (defaults apply otherwise)");
  init->add_option("--format", format)->check(CLI::IsMember({"v1", "v2"}));
  init->add_flag("--no-software-compression", no_software);
  init->add_option("--algorithm", algorithm)->check(CLI::IsMember({"adaptive", "lz4", "zstd"}));
  init->add_flag("--lz4", use_lz4, "pin the software layer to lz4");
  init->add_flag("--zstd", use_zstd, "pin the software layer to zstd");
  init->add_flag("--adaptive", use_adaptive, "adaptive lz4/zstd selection (default)");

  auto* run = app.add_subcommand("run", "execute a trace file against an engine");
  run->add_option("--dir", dir)->required();
  run->add_option("--trace", trace_file)->required();
  run->add_option("--seed", seed);
  run->add_option("--readers", readers, "execute read runs on this many threads");
  run->add_flag("--timed-probe", timed_probe,
                "measure real decompression latency instead of the model");

  auto* bench = app.add_subcommand("bench", "write/read a generated workload");
  bench->add_option("--dir", dir)->required();
  bench->add_option("--pages", pages);
  bench->add_option("--generator", generator)->check(CLI::IsMember({"text", "repeat", "random"}));
  bench->add_option("--target-ratio", target_ratio);
  bench->add_option("--seed", seed);
  bench->add_flag("--timed-probe", timed_probe,
                  "measure real decompression latency instead of the model");

  auto* stats = app.add_subcommand("stats", "print device and engine statistics");
  stats->add_option("--dir", dir)->required();

  auto* archive = app.add_subcommand("archive", "heavy-compress a page range");
  archive->add_option("--dir", dir)->required();
  archive->add_option("--from", archive_lo)->required();
  archive->add_option("--to", archive_hi)->required();

  auto* sched = app.add_subcommand("sched", "run the placement scheduler simulation");
  sched->add_option("--population", population_file, "population file (synthesized otherwise)");
  sched->add_option("--nodes", nodes);
  sched->add_option("--chunks-per-node", chunks_per_node);
  sched->add_option("--ratio-median", ratio_median);
  sched->add_option("--ratio-sigma", ratio_sigma);
  sched->add_option("--c-low", c_low)->required();
  sched->add_option("--c-high", c_high)->required();
  sched->add_option("--steps", steps);
  sched->add_option("--seed", seed);
  sched->add_flag("--sweep", sweep, "sweep candidate bands around [c-low, c-high]");

  auto* report = app.add_subcommand("report", "per-pipeline compression accounting of a corpus");
  report->add_option("--corpus", corpus_dir)->required();
  report->add_option("--pipeline", pipeline)
      ->check(CLI::IsMember({"lz4", "zstd", "adaptive", "heavy", "all"}));
  report->add_flag("--serial", serial, "use the serial reference kernel");

  auto* mkcorpus = app.add_subcommand("make-corpus", "emit the bundled corpus to a directory");
  mkcorpus->add_option("--out", out_dir)->required();
  mkcorpus->add_option("--pages", pages);
  mkcorpus->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*init) {
      fs::path d(dir);
      if (fs::exists(d / kConfigName)) throw AlreadyInitialized("engine already present in " + dir);
      fs::create_directories(d);
      store::EngineConfig cfg =
          config_file.empty() ? store::EngineConfig{} : parse_engine_config(config_file);
      if (init->count("--format"))
        cfg.device.entry_format = format == "v1" ? csd::EntryFormat::kV1 : csd::EntryFormat::kV2;
      if (no_software) cfg.software_compression = false;
      if (!algorithm.empty()) {
        if (algorithm == "adaptive") cfg.forced_algorithm.reset();
        else cfg.forced_algorithm = algorithm == "lz4" ? codec::Algo::kLz4 : codec::Algo::kZstd;
      }
      if (use_lz4 + use_zstd + use_adaptive > 1)
        throw ConfigError("pick one of --lz4, --zstd, --adaptive");
      if (use_lz4) cfg.forced_algorithm = codec::Algo::kLz4;
      if (use_zstd) cfg.forced_algorithm = codec::Algo::kZstd;
      if (use_adaptive) cfg.forced_algorithm.reset();
      cfg.validate();
      store::ChunkStore engine(cfg);
      engine.checkpoint();
      engine.save(d);
      write_engine_config(d / kConfigName, cfg);
      std::cout << "initialized " << dir << "\n";
    } else if (*run) {
      auto engine = open_engine(dir);
      if (timed_probe) engine->set_latency_probe(codec::timing_probe());
      std::ifstream in(trace_file);
      if (!in) throw ConfigError("cannot open trace: " + trace_file);
      auto ops = workload::parse_trace(in);
      workload::TraceResult result = workload::run_trace(ops, *engine, seed, readers);
      workload::write_metrics(std::cout, result);
      engine->checkpoint();
      engine->save(dir);
    } else if (*bench) {
      auto engine = open_engine(dir);
      if (timed_probe) engine->set_latency_probe(codec::timing_probe());
      workload::CompressibilitySpec spec;
      spec.seed = seed;
      if (generator == "text") spec.generator = workload::Generator::kTextMix;
      else if (generator == "repeat") {
        spec.generator = workload::Generator::kRepeatFill;
        spec.target_ratio = target_ratio;
      } else spec.generator = workload::Generator::kRandom;

      for (std::size_t i = 0; i < pages; i++)
        engine->write_page(i, workload::generate_page(spec, i), store::WriteMode::kNormal);
      for (std::size_t i = 0; i < pages; i++) {
        bytes got = engine->read_page(i, engine->lsn_state().durable_lsn);
        if (got != workload::generate_page(spec, i)) throw CorruptPayload("readback mismatch");
      }
      print_stats(*engine);
      engine->checkpoint();
      engine->save(dir);
    } else if (*stats) {
      auto engine = open_engine(dir);
      print_stats(*engine);
    } else if (*archive) {
      auto engine = open_engine(dir);
      std::vector<std::uint64_t> ids;
      for (std::uint64_t p = archive_lo; p <= archive_hi; p++) ids.push_back(p);
      engine->archive_range(ids);
      print_stats(*engine);
      engine->checkpoint();
      engine->save(dir);
    } else if (*sched) {
      sched::SchedulerConfig cfg;
      cfg.c_low = c_low;
      cfg.c_high = c_high;
      if (sweep) {
        sched::PopulationSpec spec;
        spec.node_count = nodes;
        spec.chunks_per_node = chunks_per_node;
        spec.ratio_median = ratio_median;
        spec.ratio_sigma = ratio_sigma;
        spec.seed = seed ? seed : 1;
        std::vector<std::pair<double, double>> candidates;
        for (double widen : {0.0, 0.05, 0.10, 0.20, 0.35})
          candidates.push_back({c_low * (1.0 - widen), c_high * (1.0 + widen)});
        std::cout << "# c_low c_high moves in_range wasted_logical wasted_physical\n";
        for (const auto& o : sched::sweep_bands(spec, candidates, steps)) {
          std::cout << o.c_low << ' ' << o.c_high << ' ' << o.moves << ' '
                    << o.in_range_fraction << ' ' << o.wasted_logical_fraction << ' '
                    << o.wasted_physical_fraction << '\n';
          std::cout << "#DATA band=" << o.c_low << ':' << o.c_high << " moves=" << o.moves
                    << " in_range=" << o.in_range_fraction << '\n';
        }
        return 0;
      }
      sched::SimulationResult result;
      if (!population_file.empty()) {
        std::ifstream in(population_file);
        if (!in) throw ConfigError("cannot open population: " + population_file);
        sched::Cluster cluster = sched::parse_population(in);
        result = sched::run_rounds(cluster, cfg, steps);
      } else {
        sched::PopulationSpec spec;
        spec.node_count = nodes;
        spec.chunks_per_node = chunks_per_node;
        spec.ratio_median = ratio_median;
        spec.ratio_sigma = ratio_sigma;
        spec.seed = seed ? seed : 1;
        result = sched::simulate(spec, cfg, steps);
      }
      sched::write_simulation(std::cout, result);
      if (!result.steps.empty()) {
        const auto& last = result.steps.back();
        std::cout << "in-range fraction " << last.in_range_fraction << "\n";
        std::cout << "#DATA in_range=" << last.in_range_fraction
                  << " moves=" << result.all_moves.size()
                  << " wasted_logical=" << last.wasted_logical_fraction
                  << " wasted_physical=" << last.wasted_physical_fraction << "\n";
      }
    } else if (*report) {
      auto corpus = workload::read_corpus(corpus_dir);
      std::vector<workload::PipelineReport> reports;
      std::vector<workload::Pipeline> kinds;
      if (pipeline == "all")
        kinds = {workload::Pipeline::kLz4Only, workload::Pipeline::kZstdOnly,
                 workload::Pipeline::kAdaptive, workload::Pipeline::kHeavy};
      else
        kinds = {workload::pipeline_from_name(pipeline)};
      for (auto kind : kinds)
        reports.push_back(workload::analyze_corpus(corpus, kind, {}, !serial));
      workload::write_report(std::cout, reports);
    } else if (*mkcorpus) {
      auto corpus = workload::bundled_corpus(pages, seed ? seed : 42);
      workload::write_corpus(out_dir, corpus);
      std::cout << "wrote " << corpus.size() << " pages to " << out_dir << "\n";
    }
  } catch (const StoreError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
