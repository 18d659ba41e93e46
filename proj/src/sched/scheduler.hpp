#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace pagestore::sched {

struct ChunkStats {
  std::uint64_t chunk_id = 0;
  std::uint64_t logical_bytes = 0;
  std::uint64_t physical_bytes = 0;

  double ratio() const {
    return static_cast<double>(logical_bytes) / static_cast<double>(physical_bytes);
  }
};

struct NodeState {
  std::uint64_t node_id = 0;
  std::uint64_t logical_capacity = 0;
  std::uint64_t physical_capacity = 0;
  std::vector<ChunkStats> chunks;

  std::uint64_t logical_used() const;
  std::uint64_t physical_used() const;
  double node_ratio() const;
  double logical_fill() const;   // logical_used / logical_capacity
  double physical_fill() const;  // physical_used / physical_capacity
};

struct Cluster {
  std::vector<NodeState> nodes;

  double avg_logical_fill() const;  // w_avg
  double avg_ratio() const;         // c_avg: total logical / total physical
  std::uint64_t total_logical() const;
  std::uint64_t total_physical() const;
};

struct SchedulerConfig {
  double c_low = 0.0;
  double c_high = 0.0;
  double delta = 0.05;             // half-width of the balanced band on w_avg
  double block_threshold = 0.75;   // nodes past this on either axis take no chunks
  double migrate_trigger = 0.10;   // logical balancing kicks in past w_avg * (1 + trigger)

  void validate(double c_avg) const;  // requires c_low < c_avg < c_high
};

enum class Zone : std::uint8_t { kA = 0, kB = 1, kC = 2, kD = 3 };

const char* zone_name(Zone z);

// On the (logical, physical) usage plane: A is high-physical/low-ratio,
// D low-physical/high-ratio, B/C straddle the cluster average in range.
Zone classify_zone(const NodeState& node, const SchedulerConfig& cfg, double c_avg);

struct Migration {
  std::uint64_t chunk_id;
  std::uint64_t src_node;
  std::uint64_t dst_node;
};

// Capacity-weighted distance of out-of-range nodes from [c_low, c_high];
// every planned move strictly decreases it, which bounds the plan length.
double violation_measure(const Cluster& cluster, const SchedulerConfig& cfg);

std::vector<Migration> plan_migrations(const Cluster& cluster, const SchedulerConfig& cfg);

struct ApplyStats {
  std::uint64_t moves = 0;
  std::uint64_t bytes_moved_logical = 0;
  std::uint64_t bytes_moved_physical = 0;
};

ApplyStats apply_plan(Cluster& cluster, const std::vector<Migration>& plan);

std::uint64_t allocate_chunk(Cluster& cluster, const ChunkStats& chunk,
                             const SchedulerConfig& cfg);

struct PopulationSpec {
  std::size_t node_count = 100;
  std::size_t chunks_per_node = 40;
  std::uint64_t node_logical_capacity = 64ull << 30;
  std::uint64_t node_physical_capacity = 24ull << 30;
  std::uint64_t chunk_logical_bytes = 1ull << 30;
  double ratio_median = 3.5;
  double ratio_sigma = 0.25;
  std::uint64_t seed = 1;
};

Cluster build_population(const PopulationSpec& spec);

struct StepReport {
  std::size_t step = 0;
  std::array<std::size_t, 4> zone_count{};
  double in_range_fraction = 0.0;
  double wasted_logical_fraction = 0.0;
  double wasted_physical_fraction = 0.0;
  std::uint64_t moves = 0;
  double violation = 0.0;
};

struct SimulationResult {
  std::vector<StepReport> steps;
  std::vector<Migration> all_moves;
};

// Projected stranded capacity when every node fills at its current ratio
// until one axis hits the block threshold.
double wasted_logical_fraction(const Cluster& cluster, const SchedulerConfig& cfg);
double wasted_physical_fraction(const Cluster& cluster, const SchedulerConfig& cfg);

SimulationResult simulate(const PopulationSpec& spec, const SchedulerConfig& cfg,
                          std::size_t steps);

// Plans and applies up to `steps` scheduling rounds against an existing
// cluster, recording the per-step report used by simulate().
SimulationResult run_rounds(Cluster& cluster, const SchedulerConfig& cfg, std::size_t steps);

// Offline [c_l, c_h] selection aid: simulates each candidate band and reports
// the move count against the in-range outcome. Tighter bands cost more moves.
struct BandOutcome {
  double c_low;
  double c_high;
  std::uint64_t moves;
  double in_range_fraction;
  double wasted_logical_fraction;
  double wasted_physical_fraction;
};

std::vector<BandOutcome> sweep_bands(const PopulationSpec& spec,
                                     const std::vector<std::pair<double, double>>& candidates,
                                     std::size_t steps = 4);

// Line-delimited text interfaces: `node <id> <lcap> <pcap>` and
// `chunk <node> <id> <logical> <physical>` records.
Cluster parse_population(std::istream& in);
void write_population(std::ostream& out, const Cluster& cluster);
void write_simulation(std::ostream& out, const SimulationResult& result);

}  // namespace pagestore::sched
