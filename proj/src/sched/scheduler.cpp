#include "sched/scheduler.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include "common/errors.hpp"
#include "common/rng.hpp"

namespace pagestore::sched {

std::uint64_t NodeState::logical_used() const {
  std::uint64_t total = 0;
  for (const auto& c : chunks) total += c.logical_bytes;
  return total;
}

std::uint64_t NodeState::physical_used() const {
  std::uint64_t total = 0;
  for (const auto& c : chunks) total += c.physical_bytes;
  return total;
}

double NodeState::node_ratio() const {
  std::uint64_t phys = physical_used();
  return phys == 0 ? 0.0 : static_cast<double>(logical_used()) / static_cast<double>(phys);
}

double NodeState::logical_fill() const {
  return static_cast<double>(logical_used()) / static_cast<double>(logical_capacity);
}

double NodeState::physical_fill() const {
  return static_cast<double>(physical_used()) / static_cast<double>(physical_capacity);
}

double Cluster::avg_logical_fill() const {
  if (nodes.empty()) return 0.0;
  double total = 0;
  for (const auto& n : nodes) total += n.logical_fill();
  return total / static_cast<double>(nodes.size());
}

std::uint64_t Cluster::total_logical() const {
  std::uint64_t total = 0;
  for (const auto& n : nodes) total += n.logical_used();
  return total;
}

std::uint64_t Cluster::total_physical() const {
  std::uint64_t total = 0;
  for (const auto& n : nodes) total += n.physical_used();
  return total;
}

double Cluster::avg_ratio() const {
  std::uint64_t phys = total_physical();
  return phys == 0 ? 0.0 : static_cast<double>(total_logical()) / static_cast<double>(phys);
}

void SchedulerConfig::validate(double c_avg) const {
  if (c_low <= 0 || c_high <= 0 || c_low >= c_high)
    throw ConfigError("require 0 < c_low < c_high");
  if (!(c_low < c_avg && c_avg < c_high))
    throw ConfigError("require c_low < cluster average ratio < c_high");
  if (delta <= 0 || block_threshold <= 0 || block_threshold > 1)
    throw ConfigError("bad scheduler band parameters");
}

const char* zone_name(Zone z) {
  switch (z) {
    case Zone::kA: return "A";
    case Zone::kB: return "B";
    case Zone::kC: return "C";
    case Zone::kD: return "D";
  }
  return "?";
}

Zone classify_zone(const NodeState& node, const SchedulerConfig& cfg, double c_avg) {
  if (node.physical_used() == 0) return Zone::kB;
  double r = node.node_ratio();
  if (r < cfg.c_low) return Zone::kA;
  if (r > cfg.c_high) return Zone::kD;
  // Boundary ties resolve downward: exactly c_avg lands in B.
  return r <= c_avg ? Zone::kB : Zone::kC;
}

double violation_measure(const Cluster& cluster, const SchedulerConfig& cfg) {
  // Weighted by node physical capacity rather than live usage: a usage weight
  // lets the planner shrink the measure by draining same-ratio chunks off a
  // violator without moving its ratio at all.
  double total = 0;
  for (const auto& node : cluster.nodes) {
    if (node.physical_used() == 0) continue;
    double r = node.node_ratio();
    double excess = std::max({0.0, cfg.c_low - r, r - cfg.c_high});
    total += excess * static_cast<double>(node.physical_capacity);
  }
  return total;
}

namespace {

NodeState* find_node(Cluster& cluster, std::uint64_t node_id) {
  for (auto& n : cluster.nodes)
    if (n.node_id == node_id) return &n;
  return nullptr;
}

bool dest_accepts(const NodeState& dst, const ChunkStats& chunk, double threshold) {
  double logical = static_cast<double>(dst.logical_used() + chunk.logical_bytes) /
                   static_cast<double>(dst.logical_capacity);
  double physical = static_cast<double>(dst.physical_used() + chunk.physical_bytes) /
                    static_cast<double>(dst.physical_capacity);
  return logical <= threshold && physical <= threshold;
}

void move_chunk(Cluster& cluster, const Migration& m) {
  NodeState* src = find_node(cluster, m.src_node);
  NodeState* dst = find_node(cluster, m.dst_node);
  if (!src || !dst) throw IllegalMove("unknown node");
  auto it = std::find_if(src->chunks.begin(), src->chunks.end(),
                         [&](const ChunkStats& c) { return c.chunk_id == m.chunk_id; });
  if (it == src->chunks.end()) throw IllegalMove("chunk not on source node");
  dst->chunks.push_back(*it);
  src->chunks.erase(it);
}

// Zone preference order for destinations.
std::vector<Zone> dest_preference(Zone src_zone) {
  if (src_zone == Zone::kA) return {Zone::kD, Zone::kC, Zone::kB};
  return {Zone::kA, Zone::kB, Zone::kC};
}

}  // namespace

std::vector<Migration> plan_migrations(const Cluster& cluster, const SchedulerConfig& cfg) {
  Cluster work = cluster;
  cfg.validate(work.avg_ratio());
  std::vector<Migration> plan;
  const std::size_t max_moves = 16 + 8 * [&] {
    std::size_t chunks = 0;
    for (const auto& n : work.nodes) chunks += n.chunks.size();
    return chunks;
  }();

  // Pass 1: plain logical balancing, the pre-existing policy. Nodes more than
  // migrate_trigger above the average logical usage shed chunks to the
  // lowest-usage takers.
  for (bool progressed = true; progressed && plan.size() < max_moves;) {
    progressed = false;
    double w_avg = work.avg_logical_fill();
    for (auto& node : work.nodes) {
      if (node.chunks.empty()) continue;
      if (node.logical_fill() <= w_avg * (1.0 + cfg.migrate_trigger)) continue;
      // smallest chunk id first: deterministic
      const ChunkStats* pick = nullptr;
      for (const auto& c : node.chunks)
        if (!pick || c.chunk_id < pick->chunk_id) pick = &c;
      NodeState* dest = nullptr;
      for (auto& cand : work.nodes) {
        if (cand.node_id == node.node_id) continue;
        if (!dest_accepts(cand, *pick, cfg.block_threshold)) continue;
        if (!dest || cand.logical_used() < dest->logical_used() ||
            (cand.logical_used() == dest->logical_used() && cand.node_id < dest->node_id))
          dest = &cand;
      }
      if (!dest) continue;
      Migration m{pick->chunk_id, node.node_id, dest->node_id};
      move_chunk(work, m);
      plan.push_back(m);
      progressed = true;
      break;  // usage averages shifted; restart the scan
    }
  }

  // Pass 2: ratio balancing inside the w_avg band. Zone A sheds its lowest
  // ratio chunks toward D/C/B; Zone D sheds its highest toward A/B/C. A move
  // is emitted only when it strictly shrinks the violation measure.
  for (bool progressed = true; progressed && plan.size() < max_moves;) {
    progressed = false;
    double w_avg = work.avg_logical_fill();
    double c_avg = work.avg_ratio();
    double measure = violation_measure(work, cfg);
    if (measure <= 0) break;

    for (auto& node : work.nodes) {
      if (node.chunks.empty()) continue;
      Zone zone = classify_zone(node, cfg, c_avg);
      if (zone != Zone::kA && zone != Zone::kD) continue;

      Migration accepted{};
      bool found = false;
      if (node.logical_fill() < w_avg - cfg.delta) {
        // Below the band: the corrective chunk comes to the violator from a
        // fuller donor, restoring logical balance and ratio together. Zone A
        // pulls high ratios in, zone D pulls low ratios.
        struct Candidate {
          const ChunkStats* chunk;
          NodeState* donor;
        };
        std::vector<Candidate> candidates;
        for (auto& donor : work.nodes) {
          if (donor.node_id == node.node_id) continue;
          if (donor.logical_fill() <= node.logical_fill()) continue;
          for (const auto& chunk : donor.chunks) candidates.push_back({&chunk, &donor});
        }
        std::sort(candidates.begin(), candidates.end(),
                  [&](const Candidate& a, const Candidate& b) {
                    if (a.chunk->ratio() != b.chunk->ratio())
                      return zone == Zone::kA ? a.chunk->ratio() > b.chunk->ratio()
                                              : a.chunk->ratio() < b.chunk->ratio();
                    return a.chunk->chunk_id < b.chunk->chunk_id;
                  });
        for (const Candidate& cand : candidates) {
          if (!dest_accepts(node, *cand.chunk, cfg.block_threshold)) continue;
          Cluster probe = work;
          Migration m{cand.chunk->chunk_id, cand.donor->node_id, node.node_id};
          move_chunk(probe, m);
          if (violation_measure(probe, cfg) < measure - 1e-9) {
            accepted = m;
            found = true;
            break;
          }
        }
      } else {
        // In or above the band: shed the extreme chunk toward the preferred
        // zones, lowest-usage destination first.
        std::vector<const ChunkStats*> order;
        for (const auto& c : node.chunks) order.push_back(&c);
        std::sort(order.begin(), order.end(), [&](const ChunkStats* a, const ChunkStats* b) {
          if (a->ratio() != b->ratio())
            return zone == Zone::kA ? a->ratio() < b->ratio() : a->ratio() > b->ratio();
          return a->chunk_id < b->chunk_id;
        });
        for (const ChunkStats* chunk : order) {
          for (Zone want : dest_preference(zone)) {
            std::vector<NodeState*> candidates;
            for (auto& cand : work.nodes) {
              if (cand.node_id == node.node_id) continue;
              if (classify_zone(cand, cfg, c_avg) != want) continue;
              if (!dest_accepts(cand, *chunk, cfg.block_threshold)) continue;
              candidates.push_back(&cand);
            }
            std::sort(candidates.begin(), candidates.end(),
                      [](const NodeState* a, const NodeState* b) {
                        auto la = a->logical_used(), lb = b->logical_used();
                        return la != lb ? la < lb : a->node_id < b->node_id;
                      });
            for (NodeState* cand : candidates) {
              Cluster probe = work;
              Migration m{chunk->chunk_id, node.node_id, cand->node_id};
              move_chunk(probe, m);
              if (violation_measure(probe, cfg) < measure - 1e-9) {
                accepted = m;
                found = true;
                break;
              }
            }
            if (found) break;
          }
          if (found) break;
        }
      }
      if (found) {
        move_chunk(work, accepted);
        plan.push_back(accepted);
        progressed = true;
        break;  // zones shifted; recompute
      }
    }
  }
  return plan;
}

ApplyStats apply_plan(Cluster& cluster, const std::vector<Migration>& plan) {
  ApplyStats stats;
  for (const Migration& m : plan) {
    NodeState* src = find_node(cluster, m.src_node);
    if (!src) throw IllegalMove("unknown source node");
    auto it = std::find_if(src->chunks.begin(), src->chunks.end(),
                           [&](const ChunkStats& c) { return c.chunk_id == m.chunk_id; });
    if (it == src->chunks.end()) throw IllegalMove("plan is stale");
    stats.bytes_moved_logical += it->logical_bytes;
    stats.bytes_moved_physical += it->physical_bytes;
    move_chunk(cluster, m);
    stats.moves++;
  }
  return stats;
}

std::uint64_t allocate_chunk(Cluster& cluster, const ChunkStats& chunk,
                             const SchedulerConfig& cfg) {
  NodeState* best = nullptr;
  for (auto& node : cluster.nodes) {
    if (node.logical_fill() > cfg.block_threshold ||
        node.physical_fill() > cfg.block_threshold)
      continue;
    if (!best || node.logical_used() < best->logical_used() ||
        (node.logical_used() == best->logical_used() && node.node_id < best->node_id))
      best = &node;
  }
  if (!best) throw ClusterFull("all nodes blocked; add storage servers");
  best->chunks.push_back(chunk);
  return best->node_id;
}

Cluster build_population(const PopulationSpec& spec) {
  // Ratios correlate within a node (a node hosts few tenants), so the node
  // median is itself lognormal and chunks scatter tightly around it. With
  // independent per-chunk draws the node averages would collapse onto the
  // global median and leave the scheduler nothing to do.
  Cluster cluster;
  Rng rng(spec.seed);
  std::uint64_t chunk_id = 0;
  for (std::size_t n = 0; n < spec.node_count; n++) {
    NodeState node;
    node.node_id = n;
    node.logical_capacity = spec.node_logical_capacity;
    node.physical_capacity = spec.node_physical_capacity;
    double node_median = rng.lognormal(spec.ratio_median, spec.ratio_sigma);
    for (std::size_t c = 0; c < spec.chunks_per_node; c++) {
      double ratio = rng.lognormal(node_median, spec.ratio_sigma / 3.0);
      ratio = std::max(1.0, ratio);
      ChunkStats chunk;
      chunk.chunk_id = chunk_id++;
      chunk.logical_bytes = spec.chunk_logical_bytes;
      chunk.physical_bytes =
          std::max<std::uint64_t>(1, static_cast<std::uint64_t>(
                                         static_cast<double>(chunk.logical_bytes) / ratio));
      node.chunks.push_back(chunk);
    }
    cluster.nodes.push_back(std::move(node));
  }
  return cluster;
}

double wasted_logical_fraction(const Cluster& cluster, const SchedulerConfig& cfg) {
  // Project every node filling at its current ratio until one axis reaches
  // the block threshold; capacity stranded on the logical axis is waste.
  double wasted = 0, denom = 0;
  for (const auto& node : cluster.nodes) {
    double cap = cfg.block_threshold * static_cast<double>(node.logical_capacity);
    denom += cap;
    if (node.physical_used() == 0) continue;
    double reachable = std::min(
        cap, node.node_ratio() * cfg.block_threshold *
                 static_cast<double>(node.physical_capacity));
    wasted += cap - reachable;
  }
  return denom == 0 ? 0.0 : wasted / denom;
}

double wasted_physical_fraction(const Cluster& cluster, const SchedulerConfig& cfg) {
  double wasted = 0, denom = 0;
  for (const auto& node : cluster.nodes) {
    double cap = cfg.block_threshold * static_cast<double>(node.physical_capacity);
    denom += cap;
    if (node.physical_used() == 0) continue;
    double reachable =
        std::min(cap, cfg.block_threshold * static_cast<double>(node.logical_capacity) /
                          node.node_ratio());
    wasted += cap - reachable;
  }
  return denom == 0 ? 0.0 : wasted / denom;
}

SimulationResult run_rounds(Cluster& cluster, const SchedulerConfig& cfg,
                            std::size_t steps) {
  SimulationResult result;
  for (std::size_t s = 0; s < steps; s++) {
    std::vector<Migration> plan = plan_migrations(cluster, cfg);
    ApplyStats stats = apply_plan(cluster, plan);
    result.all_moves.insert(result.all_moves.end(), plan.begin(), plan.end());

    StepReport report;
    report.step = s;
    double c_avg = cluster.avg_ratio();
    std::size_t in_range = 0;
    for (const auto& node : cluster.nodes) {
      report.zone_count[static_cast<std::size_t>(classify_zone(node, cfg, c_avg))]++;
      double r = node.node_ratio();
      if (r >= cfg.c_low && r <= cfg.c_high) in_range++;
    }
    report.in_range_fraction =
        static_cast<double>(in_range) / static_cast<double>(cluster.nodes.size());
    report.wasted_logical_fraction = wasted_logical_fraction(cluster, cfg);
    report.wasted_physical_fraction = wasted_physical_fraction(cluster, cfg);
    report.moves = stats.moves;
    report.violation = violation_measure(cluster, cfg);
    result.steps.push_back(report);
    if (plan.empty()) break;
  }
  return result;
}

SimulationResult simulate(const PopulationSpec& spec, const SchedulerConfig& cfg,
                          std::size_t steps) {
  Cluster cluster = build_population(spec);
  return run_rounds(cluster, cfg, steps);
}

std::vector<BandOutcome> sweep_bands(const PopulationSpec& spec,
                                     const std::vector<std::pair<double, double>>& candidates,
                                     std::size_t steps) {
  std::vector<BandOutcome> out;
  for (auto [c_low, c_high] : candidates) {
    SchedulerConfig cfg;
    cfg.c_low = c_low;
    cfg.c_high = c_high;
    SimulationResult result = simulate(spec, cfg, steps);
    BandOutcome outcome{c_low, c_high, result.all_moves.size(), 0.0, 0.0, 0.0};
    if (!result.steps.empty()) {
      outcome.in_range_fraction = result.steps.back().in_range_fraction;
      outcome.wasted_logical_fraction = result.steps.back().wasted_logical_fraction;
      outcome.wasted_physical_fraction = result.steps.back().wasted_physical_fraction;
    }
    out.push_back(outcome);
  }
  return out;
}

Cluster parse_population(std::istream& in) {
  Cluster cluster;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "node") {
      NodeState node;
      ls >> node.node_id >> node.logical_capacity >> node.physical_capacity;
      if (!ls) throw ConfigError("bad node line " + std::to_string(lineno));
      cluster.nodes.push_back(std::move(node));
    } else if (kind == "chunk") {
      std::uint64_t node_id;
      ChunkStats chunk;
      ls >> node_id >> chunk.chunk_id >> chunk.logical_bytes >> chunk.physical_bytes;
      if (!ls || chunk.physical_bytes == 0)
        throw ConfigError("bad chunk line " + std::to_string(lineno));
      NodeState* node = find_node(cluster, node_id);
      if (!node) throw ConfigError("chunk references unknown node at line " +
                                   std::to_string(lineno));
      node->chunks.push_back(chunk);
    } else {
      throw ConfigError("unknown record '" + kind + "' at line " + std::to_string(lineno));
    }
  }
  return cluster;
}

void write_population(std::ostream& out, const Cluster& cluster) {
  out << "# node <id> <logical_capacity> <physical_capacity>\n";
  out << "# chunk <node> <id> <logical_bytes> <physical_bytes>\n";
  for (const auto& node : cluster.nodes) {
    out << "node " << node.node_id << ' ' << node.logical_capacity << ' '
        << node.physical_capacity << '\n';
    for (const auto& chunk : node.chunks)
      out << "chunk " << node.node_id << ' ' << chunk.chunk_id << ' ' << chunk.logical_bytes
          << ' ' << chunk.physical_bytes << '\n';
  }
}

void write_simulation(std::ostream& out, const SimulationResult& result) {
  out << "# step zoneA zoneB zoneC zoneD in_range wasted_logical wasted_physical moves"
         " violation\n";
  for (const auto& s : result.steps) {
    out << s.step;
    for (std::size_t z = 0; z < 4; z++) out << ' ' << s.zone_count[z];
    out << ' ' << s.in_range_fraction << ' ' << s.wasted_logical_fraction << ' '
        << s.wasted_physical_fraction << ' ' << s.moves << ' ' << s.violation << '\n';
  }
}

}  // namespace pagestore::sched
