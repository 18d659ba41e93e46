#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "common/serde.hpp"

namespace pagestore::store {

enum class ReplicaFault : std::uint8_t { kHealthy = 0, kStalled = 1, kDropped = 2 };

// In-process majority-commit harness over a fixed-leader group. Replica 0 is
// the leader; followers apply the same deterministic op stream. Stalled or
// dropped followers miss ops and catch up from the group op log once healed.
// Acks may be delivered out of order through the pending queue; commit
// counting is order-independent.
class ReplicationGroup {
 public:
  using ApplyFn = std::function<void(std::size_t replica, byte_span op)>;

  explicit ReplicationGroup(std::size_t replica_count, ApplyFn apply);

  // Leader path: applies the op on the leader, forwards to followers and
  // counts durable acknowledgments. Returns the ack count (leader included).
  std::size_t replicate(byte_span op);

  std::size_t quorum() const { return replicas_ / 2 + 1; }
  std::size_t replica_count() const { return replicas_; }

  void set_fault(std::size_t replica, ReplicaFault fault);
  ReplicaFault fault(std::size_t replica) const { return faults_[replica]; }

  // Replays every op a lagging follower missed while stalled.
  void heal(std::size_t replica);

  // Test hook: when deferred mode is on, follower acks queue up instead of
  // counting immediately; pump_acks delivers them in any order.
  void set_deferred_acks(bool on) { deferred_ = on; }
  std::size_t pending_acks() const { return pending_.size(); }
  std::size_t pump_acks();

  std::uint64_t op_count() const { return op_log_.size(); }
  std::uint64_t applied_ops(std::size_t replica) const { return applied_[replica]; }
  const bytes& op_at(std::uint64_t index) const { return op_log_[index]; }

 private:
  std::size_t replicas_;
  ApplyFn apply_;
  std::vector<ReplicaFault> faults_;
  std::vector<std::uint64_t> applied_;  // ops applied per replica
  std::vector<bytes> op_log_;
  bool deferred_ = false;
  std::deque<std::size_t> pending_;
};

}  // namespace pagestore::store
