#include "store/replication.hpp"

#include "common/errors.hpp"

namespace pagestore::store {

ReplicationGroup::ReplicationGroup(std::size_t replica_count, ApplyFn apply)
    : replicas_(replica_count),
      apply_(std::move(apply)),
      faults_(replica_count, ReplicaFault::kHealthy),
      applied_(replica_count, 0) {}

std::size_t ReplicationGroup::replicate(byte_span op) {
  op_log_.emplace_back(op.begin(), op.end());
  std::uint64_t index = op_log_.size() - 1;

  // Leader applies and persists first.
  apply_(0, op);
  applied_[0] = index + 1;
  std::size_t acks = 1;

  for (std::size_t r = 1; r < replicas_; r++) {
    if (faults_[r] != ReplicaFault::kHealthy) continue;
    if (applied_[r] != index) {
      // Shouldn't happen for a healthy follower; treat as needing catch-up.
      heal(r);
    } else {
      apply_(r, op);
      applied_[r] = index + 1;
    }
    if (deferred_) {
      pending_.push_back(r);
    } else {
      acks++;
    }
  }
  return acks;
}

void ReplicationGroup::set_fault(std::size_t replica, ReplicaFault fault) {
  if (replica == 0) throw InvalidArgument("leader faults are out of scope");
  bool was_faulty = faults_[replica] != ReplicaFault::kHealthy;
  faults_[replica] = fault;
  if (was_faulty && fault == ReplicaFault::kHealthy) heal(replica);
}

void ReplicationGroup::heal(std::size_t replica) {
  while (applied_[replica] < op_log_.size()) {
    apply_(replica, op_log_[applied_[replica]]);
    applied_[replica]++;
  }
}

std::size_t ReplicationGroup::pump_acks() {
  std::size_t delivered = pending_.size();
  pending_.clear();
  return delivered;
}

}  // namespace pagestore::store
