#pragma once

// Fault injection for consensus runs: a replica that follows the protocol
// underneath but tampers with what it sends.

#include "beacons/consensus/replica.hpp"
#include "beacons/simnet/rng.hpp"

namespace beacons::consensus {

struct ByzantineConfig {
  /// Chance that a PrePrepare goes out in two versions, split across peers.
  double equivocate = 1.0;
  /// Chance that a Prepare or Commit is followed by one for another digest.
  double double_vote = 0.5;
  /// Chance, per input handled, of an unprompted ViewChange for a future view
  /// naming a wrongly excluded node.
  double false_view_change = 0.2;
  /// Chance that a ViewChange carries a fabricated prepared certificate.
  double forge_proof = 0.5;
};

struct ByzantineStats {
  std::uint64_t equivocations = 0;
  std::uint64_t double_votes = 0;
  std::uint64_t false_view_changes = 0;
  std::uint64_t forged_proofs = 0;
};

class ByzantineReplica {
 public:
  ByzantineReplica(Replica inner, std::uint64_t seed, ByzantineConfig cfg = {});

  Outbox on_message(const Message& m);
  Outbox on_timer(std::uint64_t token);

  const Replica& inner() const { return inner_; }
  const ByzantineStats& stats() const { return stats_; }

 private:
  Outbox corrupt(Outbox out);
  void false_view_change(Outbox& out);
  PreparedProof forged_proof();
  Request alternative(const Request& r);

  Replica inner_;
  simnet::Rng rng_;
  ByzantineConfig cfg_;
  ByzantineStats stats_;
  std::vector<Request> seen_;  // client requests available for replay
};

}  // namespace beacons::consensus
