#pragma once

// PBFT replica for the RSU group with client-driven membership: absorption
// keeps the primary, expulsion of the primary runs a view change that bars the
// expelled node from voting and from election.
//
// Replicas are pure state machines: every input returns an Outbox of messages
// to send, timers to arm and decisions executed. The caller owns transport
// and time.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "beacons/bedns.hpp"
#include "beacons/consensus/messages.hpp"

namespace beacons::consensus {

using Tick = std::uint64_t;

struct Send {
  std::vector<BlockchainAddress> to;
  Message msg;
};

struct TimerRequest {
  Tick delay = 0;
  std::uint64_t token = 0;
};

struct Decision {
  std::uint64_t view = 0;
  std::uint64_t seq = 0;
  Digest digest;
  Request request;
};

struct Outbox {
  std::vector<Send> sends;
  std::vector<TimerRequest> timers;
  std::vector<Decision> decisions;

  void append(Outbox other);
};

/// f = floor((N - 1) / 3); a quorum is 2f + 1.
std::size_t max_faulty(std::size_t n);
std::size_t quorum(std::size_t n);

/// Next member after `current` in ordinal order, wrapping, never `skip`.
NodeId next_primary(const std::vector<NodeId>& members, const NodeId& current,
                    const std::optional<NodeId>& skip);

struct ReplicaConfig {
  Tick request_timeout = 40;
  Tick view_change_timeout = 40;
  /// Prepared certificates carried in a ViewChange reach back this many
  /// executed sequence numbers.
  std::uint64_t proof_window = 16;
};

struct ReplicaStats {
  std::uint64_t discarded_from_excluded = 0;
  std::uint64_t rejected_invalid = 0;
  std::uint64_t conflicting_preprepares = 0;
  std::uint64_t view_changes_started = 0;
};

/// Senders whose ViewChange messages formed the quorum for a view.
struct ViewChangeQuorum {
  std::uint64_t view = 0;
  NodeId primary;
  std::optional<NodeId> excluded;
  std::vector<BlockchainAddress> voters;
};

class Replica {
 public:
  Replica(Identity self, std::vector<NodeId> members, NodeId primary, ReplicaConfig cfg = {});
  /// A node that is not yet a member: it waits for matching Welcomes.
  static Replica joining(Identity self, ReplicaConfig cfg = {});

  Outbox on_message(const Message& m);
  Outbox on_timer(std::uint64_t token);

  const Identity& identity() const { return self_; }
  const BlockchainAddress& bcadd() const { return self_.bcadd; }
  bool joined() const { return joined_; }
  bool is_member() const;
  const std::vector<NodeId>& members() const { return members_; }
  std::size_t n_xi() const { return n_xi_; }
  std::uint64_t view() const { return view_; }
  const NodeId& primary() const { return primary_; }
  bool is_primary() const { return joined_ && primary_.bcadd == self_.bcadd; }
  bool in_view_change() const { return view_changing_; }
  std::uint64_t last_executed() const { return last_executed_; }
  const std::map<std::uint64_t, Decision>& log() const { return log_; }
  const bedns::Ledger& ledger() const { return ledger_; }
  const ReplicaStats& stats() const { return stats_; }
  const std::vector<ViewChangeQuorum>& view_change_history() const { return vc_history_; }
  Snapshot snapshot() const;

  /// Signs with this replica's key. Used by fault-injection wrappers.
  void sign(Message& m) const { sign_message(m, self_); }

 private:
  enum class TimerKind { Request, ViewChange };
  struct TimerInfo {
    TimerKind kind;
    std::uint64_t view;
    Digest digest;
  };
  struct VoteKey {
    std::uint64_t view;
    std::uint64_t seq;
    Digest digest;
    auto operator<=>(const VoteKey&) const = default;
  };
  using Votes = std::map<VoteKey, std::map<BlockchainAddress, Message>>;

  Replica(Identity self, ReplicaConfig cfg);

  bool member(const BlockchainAddress& a) const;
  std::optional<NodeId> find_member(const BlockchainAddress& a) const;
  std::vector<BlockchainAddress> peers() const;
  std::size_t count_members(const std::map<BlockchainAddress, Message>& votes) const;
  NodeId primary_for(std::uint64_t view) const;
  bool executed(const Request& r) const;

  void on_request(const Message& m, Outbox& out);
  void on_preprepare(const Message& m, Outbox& out);
  void on_vote(const Message& m, Outbox& out);
  void on_view_change(const Message& m, Outbox& out);
  void on_new_view(const Message& m, Outbox& out);
  void on_welcome(const Message& m, Outbox& out);

  void arm(TimerInfo info, Tick delay, Outbox& out);
  void track(const Request& r, Outbox& out);
  void accept_preprepare(const Message& pp, Outbox& out);
  void maybe_propose(Outbox& out);
  void try_progress(std::uint64_t view, std::uint64_t seq, Outbox& out);
  void execute_ready(Outbox& out);
  void execute(const Decision& d, Outbox& out);
  void reply(const Decision& d, bool ok, Outbox& out);

  void start_view_change(std::uint64_t view, Outbox& out);
  bool valid_proof(const PreparedProof& p) const;
  PreparedProof proof_for(const Message& pp) const;
  bool valid_view_change(const Message& vc, std::uint64_t view) const;
  std::vector<BlockchainAddress> voters() const;
  std::vector<const Message*> counted_view_changes(std::uint64_t view) const;
  std::vector<Message> reproposals(std::uint64_t view, const std::vector<const Message*>& vcs) const;
  void try_new_view(std::uint64_t view, Outbox& out);
  void enter_view(std::uint64_t view, const std::vector<Message>& preprepares,
                  const std::vector<BlockchainAddress>& voters, Outbox& out);

  Identity self_;
  ReplicaConfig cfg_;
  bool joined_ = true;
  std::vector<NodeId> members_;  // sorted by ordinal
  std::size_t n_xi_ = 0;
  std::uint64_t view_ = 0;
  NodeId primary_;

  // Normal case.
  std::uint64_t last_executed_ = 0;
  std::uint64_t highest_proposed_ = 0;
  std::deque<Request> queue_;                   // primary: waiting to be proposed
  std::map<Digest, Request> pending_;           // known, not yet executed
  std::set<Digest> proposed_;                   // proposed in the current view
  std::map<std::pair<std::uint64_t, std::uint64_t>, Message> accepted_;  // (view, seq)
  Votes prepares_;
  Votes commits_;
  std::set<std::pair<std::uint64_t, std::uint64_t>> commit_sent_;
  std::map<std::uint64_t, Message> prepared_;  // seq -> highest-view prepared PrePrepare
  std::map<std::uint64_t, Decision> committed_;
  std::map<std::uint64_t, Decision> log_;
  std::map<BlockchainAddress, std::uint64_t> client_marks_;
  std::map<BlockchainAddress, Message> last_reply_;
  bedns::Ledger ledger_;

  // View change.
  bool view_changing_ = false;
  std::uint64_t vc_target_ = 0;
  std::optional<NodeId> excluded_;            // expelled primary awaiting removal
  std::optional<Decision> deferred_expel_;    // reply once the new view starts
  std::map<std::uint64_t, std::map<BlockchainAddress, Message>> view_changes_;
  std::vector<ViewChangeQuorum> vc_history_;

  // Joining.
  std::map<Digest, std::set<BlockchainAddress>> welcome_votes_;
  std::map<Digest, Snapshot> welcome_snapshots_;
  std::vector<Message> early_;

  std::uint64_t next_token_ = 1;
  std::map<std::uint64_t, TimerInfo> timers_;
  ReplicaStats stats_;
};

}  // namespace beacons::consensus
