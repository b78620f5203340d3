#pragma once

// The vehicle side of the membership protocol: it asks the group to absorb
// RSUs whose heartbeat it hears and to expel RSUs whose heartbeat it lost,
// and acknowledges once enough replies arrive.

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "beacons/consensus/replica.hpp"

namespace beacons::consensus {

/// Replies needed before the client acknowledges an absorption: ceil((N_V + 2) / 3).
std::size_t absorb_threshold(std::size_t n_v);
/// Replies needed before the client acknowledges an expulsion: ceil((N_V + 1) / 3),
/// with N_V taken before the expulsion.
std::size_t expel_threshold(std::size_t n_v);

struct HeartbeatConfig {
  Tick period = 10;
  unsigned missed = 3;  // K
};

/// A member is lost once more than K periods pass without a heartbeat.
class HeartbeatMonitor {
 public:
  explicit HeartbeatMonitor(HeartbeatConfig cfg = {}) : cfg_(cfg) {}
  void seen(const BlockchainAddress& a, Tick now) { last_[a] = now; }
  void forget(const BlockchainAddress& a) { last_.erase(a); }
  bool lost(const BlockchainAddress& a, Tick now) const;
  std::optional<Tick> last_seen(const BlockchainAddress& a) const;
  const HeartbeatConfig& config() const { return cfg_; }

 private:
  HeartbeatConfig cfg_;
  std::map<BlockchainAddress, Tick> last_;
};

enum class ClientError { HandshakeFailed, DuplicateMember, NotAMember, NoQuorum, Rejected };

const char* to_string(ClientError e);

struct ClientConfig {
  Tick retransmit_after = 60;
  unsigned max_attempts = 4;
  HeartbeatConfig heartbeat{};
};

/// One finished client operation.
struct Completion {
  std::uint64_t request_id = 0;
  RequestKind kind = RequestKind::Noop;
  std::optional<NodeId> subject;
  std::optional<ClientError> error;  // empty on acknowledgment
  std::size_t threshold = 0;
  std::size_t replies = 0;           // distinct valid replies at completion
  Tick at = 0;
  std::size_t n_v_after = 0;
};

class Client {
 public:
  Client(Identity vehicle, std::vector<NodeId> members, NodeId primary, Tick now, ClientConfig cfg = {});

  /// Alg. 1: requires a mutual-authentication session with x_n.
  Expected<Outbox, ClientError> absorb(const NodeId& x_n, bool session_established, Tick now);
  /// Alg. 2: broadcast to every member.
  Expected<Outbox, ClientError> expel(const NodeId& x_n, Tick now);
  /// A ledger operation; acknowledged on f + 1 matching replies.
  Outbox submit(Bytes operation, Tick now);

  Outbox on_message(const Message& m, Tick now);
  Outbox on_timer(std::uint64_t token, Tick now);

  /// Members whose heartbeat is overdue.
  std::vector<NodeId> lost_members(Tick now) const;

  const Identity& identity() const { return self_; }
  std::size_t n_v() const { return n_v_; }
  const std::vector<NodeId>& known_members() const { return members_; }
  const NodeId& primary() const { return primary_; }
  bool ignores(const BlockchainAddress& a) const { return ignored_.count(a) > 0; }
  bool busy_with(const BlockchainAddress& subject) const;
  std::size_t pending() const { return pending_.size(); }
  const std::vector<Completion>& completions() const { return completions_; }
  std::uint64_t late_replies() const { return late_replies_; }

 private:
  struct Pending {
    Request request;
    Digest digest;
    std::size_t threshold = 0;
    std::set<BlockchainAddress> ok;
    std::set<BlockchainAddress> failed;
    unsigned attempts = 1;
  };

  Outbox issue(Request r, std::size_t threshold, bool broadcast_first, Tick now);
  Message wrap(const Request& r) const;
  std::vector<BlockchainAddress> member_addresses() const;
  bool known(const BlockchainAddress& a) const;
  void finish(std::map<Digest, Pending>::iterator it, std::optional<ClientError> error, Tick now);

  Identity self_;
  ClientConfig cfg_;
  std::vector<NodeId> members_;
  std::size_t n_v_ = 0;
  NodeId primary_;
  std::uint64_t next_id_ = 1;
  std::map<Digest, Pending> pending_;
  std::map<std::uint64_t, Digest> timers_;
  std::uint64_t next_token_ = 1;
  std::set<BlockchainAddress> ignored_;
  std::set<Digest> finished_;
  HeartbeatMonitor heartbeats_;
  std::vector<Completion> completions_;
  std::uint64_t late_replies_ = 0;
};

/// Members of `client` declared lost at `now`.
std::vector<NodeId> heartbeat_monitor(const Client& client, Tick now);

}  // namespace beacons::consensus
