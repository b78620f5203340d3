#include "beacons/consensus/client.hpp"

#include <algorithm>

namespace beacons::consensus {

std::size_t absorb_threshold(std::size_t n_v) { return (n_v + 2 + 2) / 3; }
std::size_t expel_threshold(std::size_t n_v) { return (n_v + 1 + 2) / 3; }

bool HeartbeatMonitor::lost(const BlockchainAddress& a, Tick now) const {
  auto it = last_.find(a);
  if (it == last_.end()) return true;
  return now > it->second && now - it->second > cfg_.missed * cfg_.period;
}

std::optional<Tick> HeartbeatMonitor::last_seen(const BlockchainAddress& a) const {
  auto it = last_.find(a);
  if (it == last_.end()) return std::nullopt;
  return it->second;
}

const char* to_string(ClientError e) {
  switch (e) {
    case ClientError::HandshakeFailed: return "HandshakeFailed";
    case ClientError::DuplicateMember: return "DuplicateMember";
    case ClientError::NotAMember: return "NotAMember";
    case ClientError::NoQuorum: return "NoQuorum";
    case ClientError::Rejected: return "Rejected";
  }
  return "?";
}

Client::Client(Identity vehicle, std::vector<NodeId> members, NodeId primary, Tick now, ClientConfig cfg)
    : self_(std::move(vehicle)),
      cfg_(cfg),
      members_(std::move(members)),
      n_v_(members_.size()),
      primary_(primary),
      heartbeats_(cfg.heartbeat) {
  for (const auto& m : members_) heartbeats_.seen(m.bcadd, now);
}

bool Client::known(const BlockchainAddress& a) const {
  return std::any_of(members_.begin(), members_.end(), [&](const NodeId& n) { return n.bcadd == a; });
}

bool Client::busy_with(const BlockchainAddress& subject) const {
  return std::any_of(pending_.begin(), pending_.end(), [&](const auto& kv) {
    return kv.second.request.subject && kv.second.request.subject->bcadd == subject;
  });
}

std::vector<BlockchainAddress> Client::member_addresses() const {
  std::vector<BlockchainAddress> out;
  for (const auto& m : members_) {
    if (!ignored_.count(m.bcadd)) out.push_back(m.bcadd);
  }
  return out;
}

Message Client::wrap(const Request& r) const {
  Message m;
  m.kind = r.kind == RequestKind::Absorb ? MsgKind::ReqAbs : r.kind == RequestKind::Expel ? MsgKind::ReqExp : MsgKind::ReqOp;
  m.request = r;
  sign_message(m, self_);
  return m;
}

Outbox Client::issue(Request r, std::size_t threshold, bool broadcast_first, Tick) {
  Outbox out;
  const auto d = digest_of(r);
  Pending p;
  p.request = r;
  p.digest = d;
  p.threshold = threshold;
  pending_.emplace(d, std::move(p));
  const std::vector<BlockchainAddress> to =
      broadcast_first ? member_addresses() : std::vector<BlockchainAddress>{primary_.bcadd};
  out.sends.push_back({to, wrap(r)});
  const auto token = next_token_++;
  timers_[token] = d;
  out.timers.push_back({cfg_.retransmit_after, token});
  return out;
}

Expected<Outbox, ClientError> Client::absorb(const NodeId& x_n, bool session_established, Tick now) {
  if (!session_established) return unexpected(ClientError::HandshakeFailed);
  if (known(x_n.bcadd) || busy_with(x_n.bcadd)) return unexpected(ClientError::DuplicateMember);
  heartbeats_.seen(x_n.bcadd, now);
  auto r = make_request(self_, RequestKind::Absorb, next_id_++, x_n);
  return issue(std::move(r), absorb_threshold(n_v_), false, now);
}

Expected<Outbox, ClientError> Client::expel(const NodeId& x_n, Tick now) {
  if (!known(x_n.bcadd) || ignored_.count(x_n.bcadd)) return unexpected(ClientError::NotAMember);
  if (busy_with(x_n.bcadd)) return unexpected(ClientError::DuplicateMember);
  // From here on V no longer talks to X_n; its replies do not count.
  ignored_.insert(x_n.bcadd);
  auto r = make_request(self_, RequestKind::Expel, next_id_++, x_n);
  return issue(std::move(r), expel_threshold(n_v_), true, now);
}

Outbox Client::submit(Bytes operation, Tick now) {
  auto r = make_request(self_, RequestKind::Operation, next_id_++, std::nullopt, std::move(operation));
  return issue(std::move(r), max_faulty(n_v_) + 1, false, now);
}

Outbox Client::on_message(const Message& m, Tick now) {
  Outbox out;
  if (ignored_.count(m.sender) || !message_authentic(m)) return out;
  if (m.kind == MsgKind::Heartbeat) {
    heartbeats_.seen(m.sender, now);
    return out;
  }
  if (m.kind != MsgKind::Reply || !known(m.sender)) return out;
  auto it = pending_.find(m.digest);
  if (it == pending_.end()) {
    if (finished_.count(m.digest)) ++late_replies_;
    return out;
  }
  if (m.node && known(m.node->bcadd) && !ignored_.count(m.node->bcadd)) primary_ = *m.node;
  Pending& p = it->second;
  (m.ok ? p.ok : p.failed).insert(m.sender);
  if (p.ok.size() >= p.threshold) {
    finish(it, std::nullopt, now);
  } else if (p.failed.size() >= p.threshold) {
    const auto kind = p.request.kind;
    finish(it,
           kind == RequestKind::Absorb  ? ClientError::DuplicateMember
           : kind == RequestKind::Expel ? ClientError::NotAMember
                                        : ClientError::Rejected,
           now);
  }
  return out;
}

void Client::finish(std::map<Digest, Pending>::iterator it, std::optional<ClientError> error, Tick now) {
  const Pending& p = it->second;
  Completion c;
  c.request_id = p.request.id;
  c.kind = p.request.kind;
  c.subject = p.request.subject;
  c.error = error;
  c.threshold = p.threshold;
  c.replies = error ? p.failed.size() : p.ok.size();
  c.at = now;
  if (!error && p.request.subject) {
    const NodeId x = *p.request.subject;
    if (p.request.kind == RequestKind::Absorb) {
      members_.push_back(x);
      std::sort(members_.begin(), members_.end(),
                [](const NodeId& a, const NodeId& b) { return a.ordinal < b.ordinal; });
      ++n_v_;
    } else if (p.request.kind == RequestKind::Expel) {
      std::erase_if(members_, [&](const NodeId& n) { return n.bcadd == x.bcadd; });
      --n_v_;
      heartbeats_.forget(x.bcadd);
    }
  }
  c.n_v_after = n_v_;
  completions_.push_back(c);
  finished_.insert(it->first);
  pending_.erase(it);
}

Outbox Client::on_timer(std::uint64_t token, Tick now) {
  Outbox out;
  auto t = timers_.find(token);
  if (t == timers_.end()) return out;
  const Digest d = t->second;
  timers_.erase(t);
  auto it = pending_.find(d);
  if (it == pending_.end()) return out;
  if (++it->second.attempts > cfg_.max_attempts) {
    finish(it, ClientError::NoQuorum, now);
    return out;
  }
  // Retransmissions go to every member, as the primary may be the problem.
  out.sends.push_back({member_addresses(), wrap(it->second.request)});
  const auto next = next_token_++;
  timers_[next] = d;
  out.timers.push_back({cfg_.retransmit_after, next});
  return out;
}

std::vector<NodeId> Client::lost_members(Tick now) const {
  std::vector<NodeId> out;
  for (const auto& m : members_) {
    if (!ignored_.count(m.bcadd) && heartbeats_.lost(m.bcadd, now)) out.push_back(m);
  }
  return out;
}

std::vector<NodeId> heartbeat_monitor(const Client& client, Tick now) { return client.lost_members(now); }

}  // namespace beacons::consensus
