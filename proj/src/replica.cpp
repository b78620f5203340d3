#include "beacons/consensus/replica.hpp"

#include <algorithm>
#include <stdexcept>

namespace beacons::consensus {
namespace {

MsgKind request_kind(RequestKind k) {
  switch (k) {
    case RequestKind::Absorb: return MsgKind::ReqAbs;
    case RequestKind::Expel: return MsgKind::ReqExp;
    default: return MsgKind::ReqOp;
  }
}

bool kind_matches(const Message& m) {
  return m.request && m.request->kind != RequestKind::Noop && request_kind(m.request->kind) == m.kind;
}

void sort_members(std::vector<NodeId>& v) {
  std::sort(v.begin(), v.end(), [](const NodeId& a, const NodeId& b) { return a.ordinal < b.ordinal; });
}

}  // namespace

void Outbox::append(Outbox other) {
  for (auto& s : other.sends) sends.push_back(std::move(s));
  for (auto& t : other.timers) timers.push_back(t);
  for (auto& d : other.decisions) decisions.push_back(std::move(d));
}

std::size_t max_faulty(std::size_t n) { return n == 0 ? 0 : (n - 1) / 3; }
std::size_t quorum(std::size_t n) { return 2 * max_faulty(n) + 1; }

NodeId next_primary(const std::vector<NodeId>& members, const NodeId& current,
                    const std::optional<NodeId>& skip) {
  std::vector<NodeId> c;
  for (const auto& m : members) {
    if (!skip || m.bcadd != skip->bcadd) c.push_back(m);
  }
  if (c.empty()) throw std::logic_error("no eligible primary");
  sort_members(c);
  for (const auto& m : c) {
    if (m.ordinal > current.ordinal) return m;
  }
  return c.front();
}

Replica::Replica(Identity self, ReplicaConfig cfg) : self_(std::move(self)), cfg_(cfg) {}

Replica::Replica(Identity self, std::vector<NodeId> members, NodeId primary, ReplicaConfig cfg)
    : self_(std::move(self)), cfg_(cfg), members_(std::move(members)), primary_(primary) {
  sort_members(members_);
  n_xi_ = members_.size();
}

Replica Replica::joining(Identity self, ReplicaConfig cfg) {
  Replica r(std::move(self), cfg);
  r.joined_ = false;
  return r;
}

bool Replica::member(const BlockchainAddress& a) const {
  return std::any_of(members_.begin(), members_.end(), [&](const NodeId& n) { return n.bcadd == a; });
}

bool Replica::is_member() const { return joined_ && member(self_.bcadd); }

std::optional<NodeId> Replica::find_member(const BlockchainAddress& a) const {
  for (const auto& n : members_) {
    if (n.bcadd == a) return n;
  }
  return std::nullopt;
}

std::vector<BlockchainAddress> Replica::peers() const {
  std::vector<BlockchainAddress> out;
  for (const auto& n : members_) {
    if (n.bcadd != self_.bcadd) out.push_back(n.bcadd);
  }
  return out;
}

std::vector<BlockchainAddress> Replica::voters() const {
  std::vector<BlockchainAddress> out;
  for (const auto& n : members_) {
    if (!excluded_ || n.bcadd != excluded_->bcadd) out.push_back(n.bcadd);
  }
  return out;
}

std::size_t Replica::count_members(const std::map<BlockchainAddress, Message>& votes) const {
  std::size_t n = 0;
  for (const auto& [sender, _] : votes) {
    if (member(sender) && (!excluded_ || sender != excluded_->bcadd)) ++n;
  }
  return n;
}

NodeId Replica::primary_for(std::uint64_t view) const {
  NodeId p = primary_;
  for (std::uint64_t v = view_; v < view; ++v) p = next_primary(members_, p, excluded_);
  return p;
}

bool Replica::executed(const Request& r) const {
  if (r.kind == RequestKind::Noop) return false;
  auto it = client_marks_.find(r.client);
  return it != client_marks_.end() && r.id <= it->second;
}

Snapshot Replica::snapshot() const {
  Snapshot s;
  s.view = view_;
  s.primary = primary_;
  s.members = members_;
  s.last_executed = last_executed_;
  s.client_marks.assign(client_marks_.begin(), client_marks_.end());
  s.blocks.assign(ledger_.blocks().begin(), ledger_.blocks().end());
  return s;
}

void Replica::arm(TimerInfo info, Tick delay, Outbox& out) {
  const auto token = next_token_++;
  timers_.emplace(token, info);
  out.timers.push_back({delay, token});
}

void Replica::track(const Request& r, Outbox& out) {
  if (r.kind == RequestKind::Noop || executed(r)) return;
  const auto d = digest_of(r);
  if (!pending_.emplace(d, r).second) return;
  if (!is_primary()) arm({TimerKind::Request, view_, d}, cfg_.request_timeout, out);
}

Outbox Replica::on_message(const Message& m) {
  Outbox out;
  if (!joined_) {
    if (m.kind == MsgKind::Welcome) {
      on_welcome(m, out);
    } else if (early_.size() < 4096) {
      early_.push_back(m);
    }
    return out;
  }
  if (m.sender == self_.bcadd || !is_member()) return out;
  if (!message_authentic(m)) {
    ++stats_.rejected_invalid;
    return out;
  }
  switch (m.kind) {
    case MsgKind::ReqAbs:
    case MsgKind::ReqExp:
    case MsgKind::ReqOp: on_request(m, out); break;
    case MsgKind::PrePrepare: on_preprepare(m, out); break;
    case MsgKind::Prepare:
    case MsgKind::Commit: on_vote(m, out); break;
    case MsgKind::ViewChange: on_view_change(m, out); break;
    case MsgKind::NewView: on_new_view(m, out); break;
    case MsgKind::Heartbeat:
    case MsgKind::Reply:
    case MsgKind::Welcome: break;
  }
  return out;
}

void Replica::on_request(const Message& m, Outbox& out) {
  if (!kind_matches(m) || !request_authentic(*m.request)) {
    ++stats_.rejected_invalid;
    return;
  }
  const Request& r = *m.request;
  const auto d = digest_of(r);
  if (executed(r)) {
    // Retransmission of something already done: repeat the reply.
    auto it = last_reply_.find(r.client);
    if (it != last_reply_.end() && it->second.digest == d) out.sends.push_back({{r.client}, it->second});
    return;
  }
  const bool from_client = m.sender == r.client;
  track(r, out);
  if (view_changing_) return;
  if (is_primary()) {
    const bool queued = std::any_of(queue_.begin(), queue_.end(), [&](const Request& q) { return digest_of(q) == d; });
    if (!queued && !proposed_.count(d)) queue_.push_back(r);
    maybe_propose(out);
  } else if (from_client) {
    Message fwd;
    fwd.kind = m.kind;
    fwd.view = view_;
    fwd.request = r;
    sign_message(fwd, self_);
    out.sends.push_back({{primary_.bcadd}, std::move(fwd)});
  }
}

void Replica::maybe_propose(Outbox& out) {
  if (!is_primary() || view_changing_ || !is_member()) return;
  // One proposal in flight at a time.
  if (highest_proposed_ > last_executed_) return;
  while (!queue_.empty()) {
    Request r = queue_.front();
    queue_.pop_front();
    const auto d = digest_of(r);
    if (executed(r) || proposed_.count(d)) continue;
    Message pp;
    pp.kind = MsgKind::PrePrepare;
    pp.view = view_;
    pp.seq = ++highest_proposed_;
    pp.request = std::move(r);
    proposed_.insert(d);
    sign_message(pp, self_);
    out.sends.push_back({peers(), pp});
    accept_preprepare(pp, out);
    return;
  }
}

void Replica::on_preprepare(const Message& m, Outbox& out) {
  if (view_changing_ || m.view != view_ || m.sender != primary_.bcadd) return;
  if (!m.request || !request_authentic(*m.request) || m.seq == 0 ||
      m.seq > last_executed_ + 4 * cfg_.proof_window) {
    ++stats_.rejected_invalid;
    return;
  }
  accept_preprepare(m, out);
}

void Replica::accept_preprepare(const Message& pp, Outbox& out) {
  const auto key = std::make_pair(pp.view, pp.seq);
  const auto d = digest_of(*pp.request);
  if (auto it = accepted_.find(key); it != accepted_.end()) {
    if (digest_of(*it->second.request) != d) ++stats_.conflicting_preprepares;
    return;
  }
  if (pp.seq <= last_executed_) {
    // Only ever vote for what was already executed at that slot.
    auto done = log_.find(pp.seq);
    if (done != log_.end() && done->second.digest != d) {
      ++stats_.conflicting_preprepares;
      return;
    }
  }
  accepted_.emplace(key, pp);
  if (pp.seq > last_executed_) track(*pp.request, out);
  Message p;
  p.kind = MsgKind::Prepare;
  p.view = pp.view;
  p.seq = pp.seq;
  p.digest = d;
  sign_message(p, self_);
  prepares_[{pp.view, pp.seq, d}].emplace(self_.bcadd, p);
  out.sends.push_back({peers(), std::move(p)});
  try_progress(pp.view, pp.seq, out);
}

void Replica::on_vote(const Message& m, Outbox& out) {
  if (excluded_ && m.sender == excluded_->bcadd) {
    ++stats_.discarded_from_excluded;
    return;
  }
  if (m.view < view_) return;
  auto& store = m.kind == MsgKind::Prepare ? prepares_ : commits_;
  store[{m.view, m.seq, m.digest}].emplace(m.sender, m);
  try_progress(m.view, m.seq, out);
}

void Replica::try_progress(std::uint64_t view, std::uint64_t seq, Outbox& out) {
  if (view != view_ || view_changing_) return;
  auto it = accepted_.find({view, seq});
  if (it == accepted_.end()) return;
  const Message& pp = it->second;
  const auto d = digest_of(*pp.request);
  const VoteKey key{view, seq, d};
  const auto q = quorum(members_.size());

  auto prep = prepared_.find(seq);
  const bool prepared_here = prep != prepared_.end() && prep->second.view == view;
  if (!prepared_here && count_members(prepares_[key]) >= q) prepared_[seq] = pp;
  if (!prepared_.count(seq) || prepared_[seq].view != view) return;

  if (commit_sent_.insert({view, seq}).second) {
    Message c;
    c.kind = MsgKind::Commit;
    c.view = view;
    c.seq = seq;
    c.digest = d;
    sign_message(c, self_);
    commits_[key].emplace(self_.bcadd, c);
    out.sends.push_back({peers(), std::move(c)});
  }
  if (seq > last_executed_ && !committed_.count(seq) && count_members(commits_[key]) >= q) {
    committed_.emplace(seq, Decision{view, seq, d, *pp.request});
    execute_ready(out);
  }
}

void Replica::execute_ready(Outbox& out) {
  for (auto it = committed_.find(last_executed_ + 1); it != committed_.end();
       it = committed_.find(last_executed_ + 1)) {
    Decision d = std::move(it->second);
    committed_.erase(it);
    execute(d, out);
  }
  // Anything at or below the executed height is stale.
  committed_.erase(committed_.begin(), committed_.upper_bound(last_executed_));
}

void Replica::execute(const Decision& d, Outbox& out) {
  last_executed_ = d.seq;
  log_[d.seq] = d;
  out.decisions.push_back(d);
  pending_.erase(d.digest);

  const Request& r = d.request;
  const bool fresh = r.kind == RequestKind::Noop || !executed(r);
  bool ok = true;
  bool send_reply = fresh && r.kind != RequestKind::Noop;
  bool welcome = false;
  bool expel_primary = false;

  if (fresh) {
    switch (r.kind) {
      case RequestKind::Absorb: {
        const NodeId& x = *r.subject;
        const bool clash = std::any_of(members_.begin(), members_.end(), [&](const NodeId& n) {
          return n.bcadd == x.bcadd || n.ordinal == x.ordinal;
        });
        if (clash) {
          ok = false;
        } else {
          members_.push_back(x);
          sort_members(members_);
          n_xi_ = members_.size();
          welcome = true;
        }
        break;
      }
      case RequestKind::Expel: {
        const NodeId& x = *r.subject;
        if (!member(x.bcadd)) {
          ok = false;
        } else if (x.bcadd == primary_.bcadd) {
          // Removal waits for the view change that elects a successor.
          excluded_ = *find_member(x.bcadd);
          deferred_expel_ = d;
          send_reply = false;
          expel_primary = true;
        } else {
          std::erase_if(members_, [&](const NodeId& n) { return n.bcadd == x.bcadd; });
          n_xi_ = members_.size();
        }
        break;
      }
      case RequestKind::Operation: {
        try {
          auto [op, rec] = decode_ledger_op(r.operation);
          ok = (op == LedgerOp::Bind ? ledger_.bind(rec) : ledger_.update(rec)).has_value();
        } catch (const DecodeError&) {
          ok = false;
        }
        break;
      }
      case RequestKind::Noop: break;
    }
    if (r.kind != RequestKind::Noop) client_marks_[r.client] = r.id;
  }
  ledger_.commit_block();

  if (welcome) {
    Message w;
    w.kind = MsgKind::Welcome;
    w.view = view_;
    w.seq = d.seq;
    w.snapshot = snapshot();
    sign_message(w, self_);
    out.sends.push_back({{r.subject->bcadd}, std::move(w)});
  }
  if (send_reply) reply(d, ok, out);
  if (expel_primary) {
    start_view_change(view_ + 1, out);
    return;
  }
  maybe_propose(out);
}

void Replica::reply(const Decision& d, bool ok, Outbox& out) {
  Message rp;
  rp.kind = MsgKind::Reply;
  rp.view = view_;
  rp.seq = d.seq;
  rp.digest = d.digest;
  rp.ok = ok;
  rp.node = primary_;
  sign_message(rp, self_);
  last_reply_[d.request.client] = rp;
  out.sends.push_back({{d.request.client}, std::move(rp)});
}

Outbox Replica::on_timer(std::uint64_t token) {
  Outbox out;
  auto it = timers_.find(token);
  if (it == timers_.end()) return out;
  const TimerInfo info = it->second;
  timers_.erase(it);
  if (!is_member()) return out;
  if (info.kind == TimerKind::Request) {
    if (view_changing_ || info.view != view_ || !pending_.count(info.digest)) return out;
    start_view_change(view_ + 1, out);
  } else if (view_changing_ && vc_target_ == info.view && !(excluded_ && excluded_->bcadd == self_.bcadd)) {
    start_view_change(info.view + 1, out);
  }
  return out;
}

PreparedProof Replica::proof_for(const Message& pp) const {
  PreparedProof p;
  p.preprepare = pp;
  auto it = prepares_.find({pp.view, pp.seq, digest_of(*pp.request)});
  if (it != prepares_.end()) {
    for (const auto& [sender, msg] : it->second) {
      if (member(sender)) p.prepares.push_back(msg);
    }
  }
  return p;
}

void Replica::start_view_change(std::uint64_t view, Outbox& out) {
  if (view <= view_ || (view_changing_ && vc_target_ >= view)) return;
  view_changing_ = true;
  vc_target_ = view;
  ++stats_.view_changes_started;

  Message vc;
  vc.kind = MsgKind::ViewChange;
  vc.view = view;
  vc.node = excluded_;
  vc.last_executed = last_executed_;
  for (const auto& [seq, pp] : prepared_) {
    if (seq + cfg_.proof_window <= last_executed_) continue;
    // Attach only proofs the others can check.
    auto proof = proof_for(pp);
    if (valid_proof(proof)) vc.proofs.push_back(std::move(proof));
  }
  sign_message(vc, self_);
  view_changes_[view].insert_or_assign(self_.bcadd, vc);
  std::vector<BlockchainAddress> to;
  for (const auto& a : voters()) {
    if (a != self_.bcadd) to.push_back(a);
  }
  out.sends.push_back({std::move(to), std::move(vc)});
  arm({TimerKind::ViewChange, view, {}}, cfg_.view_change_timeout * (view - view_), out);
  try_new_view(view, out);
}

bool Replica::valid_proof(const PreparedProof& p) const {
  const Message& pp = p.preprepare;
  if (pp.kind != MsgKind::PrePrepare || !pp.request || pp.seq == 0) return false;
  // The proposer may since have been expelled; the Prepare quorum is what
  // certifies the slot.
  if (!message_authentic(pp) || !request_authentic(*pp.request)) return false;
  const auto d = digest_of(*pp.request);
  std::set<BlockchainAddress> seen;
  for (const auto& q : p.prepares) {
    if (q.kind != MsgKind::Prepare || q.view != pp.view || q.seq != pp.seq || q.digest != d) return false;
    // The node being excluded was a member when it prepared, so its vote
    // still certifies the slot. Nodes already removed are skipped.
    if (!member(q.sender)) continue;
    if (!message_authentic(q)) return false;
    seen.insert(q.sender);
  }
  return seen.size() >= quorum(members_.size());
}

bool Replica::valid_view_change(const Message& vc, std::uint64_t view) const {
  if (vc.kind != MsgKind::ViewChange || vc.view != view || !member(vc.sender)) return false;
  if (excluded_ && vc.sender == excluded_->bcadd) return false;
  for (const auto& p : vc.proofs) {
    if (p.preprepare.view >= view || !valid_proof(p)) return false;
  }
  return true;
}

std::vector<const Message*> Replica::counted_view_changes(std::uint64_t view) const {
  std::vector<const Message*> out;
  auto it = view_changes_.find(view);
  if (it == view_changes_.end()) return out;
  for (const auto& [sender, vc] : it->second) {
    const bool voter = member(sender) && (!excluded_ || sender != excluded_->bcadd);
    if (voter && vc.node == excluded_) out.push_back(&vc);
  }
  return out;
}

std::vector<Message> Replica::reproposals(std::uint64_t view, const std::vector<const Message*>& vcs) const {
  std::uint64_t low = UINT64_MAX;
  std::uint64_t high = 0;
  std::map<std::uint64_t, const Message*> best;
  for (const auto* vc : vcs) {
    low = std::min(low, vc->last_executed);
    for (const auto& p : vc->proofs) {
      const Message& pp = p.preprepare;
      high = std::max(high, pp.seq);
      auto& slot = best[pp.seq];
      if (!slot || pp.view > slot->view ||
          (pp.view == slot->view && digest_of(*pp.request) < digest_of(*slot->request))) {
        slot = &pp;
      }
    }
  }
  std::vector<Message> out;
  if (vcs.empty()) return out;
  for (std::uint64_t s = low + 1; s <= high; ++s) {
    Message pp;
    pp.kind = MsgKind::PrePrepare;
    pp.view = view;
    pp.seq = s;
    auto it = best.find(s);
    pp.request = it != best.end() ? *it->second->request : noop_request();
    out.push_back(std::move(pp));
  }
  return out;
}

void Replica::on_view_change(const Message& m, Outbox& out) {
  if (m.view <= view_) return;
  if ((excluded_ && m.sender == excluded_->bcadd) || (m.node && m.node->bcadd == m.sender)) {
    ++stats_.discarded_from_excluded;
    return;
  }
  if (!valid_view_change(m, m.view)) {
    ++stats_.rejected_invalid;
    return;
  }
  view_changes_[m.view].emplace(m.sender, m);

  // Join a view change that f + 1 others already want.
  const std::uint64_t floor = view_changing_ ? vc_target_ : view_;
  std::map<BlockchainAddress, const Message*> ahead;
  for (const auto& [v, by_sender] : view_changes_) {
    if (v <= floor) continue;
    for (const auto& [sender, vc] : by_sender) {
      if (sender == self_.bcadd || !member(sender)) continue;
      auto& slot = ahead[sender];
      if (!slot || vc.view < slot->view) slot = &vc;
    }
  }
  const auto f = max_faulty(members_.size());
  if (ahead.size() >= f + 1) {
    if (!excluded_) {
      std::map<BlockchainAddress, std::pair<NodeId, std::size_t>> claims;
      for (const auto& [_, vc] : ahead) {
        if (vc->node && member(vc->node->bcadd)) {
          auto& c = claims[vc->node->bcadd];
          c.first = *vc->node;
          ++c.second;
        }
      }
      for (const auto& [_, c] : claims) {
        if (c.second >= f + 1) excluded_ = *find_member(c.first.bcadd);
      }
    }
    std::vector<std::uint64_t> views;
    for (const auto& [_, vc] : ahead) views.push_back(vc->view);
    std::sort(views.begin(), views.end());
    // The smallest view that f + 1 senders have reached.
    start_view_change(views[views.size() - (f + 1)], out);
  }
  try_new_view(m.view, out);
}

void Replica::try_new_view(std::uint64_t view, Outbox& out) {
  if (!view_changing_ || vc_target_ != view) return;
  if (primary_for(view).bcadd != self_.bcadd) return;
  auto vcs = counted_view_changes(view);
  if (vcs.size() < quorum(members_.size())) return;

  Message nv;
  nv.kind = MsgKind::NewView;
  nv.view = view;
  std::vector<BlockchainAddress> senders;
  for (const auto* vc : vcs) {
    nv.view_changes.push_back(*vc);
    senders.push_back(vc->sender);
  }
  auto pps = reproposals(view, vcs);
  for (auto& pp : pps) sign_message(pp, self_);
  nv.preprepares = pps;
  sign_message(nv, self_);
  std::vector<BlockchainAddress> to;
  for (const auto& a : voters()) {
    if (a != self_.bcadd) to.push_back(a);
  }
  out.sends.push_back({std::move(to), std::move(nv)});
  enter_view(view, pps, senders, out);
}

void Replica::on_new_view(const Message& m, Outbox& out) {
  if (m.view <= view_) return;
  const auto f = max_faulty(members_.size());
  if (!excluded_) {
    // A lagging node learns the exclusion from f + 1 voters that agree on it.
    std::map<BlockchainAddress, std::size_t> claims;
    for (const auto& vc : m.view_changes) {
      if (vc.node && member(vc.node->bcadd) && member(vc.sender) && message_authentic(vc)) ++claims[vc.node->bcadd];
    }
    for (const auto& [who, n] : claims) {
      if (n >= f + 1) excluded_ = *find_member(who);
    }
  }
  if (m.sender != primary_for(m.view).bcadd) {
    ++stats_.rejected_invalid;
    return;
  }
  std::set<BlockchainAddress> seen;
  std::vector<const Message*> vcs;
  for (const auto& vc : m.view_changes) {
    if (excluded_ && vc.sender == excluded_->bcadd) {
      ++stats_.discarded_from_excluded;
      continue;
    }
    if (vc.node != excluded_ || !message_authentic(vc) || !valid_view_change(vc, m.view)) {
      ++stats_.rejected_invalid;
      return;
    }
    if (seen.insert(vc.sender).second) vcs.push_back(&vc);
  }
  if (vcs.size() < quorum(members_.size())) {
    ++stats_.rejected_invalid;
    return;
  }
  const auto expected = reproposals(m.view, vcs);
  if (expected.size() != m.preprepares.size()) {
    ++stats_.rejected_invalid;
    return;
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const Message& pp = m.preprepares[i];
    if (pp.kind != MsgKind::PrePrepare || pp.view != m.view || pp.seq != expected[i].seq || !pp.request ||
        pp.sender != m.sender || digest_of(*pp.request) != digest_of(*expected[i].request) ||
        !message_authentic(pp)) {
      ++stats_.rejected_invalid;
      return;
    }
  }
  std::vector<BlockchainAddress> senders(seen.begin(), seen.end());
  enter_view(m.view, m.preprepares, senders, out);
}

void Replica::enter_view(std::uint64_t view, const std::vector<Message>& preprepares,
                         const std::vector<BlockchainAddress>& voters, Outbox& out) {
  const NodeId next = primary_for(view);
  view_ = view;
  primary_ = next;
  view_changing_ = false;
  vc_history_.push_back({view, next, excluded_, voters});
  if (excluded_) {
    std::erase_if(members_, [&](const NodeId& n) { return n.bcadd == excluded_->bcadd; });
    n_xi_ = members_.size();
    excluded_.reset();
    if (deferred_expel_) {
      reply(*deferred_expel_, true, out);
      deferred_expel_.reset();
    }
  }
  view_changes_.erase(view_changes_.begin(), view_changes_.upper_bound(view));
  proposed_.clear();
  queue_.clear();
  highest_proposed_ = last_executed_;
  for (const auto& pp : preprepares) {
    highest_proposed_ = std::max(highest_proposed_, pp.seq);
    proposed_.insert(digest_of(*pp.request));
  }
  if (!is_member()) return;
  for (const auto& pp : preprepares) accept_preprepare(pp, out);

  // Requests still outstanding go to the new primary.
  for (const auto& [d, r] : pending_) {
    if (executed(r) || proposed_.count(d)) continue;
    if (is_primary()) {
      queue_.push_back(r);
    } else {
      Message fwd;
      fwd.kind = request_kind(r.kind);
      fwd.view = view_;
      fwd.request = r;
      sign_message(fwd, self_);
      out.sends.push_back({{primary_.bcadd}, std::move(fwd)});
      arm({TimerKind::Request, view_, d}, cfg_.request_timeout, out);
    }
  }
  execute_ready(out);
  maybe_propose(out);
}

void Replica::on_welcome(const Message& m, Outbox& out) {
  if (!m.snapshot || !message_authentic(m)) return;
  const Snapshot& s = *m.snapshot;
  auto in = [&](const BlockchainAddress& a) {
    return std::any_of(s.members.begin(), s.members.end(), [&](const NodeId& n) { return n.bcadd == a; });
  };
  if (m.sender == self_.bcadd || !in(m.sender) || !in(self_.bcadd)) return;
  const auto d = digest_of(s);
  welcome_votes_[d].insert(m.sender);
  welcome_snapshots_.emplace(d, s);
  // f + 1 matching snapshots from the group as it was before this node.
  const auto need = max_faulty(s.members.size() - 1) + 1;
  if (welcome_votes_[d].size() < need) return;
  if (!bedns::verify_chain(s.blocks)) return;

  members_ = s.members;
  sort_members(members_);
  n_xi_ = members_.size();
  view_ = s.view;
  primary_ = s.primary;
  last_executed_ = s.last_executed;
  highest_proposed_ = s.last_executed;
  client_marks_ = {s.client_marks.begin(), s.client_marks.end()};
  ledger_ = bedns::Ledger::from_blocks(s.blocks);
  joined_ = true;
  welcome_votes_.clear();
  welcome_snapshots_.clear();
  auto early = std::move(early_);
  early_.clear();
  for (const auto& msg : early) out.append(on_message(msg));
}

}  // namespace beacons::consensus
