#include "beacons/consensus/byzantine.hpp"

namespace beacons::consensus {
namespace {

std::vector<BlockchainAddress> others(const Replica& r) {
  std::vector<BlockchainAddress> out;
  for (const auto& m : r.members()) {
    if (m.bcadd != r.bcadd()) out.push_back(m.bcadd);
  }
  return out;
}

}  // namespace

ByzantineReplica::ByzantineReplica(Replica inner, std::uint64_t seed, ByzantineConfig cfg)
    : inner_(std::move(inner)), rng_(seed), cfg_(cfg) {}

Outbox ByzantineReplica::on_message(const Message& m) {
  if (m.request && m.request->kind != RequestKind::Noop && seen_.size() < 32) seen_.push_back(*m.request);
  auto out = corrupt(inner_.on_message(m));
  if (rng_.bernoulli(cfg_.false_view_change)) false_view_change(out);
  return out;
}

Outbox ByzantineReplica::on_timer(std::uint64_t token) { return corrupt(inner_.on_timer(token)); }

Request ByzantineReplica::alternative(const Request& r) {
  const auto d = digest_of(r);
  std::vector<const Request*> pool;
  for (const auto& s : seen_) {
    if (digest_of(s) != d) pool.push_back(&s);
  }
  // Half the time a replayed client request, otherwise a Noop.
  if (!pool.empty() && rng_.bernoulli(0.5)) return *pool[rng_.below(pool.size())];
  return noop_request();
}

Outbox ByzantineReplica::corrupt(Outbox out) {
  std::vector<Send> sends;
  for (auto& s : out.sends) {
    Message& m = s.msg;
    if (m.kind == MsgKind::PrePrepare && s.to.size() >= 2 && rng_.bernoulli(cfg_.equivocate)) {
      Message alt = m;
      alt.request = alternative(*m.request);
      if (digest_of(*alt.request) == digest_of(*m.request)) {
        sends.push_back(std::move(s));
        continue;
      }
      inner_.sign(alt);
      // Split the recipients so that both versions reach someone.
      std::vector<BlockchainAddress> a, b;
      const std::size_t pivot = rng_.below(s.to.size());
      for (std::size_t i = 0; i < s.to.size(); ++i) {
        (i == pivot || (i != (pivot + 1) % s.to.size() && rng_.bernoulli(0.5)) ? b : a).push_back(s.to[i]);
      }
      ++stats_.equivocations;
      sends.push_back({std::move(a), m});
      sends.push_back({std::move(b), std::move(alt)});
      continue;
    }
    if ((m.kind == MsgKind::Prepare || m.kind == MsgKind::Commit) && rng_.bernoulli(cfg_.double_vote)) {
      Message alt = m;
      alt.digest = rng_.bernoulli(0.5) ? digest_of(noop_request()) : Digest{rng_.bytes<32>()};
      inner_.sign(alt);
      ++stats_.double_votes;
      sends.push_back({s.to, std::move(alt)});
    }
    if (m.kind == MsgKind::ViewChange && rng_.bernoulli(cfg_.forge_proof)) {
      m.proofs.push_back(forged_proof());
      inner_.sign(m);
      ++stats_.forged_proofs;
    }
    sends.push_back(std::move(s));
  }
  out.sends = std::move(sends);
  return out;
}

PreparedProof ByzantineReplica::forged_proof() {
  PreparedProof p;
  Message& pp = p.preprepare;
  pp.kind = MsgKind::PrePrepare;
  pp.view = inner_.view();
  pp.seq = inner_.last_executed() + 1;
  pp.request = alternative(noop_request());
  inner_.sign(pp);
  const auto d = digest_of(*pp.request);
  for (const auto& m : inner_.members()) {
    Message q;
    q.kind = MsgKind::Prepare;
    q.view = pp.view;
    q.seq = pp.seq;
    q.digest = d;
    inner_.sign(q);
    // Claim the vote came from someone else; the key cannot back that up.
    q.sender = m.bcadd;
    p.prepares.push_back(std::move(q));
  }
  return p;
}

void ByzantineReplica::false_view_change(Outbox& out) {
  const auto to = others(inner_);
  if (to.empty() || !inner_.is_member()) return;
  Message vc;
  vc.kind = MsgKind::ViewChange;
  vc.view = inner_.view() + 1 + rng_.below(2);
  const auto& members = inner_.members();
  const NodeId& accused = members[rng_.below(members.size())];
  if (accused.bcadd != inner_.bcadd()) vc.node = accused;
  vc.last_executed = inner_.last_executed();
  if (rng_.bernoulli(cfg_.forge_proof)) {
    vc.proofs.push_back(forged_proof());
    ++stats_.forged_proofs;
  }
  inner_.sign(vc);
  ++stats_.false_view_changes;
  out.sends.push_back({to, std::move(vc)});
}

}  // namespace beacons::consensus
