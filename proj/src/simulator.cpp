#include "beacons/simnet/simulator.hpp"

#include <json.hpp>
#include <stdexcept>

namespace beacons::simnet {

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Deliver: return "deliver";
    case EventKind::Timer: return "timer";
    case EventKind::Move: return "move";
    case EventKind::Fault: return "fault";
  }
  return "?";
}

const char* to_string(Link l) { return l == Link::Wireless ? "wireless" : "internet"; }

const char* to_string(Category c) {
  switch (c) {
    case Category::Service: return "service";
    case Category::Consensus: return "consensus";
    case Category::Heartbeat: return "heartbeat";
    case Category::Handshake: return "handshake";
  }
  return "?";
}

Simulator::Simulator(NetworkConfig cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(seed), net_rng_(rng_.split("network")) {}

EndpointId Simulator::add_endpoint(EndpointSpec spec) {
  endpoints_.push_back({std::move(spec), std::nullopt});
  return static_cast<EndpointId>(endpoints_.size() - 1);
}

void Simulator::set_handler(EndpointId id, Handler h) { endpoints_.at(id).spec.handler = std::move(h); }
void Simulator::set_filter(EndpointId id, Filter f) { endpoints_.at(id).spec.filter = std::move(f); }

void Simulator::schedule(Tick delay, EventKind kind, std::string actor, std::string detail,
                         std::function<void()> action) {
  queue_.push(Event{now_ + delay, next_seq_++, kind, std::move(actor), std::move(detail),
                    std::move(action)});
}

void Simulator::schedule_timer(Tick delay, EndpointId owner, std::string detail,
                               std::function<void()> fn) {
  schedule(delay, EventKind::Timer, name(owner), std::move(detail), std::move(fn));
}

void Simulator::schedule_move(Tick delay, EndpointId id, Trajectory trajectory) {
  schedule(delay, EventKind::Move, name(id), "trajectory",
           [this, id, t = std::move(trajectory)] { endpoints_.at(id).spec.position = t; });
}

void Simulator::schedule_silence(Tick delay, EndpointId id) {
  // Takes effect for the whole tick, including events queued before this one.
  auto& from = endpoints_.at(id).silenced_from;
  const Tick at = now_ + delay;
  if (!from || at < *from) from = at;
  schedule(delay, EventKind::Fault, name(id), "silence", [] {});
}

Tick Simulator::link_delay(Link link) {
  Tick base = link == Link::Wireless ? cfg_.wireless_delay : cfg_.internet_delay;
  if (cfg_.jitter > 0) base += net_rng_.below(cfg_.jitter + 1);
  return base;
}

void Simulator::send(EndpointId from, EndpointId to, Link link, Category category, std::string kind,
                     std::any body, std::string detail) {
  ++stats_.sent;
  Packet p{from, to, link, category, std::move(kind), std::move(detail), std::move(body)};
  const auto& src = endpoints_.at(from);
  const auto& dst = endpoints_.at(to);
  auto describe = [&](const char* outcome) {
    return p.kind + " " + src.spec.name + "->" + dst.spec.name + " " + to_string(link) + " " + outcome;
  };
  if (silenced(from)) {
    ++stats_.dropped_fault;
    record(now_, next_seq_++, EventKind::Fault, src.spec.name, describe("dropped:fault"));
    return;
  }
  const bool routable = link == Link::Wireless ? (src.spec.wireless && dst.spec.wireless)
                                               : (src.spec.internet && dst.spec.internet);
  if (!routable) {
    ++stats_.dropped_unroutable;
    record(now_, next_seq_++, EventKind::Deliver, src.spec.name, describe("dropped:unroutable"));
    return;
  }
  const auto delay = link_delay(link);
  schedule(delay, EventKind::Deliver, dst.spec.name, "", [this, p = std::move(p)]() mutable {
    deliver(std::move(p));
  });
}

void Simulator::broadcast_wireless(EndpointId from, Category category, std::string kind,
                                   const std::any& body, std::optional<Tick> delay) {
  for (EndpointId to = 0; to < endpoints_.size(); ++to) {
    if (to == from || !endpoints_[to].spec.wireless) continue;
    if (!delay) {
      send(from, to, Link::Wireless, category, kind, body);
      continue;
    }
    ++stats_.sent;
    if (silenced(from)) {
      ++stats_.dropped_fault;
      record(now_, next_seq_++, EventKind::Fault, name(from), kind + " dropped:fault");
      continue;
    }
    Packet p{from, to, Link::Wireless, category, kind, {}, body};
    schedule(*delay, EventKind::Deliver, name(to), "", [this, p = std::move(p)]() mutable {
      deliver(std::move(p));
    });
  }
}

void Simulator::broadcast_heartbeat(EndpointId rsu, Tick period, std::function<std::any()> make_body) {
  if (period == 0) throw std::invalid_argument("heartbeat period must be positive");
  auto beat = std::make_shared<std::function<void()>>();
  *beat = [this, rsu, period, make_body = std::move(make_body), beat_weak = std::weak_ptr(beat)] {
    broadcast_wireless(rsu, Category::Heartbeat, "Heartbeat", make_body(), Tick{0});
    if (auto self = beat_weak.lock()) {
      schedule(period, EventKind::Timer, name(rsu), "heartbeat", [self] { (*self)(); });
    }
  };
  schedule(0, EventKind::Timer, name(rsu), "heartbeat", [beat] { (*beat)(); });
}

std::optional<Vec2> Simulator::position(EndpointId id) const {
  const auto& t = endpoints_.at(id).spec.position;
  if (!t) return std::nullopt;
  return t(now_);
}

bool Simulator::in_range(EndpointId a, EndpointId b) const {
  auto pa = position(a);
  auto pb = position(b);
  return pa && pb && cfg_.wireless.in_range(*pa, *pb);
}

void Simulator::deliver(Packet p) {
  const auto& dst = endpoints_.at(p.to);
  const auto& src_name = name(p.from);
  std::string what = p.kind + " " + src_name + "->" + dst.spec.name + " " + to_string(p.link);
  if (p.link == Link::Wireless && !in_range(p.from, p.to)) {
    ++stats_.dropped_range;
    trace_detail_ = what + " dropped:range";
    return;
  }
  if (dst.spec.filter && !dst.spec.filter(p)) {
    ++stats_.dropped_isolation;
    trace_detail_ = what + " dropped:isolation";
    return;
  }
  ++stats_.delivered;
  trace_detail_ = what + " delivered";
  if (dst.spec.handler) dst.spec.handler(p);
}

void Simulator::record(Tick tick, std::uint64_t seq, EventKind kind, const std::string& actor,
                       const std::string& detail) {
  if (!tracing_) return;
  nlohmann::json j{{"tick", tick}, {"seq", seq}, {"event", to_string(kind)}, {"actor", actor},
                   {"detail", detail}};
  trace_.push_back(j.dump());
}

bool Simulator::step() {
  if (queue_.empty()) return false;
  const Tick tick = queue_.top().tick;
  if (tick < now_) throw std::logic_error("event scheduled in the past");
  now_ = tick;
  while (!queue_.empty() && queue_.top().tick == tick) {
    Event ev = queue_.top();
    queue_.pop();
    trace_detail_.clear();
    if (ev.action) ev.action();
    record(ev.tick, ev.seq, ev.kind, ev.actor, trace_detail_.empty() ? ev.detail : trace_detail_);
  }
  return true;
}

void Simulator::run(Tick horizon) {
  while (!queue_.empty() && queue_.top().tick < horizon) step();
  if (now_ < horizon) now_ = horizon;
}

}  // namespace beacons::simnet
