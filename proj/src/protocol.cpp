#include "beacons/protocol.hpp"

#include <algorithm>
#include <deque>
#include <memory>
#include <numbers>
#include <set>

#include "beacons/bemutual.hpp"
#include "beacons/vehicle.hpp"

namespace beacons::protocol {
namespace {

using consensus::ByzantineReplica;
using consensus::Client;
using consensus::ClientError;
using consensus::Completion;
using consensus::Message;
using consensus::MsgKind;
using consensus::NodeId;
using consensus::Outbox;
using consensus::Replica;
using consensus::RequestKind;
using simnet::Category;
using simnet::EndpointId;
using simnet::Link;
using simnet::Packet;
using simnet::Tick;
using MessagePtr = std::shared_ptr<const Message>;

// Ticks the network gets to drain after a scenario reaches its goal.
constexpr Tick kSettle = 30;

struct Lookup {
  std::uint64_t id = 0;
  BlockchainAddress query;
};

struct LookupReply {
  std::uint64_t id = 0;
  bool found = false;
};

const nlohmann::json& default_world() {
  static const nlohmann::json w = nlohmann::json::parse(R"({
    "participants": [
      {"name": "car-a", "kind": "vehicle", "position": [0, 0],
       "units": [{"name": "obu", "type": "I"}, {"name": "camera", "type": "IIA", "exported": true},
                 {"name": "ecu", "type": "IIB"}]},
      {"name": "car-b", "kind": "vehicle", "position": [6, 0],
       "units": [{"name": "obu", "type": "I"}, {"name": "camera", "type": "IIA", "exported": true},
                 {"name": "ecu", "type": "IIB"}]}
    ]})");
  return w;
}

bool is_request(MsgKind k) { return k == MsgKind::ReqAbs || k == MsgKind::ReqExp || k == MsgKind::ReqOp; }

std::size_t threshold_for(RequestKind k, std::size_t n_v) {
  switch (k) {
    case RequestKind::Absorb: return consensus::absorb_threshold(n_v);
    case RequestKind::Expel: return consensus::expel_threshold(n_v);
    default: return consensus::max_faulty(n_v) + 1;
  }
}

class Run {
 public:
  explicit Run(const ProtocolConfig& cfg);
  ProtocolReport go();

 private:
  struct Rsu {
    std::string name;
    Identity id;
    NodeId node;
    EndpointId ep = 0;
    vehicle::Participant part;
    std::optional<Replica> honest;
    std::optional<ByzantineReplica> byz;
    bool silenced = false;
    MessagePtr heartbeat;

    const Replica& replica() const { return byz ? byz->inner() : *honest; }
    Outbox on_message(const Message& m) { return byz ? byz->on_message(m) : honest->on_message(m); }
    Outbox on_timer(std::uint64_t t) { return byz ? byz->on_timer(t) : honest->on_timer(t); }
    bool correct() const { return !byz && !silenced; }
  };
  struct Car {
    std::string name;
    Identity id;
    EndpointId ep = 0;
    std::optional<Client> client;
    std::deque<Bytes> ops;
    std::size_t seen = 0;  // completions already handled
  };
  struct Issued {
    RequestKind kind;
    std::size_t n_v;
    Digest digest;
  };

  Tick now() const { return sim_.now(); }
  void add_rsu(std::size_t ordinal, Vec2 at, bool joining);
  std::size_t add_car(const std::string& name, const Identity& id, simnet::Trajectory where);
  void start_heartbeats();

  void dispatch(EndpointId from, Outbox out);
  void on_timer(EndpointId owner, std::uint64_t token);
  void on_rsu_packet(std::size_t i, const Packet& p);
  void on_car_packet(std::size_t c, const Packet& p);
  void step_client(std::size_t c, Outbox out);
  void issue(std::size_t c, Expected<Outbox, ClientError> out, RequestKind kind);
  void submit_next(std::size_t c);
  void on_completion(std::size_t c, const Completion& done);
  void goal() {
    if (!goal_at_) goal_at_ = now();
  }

  void try_absorb(std::size_t c, const Message& heartbeat);
  void watch(std::size_t c);
  void relay();
  void lookups();

  Bytes bind_op(const Car& car, std::uint64_t k) const;
  std::string name_of(const BlockchainAddress& a) const;
  const Rsu* reference() const;
  void finish_checks();

  ProtocolConfig cfg_;
  simnet::Simulator sim_;
  simnet::Rng rng_;
  std::deque<Rsu> rsus_;
  std::deque<Car> cars_;
  std::map<BlockchainAddress, EndpointId> ep_of_;
  std::map<EndpointId, std::size_t> rsu_at_;
  std::map<EndpointId, std::size_t> car_at_;
  std::vector<NodeId> members_;
  NodeId primary_;
  SafetyMonitor monitor_;
  ProtocolReport report_;
  bemutual::HandshakeLog hs_log_;
  std::map<std::pair<std::size_t, std::uint64_t>, Issued> issued_;
  std::map<Digest, std::set<BlockchainAddress>> valid_replies_;
  std::vector<Completion> local_failures_;
  std::vector<Check> thresholds_;
  std::optional<Tick> goal_at_;
  std::optional<std::size_t> joiner_;
  std::optional<NodeId> expelled_;
  bool handshake_tried_ = false;
  bool expel_issued_ = false;
  std::uint64_t isolation_breaches_ = 0;

  // isolation
  std::optional<EndpointId> edge_ep_;
  std::optional<EndpointId> cloud_ep_;
  bedns::Ledger edge_ledger_;
  std::uint64_t next_lookup_ = 1;

  // interlayer
  std::optional<vehicle::World> world_;
  std::vector<Check> relay_checks_;
};

Run::Run(const ProtocolConfig& cfg)
    : cfg_(cfg),
      sim_(simnet::NetworkConfig{{7.0}, 1, 1, cfg.jitter}, cfg.seed),
      rng_(simnet::derive_seed(cfg.seed, "protocol")) {
  sim_.set_tracing(cfg.trace);
  report_.config = cfg;
}

void Run::add_rsu(std::size_t ordinal, Vec2 at, bool joining) {
  Rsu& r = rsus_.emplace_back();
  const std::size_t i = rsus_.size() - 1;
  r.name = "rsu-" + std::to_string(ordinal);
  r.id = Identity::derived(cfg_.seed, r.name);
  r.node = {r.id.bcadd, static_cast<std::uint32_t>(ordinal)};
  r.part.kind = vehicle::ParticipantKind::Rsu;
  r.part.name = r.name;
  r.part.id = r.id;
  r.part.position = at;
  r.part.interfaces = {{AddressKind::WirelessDirect, "wd:" + r.name}, {AddressKind::Internet, "inet:" + r.name}};
  if (joining) {
    r.honest.emplace(Replica::joining(r.id));
  }
  const vehicle::Participant* part = &r.part;
  r.ep = sim_.add_endpoint({r.name, true, true, [at](Tick) { return at; },
                            [this, i](const Packet& p) { on_rsu_packet(i, p); },
                            [part](const Packet& p) { return vehicle::enforce_isolation(*part, p.link, p.category); }});
  ep_of_[r.id.bcadd] = r.ep;
  rsu_at_[r.ep] = i;
  Message hb;
  hb.kind = MsgKind::Heartbeat;
  consensus::sign_message(hb, r.id);
  r.heartbeat = std::make_shared<const Message>(std::move(hb));
}

std::size_t Run::add_car(const std::string& name, const Identity& id, simnet::Trajectory where) {
  Car& c = cars_.emplace_back();
  const std::size_t i = cars_.size() - 1;
  c.name = name;
  c.id = id;
  c.ep = sim_.add_endpoint({name, true, true, std::move(where), [this, i](const Packet& p) { on_car_packet(i, p); }, {}});
  c.client.emplace(id, members_, primary_, now(), consensus::ClientConfig{60, 4, cfg_.heartbeat});
  ep_of_[id.bcadd] = c.ep;
  car_at_[c.ep] = i;
  return i;
}

void Run::start_heartbeats() {
  for (auto& r : rsus_) {
    MessagePtr hb = r.heartbeat;
    sim_.broadcast_heartbeat(r.ep, cfg_.heartbeat.period, [hb] { return std::any(hb); });
  }
}

std::string Run::name_of(const BlockchainAddress& a) const {
  for (const auto& r : rsus_) {
    if (r.id.bcadd == a) return r.name;
  }
  for (const auto& c : cars_) {
    if (c.id.bcadd == a) return c.name;
  }
  return a.short_hex();
}

const Run::Rsu* Run::reference() const {
  for (const auto& r : rsus_) {
    if (r.correct() && r.replica().is_member() && (!expelled_ || r.id.bcadd != expelled_->bcadd)) return &r;
  }
  return nullptr;
}

Bytes Run::bind_op(const Car& car, std::uint64_t k) const {
  const NetworkAddress add{AddressKind::Internet, "inet:" + car.name + "/" + std::to_string(k)};
  auto rec = bedns::make_class_one(car.id, add, {k + 1});
  return consensus::encode_ledger_op(k == 0 ? consensus::LedgerOp::Bind : consensus::LedgerOp::Update, rec);
}

void Run::dispatch(EndpointId from, Outbox out) {
  auto rsu = rsu_at_.find(from);
  if (rsu != rsu_at_.end()) {
    const Rsu& r = rsus_[rsu->second];
    for (const auto& d : out.decisions) {
      if (r.correct()) monitor_.record(r.id.bcadd, d);
    }
  }
  for (const auto& t : out.timers) {
    sim_.schedule_timer(t.delay, from, "timer", [this, from, token = t.token] { on_timer(from, token); });
  }
  const bool from_rsu = rsu != rsu_at_.end();
  for (auto& s : out.sends) {
    auto msg = std::make_shared<const Message>(std::move(s.msg));
    if (cfg_.trace) report_.messages.push_back(consensus::trace_line(now(), *msg));
    const Category cat = is_request(msg->kind) && !from_rsu ? Category::Service : Category::Consensus;
    for (const auto& to : s.to) {
      auto it = ep_of_.find(to);
      if (it == ep_of_.end()) continue;
      const Link link = from_rsu && rsu_at_.count(it->second) ? Link::Internet : Link::Wireless;
      sim_.send(from, it->second, link, cat, consensus::to_string(msg->kind), msg);
    }
  }
}

void Run::on_timer(EndpointId owner, std::uint64_t token) {
  if (auto r = rsu_at_.find(owner); r != rsu_at_.end()) {
    dispatch(owner, rsus_[r->second].on_timer(token));
  } else if (auto c = car_at_.find(owner); c != car_at_.end()) {
    step_client(c->second, cars_[c->second].client->on_timer(token, now()));
  }
}

void Run::on_rsu_packet(std::size_t i, const Packet& p) {
  Rsu& r = rsus_[i];
  if (p.category == Category::Heartbeat) return;
  if (const auto* q = std::any_cast<Lookup>(&p.body)) {
    if (p.link == Link::Internet) {
      ++report_.isolation.rsu_internet_serviced;
      ++isolation_breaches_;
    } else {
      ++report_.isolation.rsu_wireless_serviced;
    }
    const bool found = r.replica().ledger().resolve(q->query).has_value();
    sim_.send(r.ep, p.from, p.link, Category::Service, "LookupReply", LookupReply{q->id, found});
    return;
  }
  if (p.link == Link::Internet && p.category == Category::Service) ++isolation_breaches_;
  if (const auto* m = std::any_cast<MessagePtr>(&p.body)) dispatch(r.ep, r.on_message(**m));
}

void Run::on_car_packet(std::size_t c, const Packet& p) {
  Car& car = cars_[c];
  if (const auto* a = std::any_cast<LookupReply>(&p.body)) {
    if (a->found) ++report_.isolation.answers;
    return;
  }
  const auto* mp = std::any_cast<MessagePtr>(&p.body);
  if (!mp) return;
  const Message& m = **mp;
  if (m.kind == MsgKind::Heartbeat) {
    step_client(c, car.client->on_message(m, now()));
    try_absorb(c, m);
    return;
  }
  if (m.kind == MsgKind::Reply && m.ok && !car.client->ignores(m.sender)) {
    const auto& known = car.client->known_members();
    const bool member = std::any_of(known.begin(), known.end(), [&](const NodeId& n) { return n.bcadd == m.sender; });
    if (member && consensus::message_authentic(m)) valid_replies_[m.digest].insert(m.sender);
  }
  step_client(c, car.client->on_message(m, now()));
}

void Run::step_client(std::size_t c, Outbox out) {
  Car& car = cars_[c];
  dispatch(car.ep, std::move(out));
  const auto& done = car.client->completions();
  while (car.seen < done.size()) on_completion(c, done[car.seen++]);
}

void Run::issue(std::size_t c, Expected<Outbox, ClientError> out, RequestKind kind) {
  Car& car = cars_[c];
  if (!out) {
    Completion f;
    f.kind = kind;
    f.error = out.error();
    f.at = now();
    f.n_v_after = car.client->n_v();
    local_failures_.push_back(f);
    goal();
    return;
  }
  for (const auto& s : out->sends) {
    if (s.msg.request) {
      const auto& r = *s.msg.request;
      issued_[{c, r.id}] = {r.kind, car.client->n_v(), consensus::digest_of(r)};
      break;
    }
  }
  step_client(c, std::move(*out));
}

void Run::submit_next(std::size_t c) {
  Car& car = cars_[c];
  if (car.ops.empty()) return;
  Bytes op = std::move(car.ops.front());
  car.ops.pop_front();
  issue(c, car.client->submit(std::move(op), now()), RequestKind::Operation);
}

void Run::on_completion(std::size_t c, const Completion& done) {
  Car& car = cars_[c];
  if (!done.error) {
    auto it = issued_.find({c, done.request_id});
    if (it != issued_.end()) {
      const auto expected = threshold_for(it->second.kind, it->second.n_v);
      const auto counted = valid_replies_[it->second.digest].size();
      Check chk{"reply threshold", counted == expected && done.replies == expected && done.threshold == expected, ""};
      chk.detail = std::string(consensus::to_string(done.kind)) + " acknowledged at " + std::to_string(counted) +
                   " valid replies, expected " + std::to_string(expected) + " for N_V=" +
                   std::to_string(it->second.n_v);
      thresholds_.push_back(std::move(chk));
    }
  }
  switch (cfg_.scenario) {
    case Scenario::Absorb:
    case Scenario::FaultInjection:
    case Scenario::ExpelPrimary:
      if ((done.kind == RequestKind::Absorb || done.kind == RequestKind::Expel) && !done.error) {
        // One ordinary request against the new membership.
        car.ops.push_back(bind_op(car, 0));
        submit_next(c);
      } else {
        goal();
      }
      break;
    case Scenario::Byzantine:
      if (car.ops.empty()) {
        goal();
      } else {
        submit_next(c);
      }
      break;
    case Scenario::InterlayerHandshake:
      if (done.error) {
        goal();
      } else if (!car.ops.empty()) {
        submit_next(c);
      } else if (c + 1 < cars_.size()) {
        submit_next(c + 1);
      } else {
        sim_.schedule(1, simnet::EventKind::Timer, car.name, "relay", [this] { relay(); });
      }
      break;
    case Scenario::Isolation:
      if (done.error) {
        goal();
      } else {
        sim_.schedule(1, simnet::EventKind::Timer, "cloud", "lookups", [this] { lookups(); });
      }
      break;
  }
}

void Run::try_absorb(std::size_t c, const Message& heartbeat) {
  if (!joiner_ || handshake_tried_) return;
  Rsu& xn = rsus_[*joiner_];
  if (heartbeat.sender != xn.id.bcadd) return;
  handshake_tried_ = true;
  Car& car = cars_[c];
  // Heard over the air, so the two are direct neighbours: no ledger lookup.
  bemutual::Responder responder({xn.id, *xn.part.interface(AddressKind::WirelessDirect)}, nullptr);
  const bemutual::LocalEndpoint self{car.id, {AddressKind::WirelessDirect, "wd:" + car.name}};
  auto pair = bemutual::handshake(self, responder, nullptr, true, rng_, {now()}, &hs_log_);
  if (pair) ++report_.sessions;
  issue(c, car.client->absorb(xn.node, pair.has_value(), now()), RequestKind::Absorb);
}

void Run::watch(std::size_t c) {
  Car& car = cars_[c];
  for (const auto& lost : car.client->lost_members(now())) {
    if (car.client->busy_with(lost.bcadd)) continue;
    if (lost.bcadd == primary_.bcadd) expelled_ = lost;
    expel_issued_ = true;
    issue(c, car.client->expel(lost, now()), RequestKind::Expel);
  }
  if (!expel_issued_) sim_.schedule_timer(1, car.ep, "heartbeat-check", [this, c] { watch(c); });
}

void Run::lookups() {
  const Rsu* ref = reference();
  if (!ref) {
    goal();
    return;
  }
  edge_ledger_ = bedns::Ledger::from_blocks({ref->replica().ledger().blocks().begin(), ref->replica().ledger().blocks().end()});
  Car& car = cars_[0];
  std::vector<const vehicle::Participant*> in_range;
  for (const auto& r : rsus_) {
    if (sim_.in_range(car.ep, r.ep)) in_range.push_back(&r.part);
  }
  vehicle::Participant edge;
  edge.kind = vehicle::ParticipantKind::EdgeServer;
  const vehicle::Participant* edges[] = {&edge};
  auto& counts = report_.isolation;
  for (std::size_t k = 0; k < cfg_.requests; ++k) {
    for (const auto& r : rsus_) {
      sim_.send(*cloud_ep_, r.ep, Link::Internet, Category::Service, "Lookup", Lookup{next_lookup_++, car.id.bcadd});
      ++counts.rsu_internet_sent;
    }
    sim_.send(*cloud_ep_, *edge_ep_, Link::Internet, Category::Service, "Lookup", Lookup{next_lookup_++, car.id.bcadd});
    ++counts.edge_sent;
    auto target = vehicle::select_bedns_endpoint(*sim_.position(car.ep), in_range, edges, true);
    if (target && target->kind == vehicle::EndpointKind::Rsu) {
      sim_.send(car.ep, ep_of_.at(target->participant->bcadd()), Link::Wireless, Category::Service, "Lookup",
                Lookup{next_lookup_++, car.id.bcadd});
      ++counts.rsu_wireless_sent;
    }
    sim_.send(car.ep, *edge_ep_, Link::Internet, Category::Service, "Lookup", Lookup{next_lookup_++, car.id.bcadd});
    ++counts.edge_sent;
  }
  goal();
}

void Run::relay() {
  goal();
  const Rsu* ref = reference();
  if (!ref || !world_) {
    report_.relay = "no ledger";
    return;
  }
  const auto& blocks = ref->replica().ledger().blocks();
  bedns::Ledger ledger = bedns::Ledger::from_blocks({blocks.begin(), blocks.end()});
  std::deque<bemutual::UnitNode> nodes;
  std::map<BlockchainAddress, bemutual::UnitNode*> net;
  std::vector<const vehicle::Participant*> cars;
  for (const auto& p : world_->participants) {
    if (p.kind != vehicle::ParticipantKind::Vehicle) continue;
    cars.push_back(&p);
    for (const auto& u : p.units) {
      const NetworkAddress add = u.kind == vehicle::UnitKind::TypeI ? *u.inter_add : u.intra_add;
      auto& n = nodes.emplace_back(bemutual::LocalEndpoint{u.id, add}, p.bcadd(), &ledger);
      net[u.id.bcadd] = &n;
    }
  }
  auto exported = [](const vehicle::Participant& v) -> const vehicle::Unit* {
    for (const auto* u : v.units_of(vehicle::UnitKind::TypeIIA)) {
      if (u->exported) return u;
    }
    return nullptr;
  };
  const vehicle::Unit* src = cars.size() >= 2 ? exported(*cars[0]) : nullptr;
  const vehicle::Unit* dst = cars.size() >= 2 ? exported(*cars[1]) : nullptr;
  if (!src || !dst) {
    report_.relay = "no exported units";
    return;
  }
  std::vector<bemutual::UnitNode*> gateways;
  for (const auto* g : cars[0]->units_of(vehicle::UnitKind::TypeI)) gateways.push_back(net.at(g->id.bcadd));
  auto locate = [&net](const BlockchainAddress& a) -> bemutual::UnitNode* {
    auto it = net.find(a);
    return it == net.end() ? nullptr : it->second;
  };
  auto path = bemutual::relay_connect(*net.at(src->id.bcadd), gateways, cars[1]->bcadd(), dst->id.bcadd, locate, ledger,
                                      rng_, {now()}, &hs_log_);
  if (!path) {
    report_.relay = bemutual::to_string(path.error());
    return;
  }
  report_.sessions += 4;  // three hops and the end-to-end session
  const std::string probe = "relay probe " + std::to_string(cfg_.seed);
  auto got = path->send_to_destination(Bytes(probe.begin(), probe.end()));
  const bool delivered = got && std::string(got->begin(), got->end()) == probe;
  report_.relay = delivered ? "established" : "delivery failed";
  bool opaque = true;
  for (const auto* gw : {gateways.front(), net.at(path->destination_session().relay_path.back())}) {
    for (const auto& seen : gw->forwarded) {
      opaque = opaque && std::search(seen.begin(), seen.end(), probe.begin(), probe.end()) == seen.end();
    }
  }
  relay_checks_.push_back({"gateway opacity", opaque, "gateways never unwrap end-to-end plaintext"});
  for (const auto* u : cars[1]->units_of(vehicle::UnitKind::TypeIIB)) {
    auto hidden = bemutual::relay_connect(*net.at(src->id.bcadd), gateways, cars[1]->bcadd(), u->id.bcadd, locate,
                                          ledger, rng_, {now()}, nullptr);
    relay_checks_.push_back({"type IIB unreachable", !hidden, "a Type IIB unit never resolves from outside"});
  }
}

ProtocolReport Run::go() {
  const std::size_t n = cfg_.nodes;
  const Vec2 centre{3, 0};
  std::size_t primary = rng_.below(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    Vec2 at = centre + 3.0 * Vec2{std::cos(a), std::sin(a)};
    // The primary to be expelled sits where the vehicle is about to leave.
    if (cfg_.scenario == Scenario::ExpelPrimary && i == primary) at = {-5, 0};
    add_rsu(i, at, false);
  }
  for (const auto& r : rsus_) members_.push_back(r.node);
  primary_ = members_[primary];
  std::optional<std::size_t> bad;
  if (cfg_.scenario == Scenario::Byzantine) bad = rng_.below(n);
  for (std::size_t i = 0; i < n; ++i) {
    Replica rep(rsus_[i].id, members_, primary_);
    if (bad && *bad == i) {
      rsus_[i].byz.emplace(std::move(rep), simnet::derive_seed(cfg_.seed, "byzantine"), cfg_.byzantine);
    } else {
      rsus_[i].honest.emplace(std::move(rep));
    }
  }

  auto straight = [](double stop) { return [stop](Tick t) { return Vec2{std::min(static_cast<double>(t), stop), 0}; }; };
  switch (cfg_.scenario) {
    case Scenario::Absorb:
    case Scenario::FaultInjection: {
      add_rsu(n, {11, 0}, true);
      joiner_ = rsus_.size() - 1;
      if (cfg_.scenario == Scenario::FaultInjection) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);
        for (std::size_t k = 0; k < std::min(cfg_.silenced, n); ++k) {
          rsus_[order[k]].silenced = true;
          sim_.schedule_silence(0, rsus_[order[k]].ep);
        }
      }
      add_car("vehicle", Identity::derived(cfg_.seed, "vehicle"), straight(6));
      start_heartbeats();
      break;
    }
    case Scenario::ExpelPrimary: {
      const auto c = add_car("vehicle", Identity::derived(cfg_.seed, "vehicle"), straight(4));
      start_heartbeats();
      sim_.schedule_timer(1, cars_[c].ep, "heartbeat-check", [this, c] { watch(c); });
      break;
    }
    case Scenario::Byzantine: {
      const auto c = add_car("vehicle", Identity::derived(cfg_.seed, "vehicle"), [](Tick) { return Vec2{3, 0}; });
      for (std::size_t k = 0; k < cfg_.operations; ++k) cars_[c].ops.push_back(bind_op(cars_[c], k));
      sim_.schedule(0, simnet::EventKind::Timer, "vehicle", "start", [this, c] { submit_next(c); });
      break;
    }
    case Scenario::InterlayerHandshake: {
      auto w = vehicle::load_world(cfg_.world.is_null() ? default_world() : cfg_.world, cfg_.seed);
      if (!w) throw std::invalid_argument(w.error());
      world_ = std::move(*w);
      for (const auto& p : world_->participants) {
        if (p.kind != vehicle::ParticipantKind::Vehicle) continue;
        const Vec2 at = *p.position;
        const auto c = add_car(p.name, p.id, [at](Tick) { return at; });
        auto recs = vehicle::vehicle_records(p, {1});
        if (!recs) throw std::invalid_argument(vehicle::to_string(recs.error()));
        for (const auto& rec : *recs) cars_[c].ops.push_back(consensus::encode_ledger_op(consensus::LedgerOp::Bind, rec));
      }
      if (cars_.empty()) throw std::invalid_argument("world has no vehicles");
      sim_.schedule(0, simnet::EventKind::Timer, cars_[0].name, "register", [this] { submit_next(0); });
      break;
    }
    case Scenario::Isolation: {
      const auto c = add_car("vehicle", Identity::derived(cfg_.seed, "vehicle"), [](Tick) { return Vec2{3, 0}; });
      edge_ep_ = sim_.add_endpoint({"edge", false, true, {}, [this](const Packet& p) {
                                      const auto* q = std::any_cast<Lookup>(&p.body);
                                      if (!q) return;
                                      ++report_.isolation.edge_serviced;
                                      sim_.send(*edge_ep_, p.from, Link::Internet, Category::Service, "LookupReply",
                                                LookupReply{q->id, edge_ledger_.resolve(q->query).has_value()});
                                    }, {}});
      cloud_ep_ = sim_.add_endpoint({"cloud", false, true, {}, [this](const Packet& p) {
                                       if (const auto* a = std::any_cast<LookupReply>(&p.body); a && a->found) {
                                         ++report_.isolation.answers;
                                       }
                                     }, {}});
      cars_[c].ops.push_back(bind_op(cars_[c], 0));
      sim_.schedule(0, simnet::EventKind::Timer, "vehicle", "start", [this, c] { submit_next(c); });
      break;
    }
  }

  while (auto t = sim_.next_tick()) {
    if (*t >= cfg_.horizon || (goal_at_ && *t > *goal_at_ + kSettle)) break;
    sim_.step();
  }
  report_.finished_at = sim_.now();
  finish_checks();
  return std::move(report_);
}

void Run::finish_checks() {
  report_.safety_violations = monitor_.violations();
  report_.decisions = monitor_.highest_seq();
  report_.traffic = sim_.stats();
  report_.checks.push_back({"safety", monitor_.violations() == 0,
                            std::to_string(monitor_.decisions()) + " decisions by correct members, " +
                                std::to_string(monitor_.violations()) + " conflicts"});
  report_.checks.push_back({"isolation", isolation_breaches_ == 0,
                            std::to_string(isolation_breaches_) + " internet service requests handled by RSUs"});

  // Membership agreement among correct members still in the group.
  std::vector<const Rsu*> group;
  for (const auto& r : rsus_) {
    if (!r.correct() || !r.replica().is_member()) continue;
    if (expelled_ && r.id.bcadd == expelled_->bcadd) continue;
    group.push_back(&r);
    report_.n_xi[r.name] = r.replica().n_xi();
  }
  bool agree = true;
  for (const Rsu* r : group) {
    agree = agree && r->replica().members() == group.front()->replica().members() &&
            r->replica().n_xi() == r->replica().members().size();
  }
  std::string detail = std::to_string(group.size()) + " correct members";
  if (!cars_.empty() && !group.empty()) {
    const Client& client = *cars_[0].client;
    report_.n_v = client.n_v();
    bool last_acked = false;
    for (const auto& c : client.completions()) {
      if (c.kind == RequestKind::Absorb || c.kind == RequestKind::Expel) last_acked = !c.error;
    }
    if (last_acked) {
      auto known = client.known_members();
      const bool same = known == group.front()->replica().members();
      agree = agree && same && client.n_v() == group.front()->replica().n_xi();
      detail += same ? ", client view matches" : ", client view differs";
    }
  }
  if (joiner_ && rsus_[*joiner_].replica().is_member() && !rsus_[*joiner_].replica().joined()) agree = false;
  report_.checks.push_back({"membership agreement", agree, detail});

  for (auto& t : thresholds_) report_.checks.push_back(t);
  for (auto& t : relay_checks_) report_.checks.push_back(t);

  if (const Rsu* ref = reference()) {
    report_.primary = name_of(ref->replica().primary().bcadd);
    report_.view = ref->replica().view();
    const auto blocks = ref->replica().ledger().blocks();
    report_.ledger.assign(blocks.begin(), blocks.end());
  }
  if (expelled_) report_.expelled = name_of(expelled_->bcadd);
  if (cfg_.scenario == Scenario::ExpelPrimary && expelled_) {
    bool ok = true;
    std::size_t changes = 0;
    for (const Rsu* r : group) {
      ok = ok && r->replica().primary().bcadd != expelled_->bcadd;
      for (const auto& vc : r->replica().view_change_history()) {
        ++changes;
        ViewChangeRecord rec{r->name, vc.view, name_of(vc.primary.bcadd), {}};
        for (const auto& v : vc.voters) rec.voters.push_back(name_of(v));
        report_.view_changes.push_back(std::move(rec));
        ok = ok && vc.primary.bcadd != expelled_->bcadd;
        ok = ok && std::find(vc.voters.begin(), vc.voters.end(), expelled_->bcadd) == vc.voters.end();
      }
    }
    report_.checks.push_back({"primary exclusion", ok,
                              std::to_string(changes) + " view changes; expelled " + name_of(expelled_->bcadd)});
  }
  if (cfg_.scenario == Scenario::Absorb || cfg_.scenario == Scenario::FaultInjection) {
    bool ok = true;
    for (const Rsu* r : group) ok = ok && (r->replica().view() > 0 || r->replica().primary() == primary_);
    report_.checks.push_back({"primary kept on absorption", ok, "primary " + name_of(primary_.bcadd)});
  }

  for (const auto& c : cars_) {
    for (const auto& done : c.client->completions()) report_.completions.push_back(done);
  }
  for (const auto& f : local_failures_) report_.completions.push_back(f);
  if (cfg_.trace) {
    report_.events = sim_.trace();
    report_.handshakes = hs_log_.lines();
  }
}

}  // namespace

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::Absorb: return "absorb";
    case Scenario::ExpelPrimary: return "expel-primary";
    case Scenario::InterlayerHandshake: return "interlayer-handshake";
    case Scenario::FaultInjection: return "fault-injection";
    case Scenario::Byzantine: return "byzantine";
    case Scenario::Isolation: return "isolation";
  }
  return "?";
}

std::optional<Scenario> parse_scenario(std::string_view s) {
  for (auto k : {Scenario::Absorb, Scenario::ExpelPrimary, Scenario::InterlayerHandshake, Scenario::FaultInjection,
                 Scenario::Byzantine, Scenario::Isolation}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

bool SafetyMonitor::record(const BlockchainAddress&, const consensus::Decision& d) {
  ++decisions_;
  bool ok = true;
  auto [a, fresh_a] = by_seq_.emplace(d.seq, d.digest);
  if (!fresh_a && a->second != d.digest) ok = false;
  auto [b, fresh_b] = by_view_seq_.emplace(std::make_pair(d.view, d.seq), d.digest);
  if (!fresh_b && b->second != d.digest) ok = false;
  if (!ok) ++violations_;
  return ok;
}

bool ProtocolReport::invariants_hold() const {
  return safety_violations == 0 &&
         std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.ok; });
}

nlohmann::json ProtocolReport::summary() const {
  nlohmann::json done = nlohmann::json::array();
  for (const auto& c : completions) {
    done.push_back({{"kind", consensus::to_string(c.kind)},
                    {"outcome", c.error ? consensus::to_string(*c.error) : "acknowledged"},
                    {"threshold", c.threshold},
                    {"replies", c.replies},
                    {"tick", c.at},
                    {"n_v_after", c.n_v_after}});
  }
  nlohmann::json checks_j = nlohmann::json::array();
  for (const auto& c : checks) checks_j.push_back({{"name", c.name}, {"ok", c.ok}, {"detail", c.detail}});
  nlohmann::json j{{"scenario", to_string(config.scenario)},
                   {"seed", config.seed},
                   {"nodes", config.nodes},
                   {"decisions", decisions},
                   {"sessions_established", sessions},
                   {"n_v", n_v},
                   {"n_xi", n_xi},
                   {"primary", primary},
                   {"view", view},
                   {"completions", done},
                   {"safety_violations", safety_violations},
                   {"checks", checks_j},
                   {"finished_at", finished_at},
                   {"traffic",
                    {{"sent", traffic.sent},
                     {"delivered", traffic.delivered},
                     {"dropped_range", traffic.dropped_range},
                     {"dropped_fault", traffic.dropped_fault},
                     {"dropped_isolation", traffic.dropped_isolation},
                     {"dropped_unroutable", traffic.dropped_unroutable}}}};
  if (config.scenario == Scenario::Isolation) {
    j["isolation"] = {{"rsu_internet_sent", isolation.rsu_internet_sent},
                      {"rsu_internet_serviced", isolation.rsu_internet_serviced},
                      {"rsu_wireless_sent", isolation.rsu_wireless_sent},
                      {"rsu_wireless_serviced", isolation.rsu_wireless_serviced},
                      {"edge_sent", isolation.edge_sent},
                      {"edge_serviced", isolation.edge_serviced},
                      {"answers", isolation.answers}};
  }
  if (config.scenario == Scenario::InterlayerHandshake) j["relay"] = relay;
  return j;
}

Expected<ProtocolConfig, std::string> parse_config(const nlohmann::json& j, ProtocolConfig c) try {
  if (!j.is_object()) return unexpected("scenario config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "scenario") {
      auto s = parse_scenario(v.get<std::string>());
      if (!s) return unexpected("unknown scenario " + v.get<std::string>());
      c.scenario = *s;
    } else if (key == "nodes") {
      c.nodes = v.get<std::size_t>();
    } else if (key == "seed") {
      c.seed = v.get<std::uint64_t>();
    } else if (key == "horizon") {
      c.horizon = v.get<Tick>();
    } else if (key == "jitter") {
      c.jitter = v.get<Tick>();
    } else if (key == "silenced") {
      c.silenced = v.get<std::size_t>();
    } else if (key == "operations") {
      c.operations = v.get<std::size_t>();
    } else if (key == "requests") {
      c.requests = v.get<std::size_t>();
    } else if (key == "heartbeat") {
      c.heartbeat.period = v.value("period", c.heartbeat.period);
      c.heartbeat.missed = v.value("missed", c.heartbeat.missed);
      if (c.heartbeat.period == 0) return unexpected("heartbeat period must be positive");
    } else if (key == "byzantine") {
      c.byzantine.equivocate = v.value("equivocate", c.byzantine.equivocate);
      c.byzantine.double_vote = v.value("double_vote", c.byzantine.double_vote);
      c.byzantine.false_view_change = v.value("false_view_change", c.byzantine.false_view_change);
      c.byzantine.forge_proof = v.value("forge_proof", c.byzantine.forge_proof);
    } else if (key == "world") {
      c.world = v;
    } else if (key == "trace") {
      c.trace = v.get<bool>();
    } else {
      return unexpected("unknown key " + key);
    }
  }
  if (c.nodes < 1 || c.nodes > 64) return unexpected("nodes must be between 1 and 64");
  if (c.scenario == Scenario::ExpelPrimary && c.nodes < 2) return unexpected("expel-primary needs at least 2 nodes");
  return c;
} catch (const nlohmann::json::exception& e) {
  return unexpected(std::string("malformed scenario config: ") + e.what());
}

nlohmann::json to_json(const ProtocolConfig& c) {
  nlohmann::json j{{"scenario", to_string(c.scenario)},
                   {"nodes", c.nodes},
                   {"seed", c.seed},
                   {"horizon", c.horizon},
                   {"jitter", c.jitter},
                   {"silenced", c.silenced},
                   {"operations", c.operations},
                   {"requests", c.requests},
                   {"heartbeat", {{"period", c.heartbeat.period}, {"missed", c.heartbeat.missed}}},
                   {"byzantine",
                    {{"equivocate", c.byzantine.equivocate},
                     {"double_vote", c.byzantine.double_vote},
                     {"false_view_change", c.byzantine.false_view_change},
                     {"forge_proof", c.byzantine.forge_proof}}},
                   {"trace", c.trace}};
  if (!c.world.is_null()) j["world"] = c.world;
  return j;
}

ProtocolReport run_protocol(const ProtocolConfig& cfg) { return Run(cfg).go(); }

}  // namespace beacons::protocol
