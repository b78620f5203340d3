#include "beacons/vehicle.hpp"

#include <algorithm>
#include <set>

namespace beacons::vehicle {

const char* to_string(ParticipantKind k) {
  switch (k) {
    case ParticipantKind::Rsu: return "rsu";
    case ParticipantKind::EdgeServer: return "edge_server";
    case ParticipantKind::Vehicle: return "vehicle";
    case ParticipantKind::CloudServer: return "cloud_server";
  }
  return "?";
}

const char* to_string(UnitKind k) {
  switch (k) {
    case UnitKind::TypeI: return "I";
    case UnitKind::TypeIIA: return "IIA";
    case UnitKind::TypeIIB: return "IIB";
  }
  return "?";
}

const char* to_string(VehicleError e) {
  switch (e) {
    case VehicleError::UnknownUnit: return "UnknownUnit";
    case VehicleError::NoEndpoint: return "NoEndpoint";
    case VehicleError::MissingGateway: return "MissingGateway";
    case VehicleError::NotAVehicle: return "NotAVehicle";
    case VehicleError::BindFailed: return "BindFailed";
    case VehicleError::InvalidConfig: return "InvalidConfig";
  }
  return "?";
}

const char* to_string(TrafficClass c) {
  switch (c) {
    case TrafficClass::Safety: return "safety";
    case TrafficClass::Privacy: return "privacy";
    case TrafficClass::Bulk: return "bulk";
    case TrafficClass::Telemetry: return "telemetry";
  }
  return "?";
}

std::optional<NetworkAddress> Participant::interface(AddressKind kind) const {
  for (const auto& a : interfaces) {
    if (a.kind == kind) return a;
  }
  return std::nullopt;
}

const Unit* Participant::unit(const BlockchainAddress& a) const {
  for (const auto& u : units) {
    if (u.id.bcadd == a) return &u;
  }
  return nullptr;
}

std::vector<const Unit*> Participant::units_of(UnitKind kind) const {
  std::vector<const Unit*> out;
  for (const auto& u : units) {
    if (u.kind == kind) out.push_back(&u);
  }
  return out;
}

RoutingPolicy::RoutingPolicy() {
  rules_[TrafficClass::Safety] = {true, true};
  rules_[TrafficClass::Privacy] = {true, true};
  rules_[TrafficClass::Bulk] = {false, false};
  rules_[TrafficClass::Telemetry] = {false, false};
}

Expected<void, VehicleError> RoutingPolicy::set(TrafficClass c, Route r) {
  if ((c == TrafficClass::Safety || c == TrafficClass::Privacy) && !r.use_bemutual) {
    return unexpected(VehicleError::InvalidConfig);
  }
  rules_[c] = r;
  return {};
}

std::optional<UnitKind> classify(const Participant& vehicle, const BlockchainAddress& a) {
  if (const Unit* u = vehicle.unit(a)) return u->kind;
  return std::nullopt;
}

Expected<std::vector<bedns::MappingRecord>, VehicleError> vehicle_records(const Participant& v, Timestamp t) {
  if (v.kind != ParticipantKind::Vehicle) return unexpected(VehicleError::NotAVehicle);
  std::vector<bedns::MappingRecord> out;
  const auto gateways = v.units_of(UnitKind::TypeI);
  for (const Unit* g : gateways) {
    if (!g->inter_add) return unexpected(VehicleError::MissingGateway);
    out.push_back(bedns::make_class_two(v.id, g->id, *g->inter_add, g->label, t));
  }
  for (const Unit* u : v.units_of(UnitKind::TypeIIA)) {
    if (!u->exported) continue;
    const Unit* g = u->gateway ? v.unit(*u->gateway) : (gateways.empty() ? nullptr : gateways.front());
    if (!g || g->kind != UnitKind::TypeI || !g->inter_add) return unexpected(VehicleError::MissingGateway);
    out.push_back(bedns::make_class_three(v.id, g->id, *g->inter_add, g->label, u->id, u->intra_add, u->label, t));
  }
  return out;
}

Expected<std::vector<bedns::MappingRecord>, VehicleError> register_vehicle(const Participant& v,
                                                                           bedns::Ledger& ledger,
                                                                           Timestamp t) {
  auto records = vehicle_records(v, t);
  if (!records) return records;
  for (const auto& r : *records) {
    if (!ledger.bind(r)) return unexpected(VehicleError::BindFailed);
  }
  ledger.commit_block();
  return records;
}

Expected<NetworkAddress, VehicleError> intra_resolve(const Participant& vehicle, const Unit& gateway,
                                                     const BlockchainAddress& target) {
  if (gateway.kind != UnitKind::TypeI || gateway.vehicle != vehicle.bcadd() || !vehicle.unit(gateway.id.bcadd)) {
    return unexpected(VehicleError::UnknownUnit);
  }
  const Unit* u = vehicle.unit(target);
  if (!u) return unexpected(VehicleError::UnknownUnit);
  return u->intra_add;
}

Expected<Endpoint, VehicleError> select_bedns_endpoint(Vec2 vehicle_position,
                                                       std::span<const Participant* const> in_range_rsus,
                                                       std::span<const Participant* const> edge_servers,
                                                       bool internet_up) {
  const Participant* best = nullptr;
  double best_d = 0;
  for (const Participant* r : in_range_rsus) {
    if (!r->position) continue;
    const double d = distance(vehicle_position, *r->position);
    if (!best || d < best_d || (d == best_d && r->bcadd() < best->bcadd())) {
      best = r;
      best_d = d;
    }
  }
  if (best) return Endpoint{EndpointKind::Rsu, best};
  if (internet_up && !edge_servers.empty()) return Endpoint{EndpointKind::EdgeServer, edge_servers.front()};
  return unexpected(VehicleError::NoEndpoint);
}

bool enforce_isolation(const Participant& receiver, simnet::Link link, simnet::Category category) {
  return !(receiver.kind == ParticipantKind::Rsu && link == simnet::Link::Internet &&
           category == simnet::Category::Service);
}

const Participant* World::find(const std::string& name) const {
  for (const auto& p : participants) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Participant* World::find(const BlockchainAddress& a) const {
  for (const auto& p : participants) {
    if (p.bcadd() == a) return &p;
  }
  return nullptr;
}

namespace {

std::optional<ParticipantKind> parse_kind(const std::string& s) {
  if (s == "rsu") return ParticipantKind::Rsu;
  if (s == "edge_server") return ParticipantKind::EdgeServer;
  if (s == "vehicle") return ParticipantKind::Vehicle;
  if (s == "cloud_server") return ParticipantKind::CloudServer;
  return std::nullopt;
}

std::optional<UnitKind> parse_unit(const std::string& s) {
  if (s == "I") return UnitKind::TypeI;
  if (s == "IIA") return UnitKind::TypeIIA;
  if (s == "IIB") return UnitKind::TypeIIB;
  return std::nullopt;
}

std::optional<TrafficClass> parse_class(const std::string& s) {
  for (auto c : {TrafficClass::Safety, TrafficClass::Privacy, TrafficClass::Bulk, TrafficClass::Telemetry}) {
    if (s == to_string(c)) return c;
  }
  return std::nullopt;
}

std::vector<NetworkAddress> default_interfaces(ParticipantKind k, const std::string& name) {
  std::vector<NetworkAddress> out;
  if (k == ParticipantKind::Rsu || k == ParticipantKind::Vehicle) out.push_back({AddressKind::WirelessDirect, "wd:" + name});
  out.push_back({AddressKind::Internet, "inet:" + name});
  return out;
}

}  // namespace

Expected<World, std::string> load_world(const nlohmann::json& j, std::uint64_t seed) try {
  World w;
  std::set<std::string> names;
  for (const auto& pj : j.at("participants")) {
    Participant p;
    p.name = pj.at("name").get<std::string>();
    if (p.name.empty() || !names.insert(p.name).second) return unexpected("duplicate or empty participant name");
    auto kind = parse_kind(pj.at("kind").get<std::string>());
    if (!kind) return unexpected("unknown participant kind for " + p.name);
    p.kind = *kind;
    p.id = Identity::derived(seed, p.name);
    if (pj.contains("position")) {
      const auto& pos = pj.at("position");
      p.position = Vec2{pos.at(0).get<double>(), pos.at(1).get<double>()};
    }
    if ((p.kind == ParticipantKind::Rsu || p.kind == ParticipantKind::Vehicle) && !p.position) {
      return unexpected(p.name + " needs a position");
    }
    if (pj.contains("interfaces")) {
      for (const auto& ij : pj.at("interfaces")) {
        const auto k = ij.at("kind").get<std::string>();
        if (k != "wireless" && k != "internet") return unexpected("unknown interface kind " + k);
        p.interfaces.push_back({k == "wireless" ? AddressKind::WirelessDirect : AddressKind::Internet,
                                ij.at("value").get<std::string>()});
      }
    } else {
      p.interfaces = default_interfaces(p.kind, p.name);
    }
    if (p.kind == ParticipantKind::Rsu &&
        (!p.interface(AddressKind::WirelessDirect) || !p.interface(AddressKind::Internet))) {
      return unexpected("rsu " + p.name + " needs wireless and internet interfaces");
    }
    if (pj.contains("units")) {
      if (p.kind != ParticipantKind::Vehicle) return unexpected(p.name + " is not a vehicle but lists units");
      std::set<std::pair<UnitKind, std::string>> labels;
      std::map<std::string, BlockchainAddress> unit_names;
      for (const auto& uj : pj.at("units")) {
        Unit u;
        const auto uname = uj.at("name").get<std::string>();
        auto k = parse_unit(uj.at("type").get<std::string>());
        if (!k) return unexpected("unknown unit type in " + p.name);
        u.kind = *k;
        u.id = Identity::derived(seed, p.name + "/" + uname);
        u.label = Label{uj.value("label", uname)};
        if (!labels.insert({u.kind, u.label.text()}).second) {
          return unexpected("repeated label " + u.label.text() + " in " + p.name);
        }
        u.vehicle = p.bcadd();
        u.intra_add = {AddressKind::WirelessDirect, "intra:" + p.name + "/" + uname};
        if (u.kind == UnitKind::TypeI) u.inter_add = NetworkAddress{AddressKind::WirelessDirect, "wd:" + p.name + "/" + uname};
        u.exported = u.kind == UnitKind::TypeIIA && uj.value("exported", false);
        if (!unit_names.emplace(uname, u.id.bcadd).second) return unexpected("repeated unit " + uname);
        if (uj.contains("gateway")) {
          auto it = unit_names.find(uj.at("gateway").get<std::string>());
          if (it == unit_names.end()) return unexpected("gateway must be listed before " + uname);
          u.gateway = it->second;
        }
        p.units.push_back(std::move(u));
      }
    }
    w.participants.push_back(std::move(p));
  }
  if (j.contains("routing")) {
    for (const auto& [name, rj] : j.at("routing").items()) {
      auto c = parse_class(name);
      if (!c) return unexpected("unknown traffic class " + name);
      if (!w.policy.set(*c, {rj.value("bemutual", false), rj.value("bedns", false)})) {
        return unexpected(name + " traffic must use BeMutual");
      }
    }
  }
  if (j.contains("edge_servers")) {
    for (const auto& e : j.at("edge_servers")) {
      const auto name = e.get<std::string>();
      const Participant* p = w.find(name);
      if (!p || p->kind != ParticipantKind::EdgeServer) return unexpected(name + " is not an edge server");
      w.edge_servers.push_back(name);
    }
  }
  return w;
} catch (const nlohmann::json::exception& e) {
  return unexpected(std::string("malformed world: ") + e.what());
} catch (const std::invalid_argument& e) {
  return unexpected(std::string("malformed world: ") + e.what());
}

}  // namespace beacons::vehicle
