#pragma once

// Primary-layer participants, the units inside one vehicle, and the rules
// that connect them to BeDNS: which records a vehicle publishes, how units
// are found inside the vehicle, where BeDNS requests go, and what an RSU
// refuses to serve.

#include <json.hpp>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "beacons/bedns.hpp"
#include "beacons/geometry.hpp"
#include "beacons/identity.hpp"
#include "beacons/simnet/simulator.hpp"

namespace beacons::vehicle {

enum class ParticipantKind { Rsu, EdgeServer, Vehicle, CloudServer };
enum class UnitKind { TypeI, TypeIIA, TypeIIB };

const char* to_string(ParticipantKind k);
const char* to_string(UnitKind k);

struct Unit {
  UnitKind kind = UnitKind::TypeI;
  Identity id;
  Label label;
  BlockchainAddress vehicle;
  NetworkAddress intra_add;
  /// Type I only: the interface reachable from outside the vehicle.
  std::optional<NetworkAddress> inter_add;
  /// Type IIA only: published through a Class III record. Off by default.
  bool exported = false;
  /// Type IIA only: the Type I unit that relays for it. Defaults to the
  /// vehicle's first Type I unit.
  std::optional<BlockchainAddress> gateway;
};

struct Participant {
  ParticipantKind kind = ParticipantKind::Vehicle;
  std::string name;
  Identity id;
  std::optional<Vec2> position;  // RSUs and vehicles
  std::vector<NetworkAddress> interfaces;
  std::vector<Unit> units;  // vehicles only

  const BlockchainAddress& bcadd() const { return id.bcadd; }
  std::optional<NetworkAddress> interface(AddressKind kind) const;
  const Unit* unit(const BlockchainAddress& a) const;
  std::vector<const Unit*> units_of(UnitKind kind) const;
};

enum class VehicleError {
  UnknownUnit,
  NoEndpoint,
  MissingGateway,
  NotAVehicle,
  BindFailed,
  InvalidConfig,
};

const char* to_string(VehicleError e);

/// Traffic criticality classes and whether each uses BeMutual and BeDNS.
enum class TrafficClass { Safety, Privacy, Bulk, Telemetry };

const char* to_string(TrafficClass c);

struct Route {
  bool use_bemutual = false;
  bool use_bedns = false;
  bool operator==(const Route&) const = default;
};

class RoutingPolicy {
 public:
  /// Safety and privacy over BeMutual and BeDNS, bulk and telemetry plain.
  RoutingPolicy();
  Route route(TrafficClass c) const { return rules_.at(c); }
  /// Refuses to take safety or privacy traffic off BeMutual.
  Expected<void, VehicleError> set(TrafficClass c, Route r);
  const std::map<TrafficClass, Route>& rules() const { return rules_; }

 private:
  std::map<TrafficClass, Route> rules_;
};

/// Where a unit stands as seen from inside `vehicle`: its own kind, or
/// nullopt for anything outside the sub-layer (a Type III unit).
std::optional<UnitKind> classify(const Participant& vehicle, const BlockchainAddress& a);

/// Class II records for every Type I unit and Class III records for every
/// exported Type IIA unit. Type IIB units never appear.
Expected<std::vector<bedns::MappingRecord>, VehicleError> vehicle_records(const Participant& v, Timestamp t);

/// Binds the records above and commits them in one block.
Expected<std::vector<bedns::MappingRecord>, VehicleError> register_vehicle(const Participant& v,
                                                                           bedns::Ledger& ledger,
                                                                           Timestamp t);

/// Intra-vehicle lookup by a Type I unit. Never consults BeDNS.
Expected<NetworkAddress, VehicleError> intra_resolve(const Participant& vehicle, const Unit& gateway,
                                                     const BlockchainAddress& target);

enum class EndpointKind { Rsu, EdgeServer };

struct Endpoint {
  EndpointKind kind;
  const Participant* participant;
};

/// Nearest in-range RSU (ties to the lower BCADD); failing that the first
/// edge server if the internet is up.
Expected<Endpoint, VehicleError> select_bedns_endpoint(Vec2 vehicle_position,
                                                       std::span<const Participant* const> in_range_rsus,
                                                       std::span<const Participant* const> edge_servers,
                                                       bool internet_up);

/// RSUs take service requests only over the wireless link; everything else
/// goes through.
bool enforce_isolation(const Participant& receiver, simnet::Link link, simnet::Category category);

/// A scenario world: participants, routing policy and edge servers.
struct World {
  std::vector<Participant> participants;
  RoutingPolicy policy;
  std::vector<std::string> edge_servers;  // names, in fallback order

  const Participant* find(const std::string& name) const;
  const Participant* find(const BlockchainAddress& a) const;
};

/// Parses a world description. Keys are derived from `seed` and each name.
Expected<World, std::string> load_world(const nlohmann::json& j, std::uint64_t seed);

}  // namespace beacons::vehicle
