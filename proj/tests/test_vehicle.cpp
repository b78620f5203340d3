#include <doctest.h>

#include <set>

#include "beacons/simnet/rng.hpp"
#include "beacons/vehicle.hpp"

using namespace beacons;
using namespace beacons::vehicle;
using simnet::Category;
using simnet::Link;

namespace {

nlohmann::json car(const std::string& name, Vec2 at, int type_one, int iia_exported, int iia_private, int iib) {
  nlohmann::json units = nlohmann::json::array();
  for (int i = 0; i < type_one; ++i) units.push_back({{"name", "gw" + std::to_string(i)}, {"type", "I"}});
  for (int i = 0; i < iia_exported; ++i) {
    units.push_back({{"name", "cam" + std::to_string(i)}, {"type", "IIA"}, {"exported", true}});
  }
  for (int i = 0; i < iia_private; ++i) units.push_back({{"name", "mic" + std::to_string(i)}, {"type", "IIA"}});
  for (int i = 0; i < iib; ++i) units.push_back({{"name", "ecu" + std::to_string(i)}, {"type", "IIB"}});
  return {{"name", name}, {"kind", "vehicle"}, {"position", {at.x, at.y}}, {"units", units}};
}

World world(nlohmann::json participants, std::uint64_t seed = 3) {
  auto w = load_world({{"participants", std::move(participants)}}, seed);
  REQUIRE_MESSAGE(w, (w ? "" : w.error()));
  return std::move(w).value();
}

std::size_t count(const std::vector<bedns::MappingRecord>& rs, bedns::RecordClass c) {
  return std::count_if(rs.begin(), rs.end(), [&](const auto& r) { return r.cls == c; });
}

}  // namespace

TEST_CASE("registration publishes Class II per gateway and Class III per exported unit") {
  auto w = world({car("v", {0, 0}, 2, 3, 0, 0)});
  bedns::Ledger ledger;
  auto recs = register_vehicle(w.participants[0], ledger, {1});
  REQUIRE(recs);
  CHECK(count(*recs, bedns::RecordClass::II) == 2);
  CHECK(count(*recs, bedns::RecordClass::III) == 3);
  CHECK(ledger.all_records().size() == 5);
  for (const auto& r : ledger.all_records()) CHECK(bedns::validate(r));
}

TEST_CASE("Type IIB units and unconsented IIA units are never published") {
  auto w = world({car("v", {0, 0}, 1, 0, 2, 4)});
  bedns::Ledger ledger;
  auto recs = register_vehicle(w.participants[0], ledger, {1});
  REQUIRE(recs);
  CHECK(recs->size() == 1);
  CHECK(recs->front().cls == bedns::RecordClass::II);
}

TEST_CASE("ledger invariants over random vehicles") {
  simnet::Rng rng(11);
  bedns::Ledger ledger;
  nlohmann::json ps = nlohmann::json::array();
  for (int i = 0; i < 30; ++i) {
    ps.push_back(car("v" + std::to_string(i), {0, 0}, 1 + rng.below(3), rng.below(4), rng.below(3), rng.below(4)));
  }
  auto w = world(ps);
  for (const auto& v : w.participants) REQUIRE(register_vehicle(v, ledger, {1}));
  std::set<BlockchainAddress> iib;
  for (const auto& v : w.participants) {
    for (const Unit* u : v.units_of(UnitKind::TypeIIB)) iib.insert(u->id.bcadd);
  }
  REQUIRE_FALSE(iib.empty());
  for (const auto& r : ledger.all_records()) {
    for (const auto& a : {std::optional(r.bcadd_p), r.bcadd_ui, r.bcadd_uiia}) {
      if (a) CHECK_FALSE(iib.count(*a));
    }
    if (r.cls == bedns::RecordClass::III) {
      const Participant* v = w.find(r.bcadd_p);
      REQUIRE(v);
      CHECK(classify(*v, *r.bcadd_ui) == UnitKind::TypeI);
      CHECK(classify(*v, *r.bcadd_uiia) == UnitKind::TypeIIA);
    }
  }
}

TEST_CASE("intra-vehicle resolution stays inside the vehicle") {
  auto w = world({car("a", {0, 0}, 1, 1, 0, 1), car("b", {0, 0}, 1, 1, 0, 1)});
  const Participant& a = w.participants[0];
  const Participant& b = w.participants[1];
  const Unit& gw = *a.units_of(UnitKind::TypeI)[0];
  const Unit& ecu = *a.units_of(UnitKind::TypeIIB)[0];
  auto got = intra_resolve(a, gw, ecu.id.bcadd);
  REQUIRE(got);
  CHECK(*got == ecu.intra_add);
  CHECK(intra_resolve(a, gw, gw.id.bcadd).value() == gw.intra_add);
  CHECK(intra_resolve(a, gw, b.units_of(UnitKind::TypeIIB)[0]->id.bcadd).error() == VehicleError::UnknownUnit);
  CHECK(intra_resolve(a, *b.units_of(UnitKind::TypeI)[0], ecu.id.bcadd).error() == VehicleError::UnknownUnit);
  CHECK(intra_resolve(a, ecu, gw.id.bcadd).error() == VehicleError::UnknownUnit);
  // Anything on another vehicle is Type III from here.
  CHECK_FALSE(classify(a, b.units[0].id.bcadd));
  CHECK_FALSE(classify(a, b.bcadd()));
}

TEST_CASE("endpoint selection prefers the nearest RSU") {
  auto w = world({{{"name", "r3"}, {"kind", "rsu"}, {"position", {3, 0}}},
                  {{"name", "r5"}, {"kind", "rsu"}, {"position", {0, 5}}},
                  {{"name", "e1"}, {"kind", "edge_server"}},
                  {{"name", "e2"}, {"kind", "edge_server"}}});
  const Participant* r3 = w.find("r3");
  const Participant* r5 = w.find("r5");
  std::vector<const Participant*> rsus{r5, r3};
  std::vector<const Participant*> edges{w.find("e1"), w.find("e2")};
  auto e = select_bedns_endpoint({0, 0}, rsus, edges, true);
  REQUIRE(e);
  CHECK(e->kind == EndpointKind::Rsu);
  CHECK(e->participant == r3);

  auto fb = select_bedns_endpoint({0, 0}, {}, edges, true);
  REQUIRE(fb);
  CHECK(fb->kind == EndpointKind::EdgeServer);
  CHECK(fb->participant == edges[0]);
  CHECK(select_bedns_endpoint({0, 0}, {}, edges, false).error() == VehicleError::NoEndpoint);
  CHECK(select_bedns_endpoint({0, 0}, {}, {}, true).error() == VehicleError::NoEndpoint);
}

TEST_CASE("equidistant RSUs tie to the lower BCADD") {
  auto w = world({{{"name", "n"}, {"kind", "rsu"}, {"position", {0, 4}}},
                  {{"name", "s"}, {"kind", "rsu"}, {"position", {0, -4}}}});
  const Participant* a = &w.participants[0];
  const Participant* b = &w.participants[1];
  const Participant* lower = a->bcadd() < b->bcadd() ? a : b;
  for (auto order : {std::vector{a, b}, std::vector{b, a}}) {
    CHECK(select_bedns_endpoint({0, 0}, order, {}, false)->participant == lower);
  }
}

TEST_CASE("endpoint selection is total") {
  simnet::Rng rng(5);
  nlohmann::json ps = nlohmann::json::array();
  for (int i = 0; i < 6; ++i) {
    ps.push_back({{"name", "r" + std::to_string(i)}, {"kind", "rsu"}, {"position", {rng.uniform(-10, 10), rng.uniform(-10, 10)}}});
  }
  ps.push_back({{"name", "e"}, {"kind", "edge_server"}});
  auto w = world(ps);
  const std::vector<const Participant*> edges{w.find("e")};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<const Participant*> in_range;
    for (int i = 0; i < 6; ++i) {
      if (rng.bernoulli(0.3)) in_range.push_back(&w.participants[i]);
    }
    const bool up = rng.bernoulli(0.5);
    const bool with_edges = rng.bernoulli(0.7);
    const Vec2 at{rng.uniform(-10, 10), rng.uniform(-10, 10)};
    auto e = select_bedns_endpoint(at, in_range, with_edges ? std::span(edges) : std::span<const Participant* const>{}, up);
    if (!in_range.empty()) {
      REQUIRE(e);
      CHECK(e->kind == EndpointKind::Rsu);
      for (const auto* r : in_range) CHECK(distance(at, *e->participant->position) <= distance(at, *r->position));
    } else if (up && with_edges) {
      CHECK(e->kind == EndpointKind::EdgeServer);
    } else {
      CHECK(e.error() == VehicleError::NoEndpoint);
    }
  }
}

TEST_CASE("RSUs refuse service requests from the internet") {
  auto w = world({{{"name", "r"}, {"kind", "rsu"}, {"position", {0, 0}}}, {{"name", "e"}, {"kind", "edge_server"}}});
  const Participant& rsu = *w.find("r");
  const Participant& edge = *w.find("e");
  CHECK_FALSE(enforce_isolation(rsu, Link::Internet, Category::Service));
  CHECK(enforce_isolation(rsu, Link::Wireless, Category::Service));
  CHECK(enforce_isolation(rsu, Link::Internet, Category::Consensus));
  CHECK(enforce_isolation(edge, Link::Internet, Category::Service));
  CHECK(rsu.interface(AddressKind::WirelessDirect));
  CHECK(rsu.interface(AddressKind::Internet));
}

TEST_CASE("routing policy keeps critical traffic on BeMutual") {
  RoutingPolicy p;
  CHECK(p.route(TrafficClass::Safety) == Route{true, true});
  CHECK(p.route(TrafficClass::Privacy) == Route{true, true});
  CHECK(p.route(TrafficClass::Bulk) == Route{false, false});
  CHECK(p.route(TrafficClass::Telemetry) == Route{false, false});
  CHECK(p.set(TrafficClass::Safety, {false, true}).error() == VehicleError::InvalidConfig);
  CHECK(p.set(TrafficClass::Bulk, {true, false}));
  CHECK(p.route(TrafficClass::Bulk) == Route{true, false});
}

TEST_CASE("world configuration is validated") {
  CHECK_FALSE(load_world({{"participants", {{{"name", "x"}, {"kind", "boat"}}}}}, 1));
  CHECK_FALSE(load_world({{"participants", {{{"name", "r"}, {"kind", "rsu"}}}}}, 1));
  CHECK_FALSE(load_world({{"participants", {car("v", {0, 0}, 1, 0, 0, 0), car("v", {0, 0}, 1, 0, 0, 0)}}}, 1));
  auto dup_label = car("v", {0, 0}, 0, 0, 0, 0);
  dup_label["units"] = {{{"name", "a"}, {"type", "I"}, {"label", "obu"}}, {{"name", "b"}, {"type", "I"}, {"label", "obu"}}};
  CHECK_FALSE(load_world({{"participants", {dup_label}}}, 1));
  auto same_label_other_type = car("v", {0, 0}, 0, 0, 0, 0);
  same_label_other_type["units"] = {{{"name", "a"}, {"type", "I"}, {"label", "x"}}, {{"name", "b"}, {"type", "IIB"}, {"label", "x"}}};
  CHECK(load_world({{"participants", {same_label_other_type}}}, 1));
  CHECK_FALSE(load_world({{"participants", nlohmann::json::array()}, {"routing", {{"safety", {{"bemutual", false}}}}}}, 1));
  CHECK_FALSE(load_world({{"participants", nlohmann::json::array()}, {"edge_servers", {"nobody"}}}, 1));
  CHECK_FALSE(load_world(nlohmann::json::object(), 1));

  auto gw_pick = car("v", {0, 0}, 0, 0, 0, 0);
  gw_pick["units"] = {{{"name", "g0"}, {"type", "I"}},
                      {{"name", "g1"}, {"type", "I"}},
                      {{"name", "cam"}, {"type", "IIA"}, {"exported", true}, {"gateway", "g1"}}};
  auto w = world({gw_pick});
  auto recs = vehicle_records(w.participants[0], {1});
  REQUIRE(recs);
  CHECK(recs->back().bcadd_ui == w.participants[0].units[1].id.bcadd);

  auto a = load_world({{"participants", {car("v", {0, 0}, 1, 1, 1, 1)}}}, 9);
  auto b = load_world({{"participants", {car("v", {0, 0}, 1, 1, 1, 1)}}}, 9);
  CHECK(a->participants[0].units[2].id.bcadd == b->participants[0].units[2].id.bcadd);
}
