#include <doctest.h>

#include <algorithm>

#include "beacons/protocol.hpp"

using namespace beacons;
using namespace beacons::protocol;

namespace {

ProtocolConfig config(Scenario s, std::uint64_t seed) {
  ProtocolConfig c;
  c.scenario = s;
  c.seed = seed;
  return c;
}

std::string failed_checks(const ProtocolReport& r) {
  std::string out;
  for (const auto& c : r.checks) {
    if (!c.ok) out += c.name + ": " + c.detail + "; ";
  }
  return out;
}

const consensus::Completion* first_of(const ProtocolReport& r, consensus::RequestKind k) {
  for (const auto& c : r.completions) {
    if (c.kind == k) return &c;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("absorb grows the group to five everywhere") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto r = run_protocol(config(Scenario::Absorb, seed));
    INFO(r.summary().dump());
    CHECK_MESSAGE(r.invariants_hold(), failed_checks(r));
    const auto* abs = first_of(r, consensus::RequestKind::Absorb);
    REQUIRE(abs);
    CHECK_FALSE(abs->error);
    CHECK(abs->threshold == 2);
    CHECK(r.n_v == 5);
    CHECK(r.n_xi.size() == 5);
    for (const auto& [name, n] : r.n_xi) CHECK(n == 5);
    CHECK(r.view == 0);
    CHECK(r.sessions == 1);
    const auto* op = first_of(r, consensus::RequestKind::Operation);
    REQUIRE(op);
    CHECK_FALSE(op->error);
  }
}

TEST_CASE("expelling the primary never re-elects it") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto r = run_protocol(config(Scenario::ExpelPrimary, seed));
    INFO(r.summary().dump());
    CHECK_MESSAGE(r.invariants_hold(), failed_checks(r));
    const auto* exp = first_of(r, consensus::RequestKind::Expel);
    REQUIRE(exp);
    CHECK_FALSE(exp->error);
    CHECK(exp->threshold == 2);  // ceil((4 + 1) / 3) with the pre-expulsion size
    CHECK(r.n_v == 3);
    CHECK(r.view >= 1);
    const bool checked = std::any_of(r.checks.begin(), r.checks.end(),
                                     [](const Check& c) { return c.name == "primary exclusion"; });
    CHECK(checked);
  }
}

TEST_CASE("expulsion completes when the primary's prepare is part of the proof") {
  // With jitter, a member can start the view change holding exactly a quorum
  // of prepares, one of them from the primary being voted out.
  auto c = config(Scenario::ExpelPrimary, 6);
  c.jitter = 2;
  auto r = run_protocol(c);
  INFO(r.summary().dump());
  CHECK_MESSAGE(r.invariants_hold(), failed_checks(r));
  CHECK(r.n_v == 3);
  for (const auto& [name, n] : r.n_xi) CHECK(n == 3);
}

TEST_CASE("two silenced members out of four stall the group without breaking it") {
  auto r = run_protocol(config(Scenario::FaultInjection, 7));
  INFO(r.summary().dump());
  CHECK(r.invariants_hold());
  const auto* abs = first_of(r, consensus::RequestKind::Absorb);
  REQUIRE(abs);
  REQUIRE(abs->error);
  CHECK(*abs->error == consensus::ClientError::NoQuorum);
  CHECK(r.decisions == 0);
  CHECK(r.traffic.dropped_fault > 0);
}

TEST_CASE("one silenced member out of four is tolerated") {
  auto c = config(Scenario::FaultInjection, 8);
  c.silenced = 1;
  auto r = run_protocol(c);
  INFO(r.summary().dump());
  CHECK(r.invariants_hold());
  const auto* abs = first_of(r, consensus::RequestKind::Absorb);
  REQUIRE(abs);
  CHECK_FALSE(abs->error);
}

TEST_CASE("a byzantine member never splits decisions") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto r = run_protocol(config(Scenario::Byzantine, seed));
    INFO(seed);
    CHECK(r.safety_violations == 0);
    CHECK(r.invariants_hold());
  }
}

TEST_CASE("rsus refuse internet lookups while edge servers answer them") {
  auto r = run_protocol(config(Scenario::Isolation, 4));
  INFO(r.summary().dump());
  CHECK(r.invariants_hold());
  const auto& iso = r.isolation;
  CHECK(iso.rsu_internet_sent == 4 * 5);
  CHECK(iso.rsu_internet_serviced == 0);
  CHECK(iso.edge_sent == 2 * 5);
  CHECK(iso.edge_serviced == iso.edge_sent);
  CHECK(iso.rsu_wireless_sent == 5);
  CHECK(iso.rsu_wireless_serviced == 5);
  CHECK(iso.answers == iso.edge_sent + iso.rsu_wireless_sent);
  CHECK(r.traffic.dropped_isolation == iso.rsu_internet_sent);
}

TEST_CASE("units on two vehicles talk through their gateways") {
  auto r = run_protocol(config(Scenario::InterlayerHandshake, 5));
  INFO(r.summary().dump());
  CHECK(r.invariants_hold());
  CHECK(r.relay == "established");
  CHECK(r.sessions == 4);
  const auto opaque = std::find_if(r.checks.begin(), r.checks.end(),
                                   [](const Check& c) { return c.name == "gateway opacity"; });
  REQUIRE(opaque != r.checks.end());
  CHECK(opaque->ok);
  // Class II for the gateway and Class III for the exported camera, per vehicle.
  CHECK(r.decisions == 4);
}

TEST_CASE("same seed, same run") {
  for (auto s : {Scenario::Absorb, Scenario::ExpelPrimary, Scenario::Byzantine, Scenario::Isolation,
                 Scenario::InterlayerHandshake}) {
    auto c = config(s, 11);
    c.jitter = 2;
    auto a = run_protocol(c);
    auto b = run_protocol(c);
    CHECK(a.messages == b.messages);
    CHECK(a.events == b.events);
    CHECK(a.handshakes == b.handshakes);
    CHECK(a.summary().dump() == b.summary().dump());
  }
}

TEST_CASE("config overrides and round trip") {
  auto c = parse_config(nlohmann::json{{"scenario", "byzantine"}, {"nodes", 7}, {"seed", 9}, {"jitter", 2}});
  REQUIRE(c);
  CHECK(c->scenario == Scenario::Byzantine);
  CHECK(c->nodes == 7);
  auto again = parse_config(to_json(*c));
  REQUIRE(again);
  CHECK(to_json(*again) == to_json(*c));
  CHECK_FALSE(parse_config(nlohmann::json{{"colour", 1}}));
  CHECK_FALSE(parse_config(nlohmann::json{{"scenario", "teleport"}}));
  CHECK_FALSE(parse_config(nlohmann::json{{"nodes", 0}}));
  CHECK(parse_scenario("expel-primary") == Scenario::ExpelPrimary);
}

TEST_CASE("safety monitor flags a slot decided twice") {
  SafetyMonitor m;
  consensus::Decision a;
  a.seq = 1;
  a.digest.bytes[0] = 1;
  consensus::Decision b = a;
  b.digest.bytes[0] = 2;
  BlockchainAddress x;
  CHECK(m.record(x, a));
  CHECK(m.record(x, a));
  CHECK_FALSE(m.record(x, b));
  CHECK(m.violations() == 1);
  CHECK(m.highest_seq() == 1);
}
