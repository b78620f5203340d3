#pragma once

// Protocol scenarios over the simulated network: an RSU group, the vehicles
// it serves, and the checks every run must pass.

#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "beacons/consensus/byzantine.hpp"
#include "beacons/consensus/client.hpp"
#include "beacons/simnet/simulator.hpp"

namespace beacons::protocol {

enum class Scenario { Absorb, ExpelPrimary, InterlayerHandshake, FaultInjection, Byzantine, Isolation };

const char* to_string(Scenario s);
std::optional<Scenario> parse_scenario(std::string_view s);

struct ProtocolConfig {
  Scenario scenario = Scenario::Absorb;
  std::size_t nodes = 4;
  std::uint64_t seed = 1;
  simnet::Tick horizon = 3600;
  /// Extra per-message delay drawn uniformly from [0, jitter].
  simnet::Tick jitter = 0;
  /// fault-injection: members silenced from tick 0.
  std::size_t silenced = 2;
  /// byzantine: ledger operations submitted one after another.
  std::size_t operations = 3;
  /// isolation: lookups sent to each target.
  std::size_t requests = 5;
  consensus::HeartbeatConfig heartbeat{};
  consensus::ByzantineConfig byzantine{};
  /// interlayer-handshake: vehicles and units. Empty for the built-in pair.
  nlohmann::json world;
  /// Keep message and event traces.
  bool trace = true;
};

/// Reads overrides from `j` on top of `base`.
Expected<ProtocolConfig, std::string> parse_config(const nlohmann::json& j, ProtocolConfig base = {});
nlohmann::json to_json(const ProtocolConfig& cfg);

/// Records decisions of correct members and flags any slot decided twice
/// with different requests.
class SafetyMonitor {
 public:
  /// False if `d` conflicts with an earlier decision for the same slot.
  bool record(const BlockchainAddress& node, const consensus::Decision& d);
  std::uint64_t violations() const { return violations_; }
  std::uint64_t decisions() const { return decisions_; }
  std::uint64_t highest_seq() const { return by_seq_.empty() ? 0 : by_seq_.rbegin()->first; }

 private:
  std::map<std::uint64_t, Digest> by_seq_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, Digest> by_view_seq_;
  std::uint64_t violations_ = 0;
  std::uint64_t decisions_ = 0;
};

struct Check {
  std::string name;
  bool ok = true;
  std::string detail;
};

struct IsolationCounts {
  std::uint64_t rsu_internet_sent = 0;
  std::uint64_t rsu_internet_serviced = 0;
  std::uint64_t rsu_wireless_sent = 0;
  std::uint64_t rsu_wireless_serviced = 0;
  std::uint64_t edge_sent = 0;
  std::uint64_t edge_serviced = 0;
  std::uint64_t answers = 0;  // responses that reached the requester with a record
};

/// A view-change quorum as seen by one correct member.
struct ViewChangeRecord {
  std::string member;
  std::uint64_t view = 0;
  std::string primary;
  std::vector<std::string> voters;
};

struct ProtocolReport {
  ProtocolConfig config;
  std::uint64_t decisions = 0;  // highest sequence number decided
  std::size_t sessions = 0;
  std::size_t n_v = 0;
  std::map<std::string, std::size_t> n_xi;  // correct members only
  std::string primary;
  std::uint64_t view = 0;
  std::vector<consensus::Completion> completions;
  std::uint64_t safety_violations = 0;
  std::vector<Check> checks;
  IsolationCounts isolation;
  simnet::TrafficStats traffic;
  simnet::Tick finished_at = 0;
  std::vector<std::string> messages;    // one JSON line per consensus message sent
  std::vector<std::string> events;      // simulator event trace
  std::vector<std::string> handshakes;  // BeMutual handshake log
  std::string relay;                    // interlayer-handshake outcome
  std::vector<bedns::Block> ledger;     // chain of a correct member at the end
  std::string expelled;                 // expel-primary: the primary voted out
  std::vector<ViewChangeRecord> view_changes;

  bool invariants_hold() const;
  nlohmann::json summary() const;
};

ProtocolReport run_protocol(const ProtocolConfig& cfg);

}  // namespace beacons::protocol
