#pragma once

// Deterministic discrete-event world: one clock, one totally ordered event
// queue, range-limited wireless delivery, internet delivery and fault
// injection. Strictly single-threaded.

#include <any>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "beacons/geometry.hpp"
#include "beacons/simnet/rng.hpp"

namespace beacons::simnet {

using Tick = std::uint64_t;
using EndpointId = std::uint32_t;

enum class EventKind { Deliver, Timer, Move, Fault };
enum class Link { Wireless, Internet };
/// What a packet is for. RSU isolation keys off this together with the link.
enum class Category { Service, Consensus, Heartbeat, Handshake };

const char* to_string(EventKind k);
const char* to_string(Link l);
const char* to_string(Category c);

struct Packet {
  EndpointId from = 0;
  EndpointId to = 0;
  Link link = Link::Internet;
  Category category = Category::Service;
  std::string kind;
  std::string detail;
  std::any body;
};

using Handler = std::function<void(const Packet&)>;
/// Returns false to drop an inbound packet (isolation policy).
using Filter = std::function<bool(const Packet&)>;
using Trajectory = std::function<Vec2(Tick)>;

struct EndpointSpec {
  std::string name;
  bool wireless = true;
  bool internet = true;
  Trajectory position;  // empty for endpoints with no physical location
  Handler handler;
  Filter filter;
};

/// Service circle: closed disc of radius `range`.
struct WirelessModel {
  double range = 7.0;
  bool in_range(Vec2 a, Vec2 b) const { return distance(a, b) <= range; }
};

struct NetworkConfig {
  WirelessModel wireless{};
  Tick wireless_delay = 1;
  Tick internet_delay = 1;
  /// Extra uniform delay in [0, jitter] per message, drawn from the seeded RNG.
  Tick jitter = 0;
};

/// Every sent packet ends in exactly one of these buckets (or is in flight).
struct TrafficStats {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped_range = 0;
  std::uint64_t dropped_fault = 0;
  std::uint64_t dropped_isolation = 0;
  std::uint64_t dropped_unroutable = 0;

  std::uint64_t accounted() const {
    return delivered + dropped_range + dropped_fault + dropped_isolation + dropped_unroutable;
  }
};

class Simulator {
 public:
  Simulator(NetworkConfig cfg, std::uint64_t seed);

  EndpointId add_endpoint(EndpointSpec spec);
  void set_handler(EndpointId id, Handler h);
  void set_filter(EndpointId id, Filter f);
  const std::string& name(EndpointId id) const { return endpoints_.at(id).spec.name; }
  std::size_t endpoint_count() const { return endpoints_.size(); }

  Tick now() const { return now_; }

  /// Enqueue `action` at now + delay. Same-tick events run in scheduling order.
  void schedule(Tick delay, EventKind kind, std::string actor, std::string detail,
                std::function<void()> action);
  void schedule_timer(Tick delay, EndpointId owner, std::string detail, std::function<void()> fn);
  /// Replace an endpoint's trajectory at now + delay.
  void schedule_move(Tick delay, EndpointId id, Trajectory trajectory);
  /// Silence an endpoint from now + delay: its outbound packets are dropped.
  void schedule_silence(Tick delay, EndpointId id);

  void send(EndpointId from, EndpointId to, Link link, Category category, std::string kind,
            std::any body, std::string detail = {});
  /// One copy per wireless-capable endpoint; range is checked on delivery.
  void broadcast_wireless(EndpointId from, Category category, std::string kind,
                          const std::any& body, std::optional<Tick> delay = std::nullopt);
  /// Periodic zero-latency wireless heartbeat, starting this tick.
  void broadcast_heartbeat(EndpointId rsu, Tick period, std::function<std::any()> make_body);

  bool silenced(EndpointId id) const {
    const auto& from = endpoints_.at(id).silenced_from;
    return from && now_ >= *from;
  }
  std::optional<Vec2> position(EndpointId id) const;
  bool in_range(EndpointId a, EndpointId b) const;

  /// Tick of the earliest queued event.
  std::optional<Tick> next_tick() const {
    if (queue_.empty()) return std::nullopt;
    return queue_.top().tick;
  }
  /// Run every event of the next populated tick. False when the queue is empty.
  bool step();
  /// Run all events scheduled before `horizon`, then park the clock there.
  void run(Tick horizon);

  const TrafficStats& stats() const { return stats_; }
  std::uint64_t in_flight() const { return stats_.sent - stats_.accounted(); }
  const std::vector<std::string>& trace() const { return trace_; }
  void set_tracing(bool on) { tracing_ = on; }
  Rng& rng() { return rng_; }
  const NetworkConfig& config() const { return cfg_; }

 private:
  struct Endpoint {
    EndpointSpec spec;
    std::optional<Tick> silenced_from;
  };
  struct Event {
    Tick tick;
    std::uint64_t seq;
    EventKind kind;
    std::string actor;
    std::string detail;
    std::function<void()> action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.tick != b.tick ? a.tick > b.tick : a.seq > b.seq;
    }
  };

  void deliver(Packet p);
  void record(Tick tick, std::uint64_t seq, EventKind kind, const std::string& actor,
              const std::string& detail);
  Tick link_delay(Link link);

  NetworkConfig cfg_;
  Rng rng_;
  Rng net_rng_;
  Tick now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::vector<Endpoint> endpoints_;
  TrafficStats stats_;
  std::vector<std::string> trace_;
  std::string trace_detail_;
  bool tracing_ = true;
};

}  // namespace beacons::simnet
