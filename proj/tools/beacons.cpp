// Command-line driver: coverage experiment, protocol scenarios, ledger tools.
//
// Exit codes: 0 ok, 1 I/O or integrity failure, 2 usage, 3 invariant breach.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "beacons/bedns.hpp"
#include "beacons/mobility.hpp"
#include "beacons/protocol.hpp"

namespace {

using namespace beacons;

constexpr int kOk = 0;
constexpr int kIo = 1;
constexpr int kUsage = 2;
constexpr int kBreach = 3;

struct Failure {
  int code;
  std::string what;
};

template <typename Fn>
bool write_file(const std::string& path, Fn&& fill) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return false;
  fill(out);
  out.flush();
  return static_cast<bool>(out);
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kIo, "cannot read " + path};
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Failure{kIo, path + ": " + e.what()};
  }
}

struct MobilityArgs {
  std::string profile = "taxi";
  std::optional<double> turn_probability;
  std::uint32_t trials = 50;
  std::uint64_t seed = 1;
  std::string out;
  std::string svg;
  mobility::ExperimentConfig cfg;
};

int run_mobility(const MobilityArgs& a) {
  auto profile = mobility::profile_by_name(a.profile);
  if (a.turn_probability) {
    if (*a.turn_probability < 0 || *a.turn_probability > 1) throw Failure{kUsage, "--turn-probability must be in [0, 1]"};
    profile = mobility::VehicleProfile{profile ? profile->name : a.profile, *a.turn_probability};
  }
  if (!profile) throw Failure{kUsage, "unknown profile " + a.profile + " (van, car, taxi)"};
  mobility::TrialSummary s;
  try {
    s = mobility::run_trials(*profile, a.trials, a.seed, a.cfg);
  } catch (const std::invalid_argument& e) {
    throw Failure{kUsage, e.what()};
  }
  if (!a.out.empty() && !write_file(a.out, [&](std::ostream& o) { mobility::write_csv(o, s); })) {
    throw Failure{kIo, "cannot write " + a.out};
  }
  if (a.out.empty()) mobility::write_csv(std::cout, s);
  if (!a.svg.empty()) {
    const auto [route, field] = mobility::trial_world(s.trials.front().seed, *profile, a.cfg);
    if (!write_file(a.svg, [&](std::ostream& o) { o << mobility::to_svg(route, field); })) {
      throw Failure{kIo, "cannot write " + a.svg};
    }
  }
  char buf[200];
  std::snprintf(buf, sizeof buf, "%s: grand mean %.6f over %u trials (lambda %g per %g units of road, r %g, t1 %g)\n",
                profile->name.c_str(), s.grand_mean, a.trials, a.cfg.placement.lambda, a.cfg.placement.unit_length,
                a.cfg.placement.radius, a.cfg.t1);
  (a.out.empty() ? std::cerr : std::cout) << buf;
  return kOk;
}

struct ProtocolArgs {
  std::string scenario;
  std::string config;
  std::optional<std::size_t> nodes;
  std::optional<std::uint64_t> seed;
  std::optional<simnet::Tick> horizon;
  std::optional<simnet::Tick> jitter;
  std::optional<std::size_t> silenced;
  std::string trace;
  std::string events;
  std::string summary;
  std::string ledger;
};

int run_protocol(const ProtocolArgs& a) {
  protocol::ProtocolConfig cfg;
  if (!a.config.empty()) {
    auto parsed = protocol::parse_config(read_json(a.config), cfg);
    if (!parsed) throw Failure{kUsage, a.config + ": " + parsed.error()};
    cfg = *parsed;
  }
  if (!a.scenario.empty()) {
    auto s = protocol::parse_scenario(a.scenario);
    if (!s) throw Failure{kUsage, "unknown scenario " + a.scenario};
    cfg.scenario = *s;
  } else if (a.config.empty()) {
    throw Failure{kUsage, "--scenario or --config is required"};
  }
  if (a.nodes) cfg.nodes = *a.nodes;
  if (a.seed) cfg.seed = *a.seed;
  if (a.horizon) cfg.horizon = *a.horizon;
  if (a.jitter) cfg.jitter = *a.jitter;
  if (a.silenced) cfg.silenced = *a.silenced;
  // Re-validate after the flag overrides.
  auto checked = protocol::parse_config(protocol::to_json(cfg));
  if (!checked) throw Failure{kUsage, checked.error()};
  cfg.trace = !a.trace.empty() || !a.events.empty();

  protocol::ProtocolReport r;
  try {
    r = protocol::run_protocol(cfg);
  } catch (const std::invalid_argument& e) {
    throw Failure{kUsage, e.what()};
  }
  if (!a.trace.empty() && !write_file(a.trace, [&](std::ostream& o) {
        for (const auto& l : r.messages) o << l << '\n';
        for (const auto& l : r.handshakes) o << l << '\n';
      })) {
    throw Failure{kIo, "cannot write " + a.trace};
  }
  if (!a.events.empty() && !write_file(a.events, [&](std::ostream& o) {
        for (const auto& l : r.events) o << l << '\n';
      })) {
    throw Failure{kIo, "cannot write " + a.events};
  }
  if (!a.ledger.empty() &&
      !write_file(a.ledger, [&](std::ostream& o) { o << bedns::blocks_to_json(r.ledger).dump(1) << '\n'; })) {
    throw Failure{kIo, "cannot write " + a.ledger};
  }
  const auto summary = r.summary().dump();
  if (!a.summary.empty() && !write_file(a.summary, [&](std::ostream& o) { o << summary << '\n'; })) {
    throw Failure{kIo, "cannot write " + a.summary};
  }
  std::cout << summary << '\n';
  if (!r.invariants_hold()) {
    for (const auto& c : r.checks) {
      if (!c.ok) std::cerr << "invariant violated: " << c.name << ": " << c.detail << '\n';
    }
    return kBreach;
  }
  return kOk;
}

std::vector<bedns::Block> load_blocks(const std::string& path) {
  try {
    return bedns::blocks_from_json(read_json(path));
  } catch (const Failure&) {
    throw;
  } catch (const std::exception& e) {
    throw Failure{kIo, path + ": " + e.what()};
  }
}

int ledger_verify(const std::string& path) {
  const auto blocks = load_blocks(path);
  const auto bad = bedns::first_bad_block(blocks);
  nlohmann::json j{{"ok", !bad}, {"blocks", blocks.size()}};
  if (bad) j["first_bad_block"] = *bad;
  std::cout << j.dump() << '\n';
  return bad ? kIo : kOk;
}

int ledger_search(const std::string& path, const std::string& bcadd_hex, const std::string& cls,
                  const std::string& label) {
  BlockchainAddress who;
  try {
    who = BlockchainAddress{array_from_hex<20>(bcadd_hex)};
  } catch (const std::exception&) {
    throw Failure{kUsage, "--bcadd must be 40 hex digits"};
  }
  std::vector<bedns::RecordClass> classes{bedns::RecordClass::I, bedns::RecordClass::II, bedns::RecordClass::III};
  if (!cls.empty()) {
    auto c = bedns::parse_record_class(cls);
    if (!c) throw Failure{kUsage, "--class must be I, II or III"};
    classes = {*c};
  }
  std::optional<Label> lbl;
  if (!label.empty()) lbl = Label{label};
  const auto ledger = bedns::Ledger::from_blocks(load_blocks(path));
  auto out = nlohmann::json::array();
  for (auto c : classes) {
    if (auto found = ledger.search(who, c, lbl)) {
      for (const auto& r : *found) out.push_back(bedns::record_to_json(r));
    }
  }
  std::cout << out.dump() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BeACONS simulations and tools"};
  app.require_subcommand(1);

  MobilityArgs mob;
  auto* m = app.add_subcommand("run-mobility", "effective-RSU experiment over random routes");
  m->add_option("--profile", mob.profile, "van, car or taxi");
  m->add_option("--turn-probability", mob.turn_probability, "custom chance of turning at a checkpoint");
  m->add_option("--trials", mob.trials, "routes per run")->check(CLI::PositiveNumber);
  m->add_option("--seed", mob.seed, "base seed");
  m->add_option("--out", mob.out, "CSV output (stdout if absent)");
  m->add_option("--svg", mob.svg, "SVG of the first trial's route and RSUs");
  m->add_option("--horizon", mob.cfg.route.horizon, "ticks per route");
  m->add_option("--interval", mob.cfg.route.interval, "ticks between checkpoints");
  m->add_option("--speed", mob.cfg.route.speed, "distance per tick");
  m->add_option("--lambda", mob.cfg.placement.lambda, "RSU intensity");
  m->add_option("--unit-length", mob.cfg.placement.unit_length, "road length per unit of intensity");
  m->add_option("--radius", mob.cfg.placement.radius, "service circle radius");
  m->add_option("--t1", mob.cfg.t1, "minimum available time slot");

  ProtocolArgs pro;
  auto* p = app.add_subcommand("run-protocol", "run a membership or security scenario on simulated RSUs");
  p->add_option("--scenario", pro.scenario,
                "absorb, expel-primary, interlayer-handshake, fault-injection, byzantine, isolation");
  p->add_option("--config", pro.config, "scenario JSON");
  p->add_option("--nodes", pro.nodes, "initial RSU group size");
  p->add_option("--seed", pro.seed, "run seed");
  p->add_option("--horizon", pro.horizon, "tick limit");
  p->add_option("--jitter", pro.jitter, "extra random delay per message, in ticks");
  p->add_option("--silenced", pro.silenced, "fault-injection: members silenced at tick 0");
  p->add_option("--trace", pro.trace, "JSON lines: consensus messages and handshake steps");
  p->add_option("--events", pro.events, "JSON lines: simulator events");
  p->add_option("--summary", pro.summary, "summary JSON");
  p->add_option("--ledger", pro.ledger, "export the final ledger of a correct RSU");

  std::string ledger_path, bcadd, cls, label;
  auto* l = app.add_subcommand("ledger", "inspect an exported ledger");
  l->require_subcommand(1);
  auto* v = l->add_subcommand("verify", "recompute the hash chain");
  v->add_option("file", ledger_path)->required();
  auto* s = l->add_subcommand("search", "latest records of a participant");
  s->add_option("file", ledger_path)->required();
  s->add_option("--bcadd", bcadd, "participant address, hex")->required();
  s->add_option("--class", cls, "I, II or III");
  s->add_option("--label", label, "unit label");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  try {
    if (m->parsed()) return run_mobility(mob);
    if (p->parsed()) return run_protocol(pro);
    if (v->parsed()) return ledger_verify(ledger_path);
    if (s->parsed()) return ledger_search(ledger_path, bcadd, cls, label);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.what << '\n';
    if (f.code == kUsage) std::cerr << app.help();
    return f.code;
  }
  return kUsage;
}
