#pragma once

// Coverage experiment: a vehicle wanders an axis-aligned grid, RSUs are
// scattered along the roads it takes, and we count how many RSUs are both in
// range and stay in range long enough to be useful.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "beacons/geometry.hpp"

namespace beacons::mobility {

enum class Turn { Left, Right, Straight };

const char* to_string(Turn t);

struct VehicleProfile {
  std::string name;
  double turn_probability = 0.0;

  static VehicleProfile van() { return {"van", 0.40}; }
  static VehicleProfile private_car() { return {"car", 0.60}; }
  static VehicleProfile taxi() { return {"taxi", 0.80}; }
};

/// van, car (or private-car), taxi.
std::optional<VehicleProfile> profile_by_name(std::string_view name);

struct RouteParams {
  std::uint32_t horizon = 3600;  // ticks
  std::uint32_t interval = 20;   // ticks between checkpoints
  double speed = 1.0;
};

/// Polyline driven at constant speed. waypoints[i] is reached at times[i];
/// segment i runs from waypoint i to i + 1 along headings[i].
struct RouteTrace {
  std::vector<Vec2> waypoints;
  std::vector<double> times;
  std::vector<Vec2> headings;
  std::vector<Turn> decisions;
  double speed = 1.0;
  std::uint32_t horizon = 0;

  std::size_t segments() const { return headings.size(); }
  double segment_length(std::size_t i) const { return speed * (times[i + 1] - times[i]); }
  Vec2 position(double t) const;
};

/// Starts at the origin heading +x. At every checkpoint the vehicle turns
/// with the profile's probability, left and right equally likely; U-turns
/// never happen. Throws std::invalid_argument unless interval divides horizon.
RouteTrace generate_route(std::uint64_t seed, const VehicleProfile& profile, const RouteParams& params = {});

/// One straight segment of `duration` ticks from `start` along unit `heading`.
RouteTrace straight_route(Vec2 start, Vec2 heading, std::uint32_t duration, double speed = 1.0);

struct Placement {
  double lambda = 1.0;  // RSUs per unit_length of road
  double radius = 7.0;
  /// Road length per unit of intensity. See README for the calibration.
  double unit_length = 4.0;
};

struct RsuField {
  std::vector<Vec2> positions;
  double lambda = 1.0;
  double radius = 7.0;
  double unit_length = 4.0;
};

/// Per segment: Poisson(lambda * length / unit_length) RSUs, uniform along
/// the segment, perpendicular offset uniform on [-radius, radius].
RsuField place_rsus(std::uint64_t seed, const RouteTrace& route, const Placement& placement = {});

struct Interval {
  double enter = 0.0;
  double exit = 0.0;
  double length() const { return exit - enter; }
};

/// Maximal closed time intervals with the vehicle inside the closed disc of
/// `radius` around `rsu`. Exact segment-circle geometry; an interval runs on
/// through a corner when the vehicle stays inside.
std::vector<Interval> dwell_intervals(const RouteTrace& route, Vec2 rsu, double radius);

/// For every tick in [0, horizon): RSUs whose dwell interval covering that
/// tick lasts at least t1.
std::vector<std::uint32_t> effective_count_series(const RouteTrace& route, const RsuField& field, double t1 = 5.0);

double mean(const std::vector<std::uint32_t>& series);

struct ExperimentConfig {
  RouteParams route{};
  Placement placement{};
  double t1 = 5.0;
};

struct TrialResult {
  std::uint32_t trial = 0;  // 1-based
  std::uint64_t seed = 0;
  double mean = 0.0;
};

struct TrialSummary {
  VehicleProfile profile;
  std::uint64_t base_seed = 0;
  ExperimentConfig config;
  std::vector<TrialResult> trials;
  double grand_mean = 0.0;
};

/// Seed of trial i (1-based) under `base_seed`. Independent of the profile,
/// so profiles compared at one base seed share their random draws.
std::uint64_t trial_seed(std::uint64_t base_seed, std::uint32_t trial);

/// Route and field of one trial.
std::pair<RouteTrace, RsuField> trial_world(std::uint64_t seed, const VehicleProfile& profile,
                                            const ExperimentConfig& cfg = {});

/// Throws std::invalid_argument for n == 0.
TrialSummary run_trials(const VehicleProfile& profile, std::uint32_t n, std::uint64_t base_seed,
                        const ExperimentConfig& cfg = {});

/// trial,seed,mean rows and a closing grand_mean row.
void write_csv(std::ostream& out, const TrialSummary& s);
/// Route as a path, RSUs as circles, in world units.
std::string to_svg(const RouteTrace& route, const RsuField& field);

}  // namespace beacons::mobility
