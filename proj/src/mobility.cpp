#include "beacons/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "beacons/simnet/rng.hpp"

namespace beacons::mobility {

const char* to_string(Turn t) {
  switch (t) {
    case Turn::Left: return "L";
    case Turn::Right: return "R";
    case Turn::Straight: return "S";
  }
  return "?";
}

std::optional<VehicleProfile> profile_by_name(std::string_view name) {
  if (name == "van") return VehicleProfile::van();
  if (name == "car" || name == "private-car") return VehicleProfile::private_car();
  if (name == "taxi") return VehicleProfile::taxi();
  return std::nullopt;
}

Vec2 RouteTrace::position(double t) const {
  if (t <= times.front()) return waypoints.front();
  if (t >= times.back()) return waypoints.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - times.begin()) - 1;
  return waypoints[i] + (speed * (t - times[i])) * headings[i];
}

RouteTrace generate_route(std::uint64_t seed, const VehicleProfile& profile, const RouteParams& params) {
  if (params.interval == 0 || params.horizon % params.interval != 0) {
    throw std::invalid_argument("checkpoint interval must divide the horizon");
  }
  if (!(params.speed > 0)) throw std::invalid_argument("speed must be positive");
  simnet::Rng rng = simnet::Rng(seed).split("route");
  RouteTrace r;
  r.speed = params.speed;
  r.horizon = params.horizon;
  r.waypoints.push_back({0, 0});
  r.times.push_back(0);
  Vec2 heading{1, 0};
  for (std::uint32_t t = params.interval; t <= params.horizon; t += params.interval) {
    // Both draws happen every time so that profiles sharing a seed share
    // their left/right choices.
    const double u = rng.uniform();
    const bool left = rng.bernoulli(0.5);
    const Turn turn = u < profile.turn_probability ? (left ? Turn::Left : Turn::Right) : Turn::Straight;
    r.decisions.push_back(turn);
    if (turn == Turn::Straight || t == params.horizon) continue;
    r.waypoints.push_back(r.waypoints.back() + (params.speed * (t - r.times.back())) * heading);
    r.times.push_back(t);
    r.headings.push_back(heading);
    heading = turn == Turn::Left ? Vec2{-heading.y, heading.x} : Vec2{heading.y, -heading.x};
  }
  r.waypoints.push_back(r.waypoints.back() + (params.speed * (params.horizon - r.times.back())) * heading);
  r.times.push_back(params.horizon);
  r.headings.push_back(heading);
  return r;
}

RouteTrace straight_route(Vec2 start, Vec2 heading, std::uint32_t duration, double speed) {
  RouteTrace r;
  r.speed = speed;
  r.horizon = duration;
  r.waypoints = {start, start + (speed * duration) * heading};
  r.times = {0.0, static_cast<double>(duration)};
  r.headings = {heading};
  return r;
}

RsuField place_rsus(std::uint64_t seed, const RouteTrace& route, const Placement& p) {
  if (!(p.lambda > 0) || !(p.radius > 0) || !(p.unit_length > 0)) {
    throw std::invalid_argument("lambda, radius and unit length must be positive");
  }
  simnet::Rng rng = simnet::Rng(seed).split("rsus");
  RsuField f{{}, p.lambda, p.radius, p.unit_length};
  for (std::size_t i = 0; i < route.segments(); ++i) {
    const double len = route.segment_length(i);
    const Vec2 u = route.headings[i];
    const Vec2 normal{-u.y, u.x};
    const auto count = rng.poisson(p.lambda * len / p.unit_length);
    for (std::uint64_t k = 0; k < count; ++k) {
      const double along = rng.uniform(0, len);
      const double off = rng.uniform(-p.radius, p.radius);
      f.positions.push_back(route.waypoints[i] + along * u + off * normal);
    }
  }
  return f;
}

std::vector<Interval> dwell_intervals(const RouteTrace& route, Vec2 rsu, double radius) {
  std::vector<Interval> out;
  for (std::size_t i = 0; i < route.segments(); ++i) {
    const Vec2 u = route.headings[i];
    const Vec2 w = route.waypoints[i] - rsu;
    const double c = std::abs(cross(u, w));
    if (c > radius) continue;
    // Half chord, written to keep precision when the pass is nearly tangent.
    const double h = std::sqrt((radius - c) * (radius + c));
    const double b = dot(u, w);
    const double len = route.segment_length(i);
    const double lo = std::max(-b - h, 0.0);
    const double hi = std::min(-b + h, len);
    if (lo > hi) continue;
    Interval iv{lo == 0.0 ? route.times[i] : route.times[i] + lo / route.speed,
                hi == len ? route.times[i + 1] : route.times[i] + hi / route.speed};
    if (!out.empty() && iv.enter <= out.back().exit) {
      out.back().exit = std::max(out.back().exit, iv.exit);
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

std::vector<std::uint32_t> effective_count_series(const RouteTrace& route, const RsuField& field, double t1) {
  const std::size_t n = route.horizon;
  std::vector<std::int64_t> diff(n + 1, 0);
  for (const Vec2& rsu : field.positions) {
    for (const Interval& iv : dwell_intervals(route, rsu, field.radius)) {
      if (iv.length() < t1) continue;
      const double first = std::max(0.0, std::ceil(iv.enter));
      const double last = std::min(static_cast<double>(n) - 1, std::floor(iv.exit));
      if (first > last) continue;
      ++diff[static_cast<std::size_t>(first)];
      --diff[static_cast<std::size_t>(last) + 1];
    }
  }
  std::vector<std::uint32_t> series(n);
  std::int64_t running = 0;
  for (std::size_t t = 0; t < n; ++t) {
    running += diff[t];
    series[t] = static_cast<std::uint32_t>(running);
  }
  return series;
}

double mean(const std::vector<std::uint32_t>& series) {
  if (series.empty()) return 0.0;
  const double sum = std::accumulate(series.begin(), series.end(), 0.0);
  return sum / static_cast<double>(series.size());
}

std::uint64_t trial_seed(std::uint64_t base_seed, std::uint32_t trial) {
  return simnet::derive_seed(base_seed, "mobility-trial", trial);
}

std::pair<RouteTrace, RsuField> trial_world(std::uint64_t seed, const VehicleProfile& profile,
                                            const ExperimentConfig& cfg) {
  RouteTrace route = generate_route(seed, profile, cfg.route);
  RsuField field = place_rsus(seed, route, cfg.placement);
  return {std::move(route), std::move(field)};
}

TrialSummary run_trials(const VehicleProfile& profile, std::uint32_t n, std::uint64_t base_seed,
                        const ExperimentConfig& cfg) {
  if (n == 0) throw std::invalid_argument("at least one trial is needed");
  TrialSummary s{profile, base_seed, cfg, {}, 0.0};
  double total = 0;
  for (std::uint32_t i = 1; i <= n; ++i) {
    const auto seed = trial_seed(base_seed, i);
    const auto [route, field] = trial_world(seed, profile, cfg);
    const double m = mean(effective_count_series(route, field, cfg.t1));
    s.trials.push_back({i, seed, m});
    total += m;
  }
  s.grand_mean = total / n;
  return s;
}

void write_csv(std::ostream& out, const TrialSummary& s) {
  char buf[96];
  out << "trial,seed,mean\n";
  for (const auto& t : s.trials) {
    std::snprintf(buf, sizeof buf, "%u,%llu,%.6f\n", t.trial, static_cast<unsigned long long>(t.seed), t.mean);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "grand_mean,,%.6f\n", s.grand_mean);
  out << buf;
}

std::string to_svg(const RouteTrace& route, const RsuField& field) {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  auto grow = [&](Vec2 p, double pad) {
    x0 = std::min(x0, p.x - pad);
    y0 = std::min(y0, p.y - pad);
    x1 = std::max(x1, p.x + pad);
    y1 = std::max(y1, p.y + pad);
  };
  for (const Vec2& p : route.waypoints) grow(p, 1);
  for (const Vec2& p : field.positions) grow(p, field.radius);
  char buf[160];
  std::string s;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"%.3f %.3f %.3f %.3f\">\n", x0, y0, x1 - x0,
                y1 - y0);
  s += buf;
  for (const Vec2& p : field.positions) {
    std::snprintf(buf, sizeof buf,
                  "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"%.3f\" fill=\"none\" stroke=\"#4a90d9\" stroke-width=\"0.2\"/>\n",
                  p.x, p.y, field.radius);
    s += buf;
  }
  s += "<path fill=\"none\" stroke=\"#c0392b\" stroke-width=\"0.6\" d=\"";
  for (std::size_t i = 0; i < route.waypoints.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.3f %.3f", i == 0 ? "M" : " L", route.waypoints[i].x, route.waypoints[i].y);
    s += buf;
  }
  s += "\"/>\n</svg>\n";
  return s;
}

}  // namespace beacons::mobility
