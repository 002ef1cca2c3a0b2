#pragma once

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <random>
#include <string>
#include <vector>

#include "uamflow/errors.hpp"
#include "uamflow/geo.hpp"
#include "uamflow/rng.hpp"
#include "uamflow/trajdata.hpp"

namespace uamflow::sim {

using geo::EnuPoint;
using geo::GeoPoint;
using trajdata::Kind;
using trajdata::TrackPoint;
using trajdata::Trajectory;

/// A published route: waypoints in the scenario ENU frame (meters, `up` is
/// altitude), flown with a trapezoidal speed profile.
struct Procedure {
  std::string name;
  Kind kind = Kind::departure;
  std::vector<EnuPoint> waypoints;
  double entry_speed = 80.0;   // m/s at the first waypoint
  double cruise_speed = 120.0;
  double exit_speed = 120.0;   // m/s at the last waypoint
  double accel = 0.6;          // m/s^2 for both speed changes
  double rate_per_hour = 10.0;

  void validate() const {
    if (waypoints.size() < 2) throw ConfigError("procedure '" + name + "': need at least two waypoints");
    if (!(entry_speed > 0.0 && cruise_speed > 0.0 && exit_speed > 0.0 && accel > 0.0)) {
      throw ConfigError("procedure '" + name + "': speeds and acceleration must be positive");
    }
    if (!(rate_per_hour > 0.0)) throw ConfigError("procedure '" + name + "': rate must be positive");
  }
};

struct GeneratorConfig {
  std::vector<Procedure> procedures;
  double lateral_sigma = 300.0;
  double vertical_sigma = 50.0;
  // Flights are started this long before t = 0 so traffic is already
  // flowing when the first UAM departs.
  int warmup_s = 900;
};

/// Single runway 32/14 at the frame origin with a north-west corridor
/// along 320 deg: runway 32 departures climb out along it before the west
/// route peels off, and runway 14 arrivals descend along it from the
/// north-west, 1 km to the side.
inline GeneratorConfig default_generator() {
  GeneratorConfig g;
  g.procedures.push_back({"DEP-NW", Kind::departure,
                          {{0, 0, 20}, {-5142, 6128, 600}, {-10284, 12256, 900}, {-20568, 24513, 2400}},
                          75.0, 130.0, 130.0, 0.6, 12.0});
  g.procedures.push_back({"DEP-W", Kind::departure,
                          {{0, 0, 20}, {-5142, 6128, 600}, {-16000, 9000, 1500}, {-30000, 9500, 3000}},
                          75.0, 130.0, 130.0, 0.6, 12.0});
  g.procedures.push_back({"ARR-NW", Kind::arrival,
                          {{-21732, 27455, 1500}, {-12089, 15964, 900}, {766, 643, 20}},
                          120.0, 110.0, 70.0, 0.4, 20.0});
  return g;
}

namespace detail {

struct Xy {
  double x, y;
};

// Polyline shifted sideways by `offset` (positive to the left of travel),
// mitred at the joints.
inline std::vector<EnuPoint> offset_polyline(const std::vector<EnuPoint>& w, double offset) {
  const std::size_t n = w.size();
  std::vector<Xy> normals(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double dx = w[i + 1].east - w[i].east, dy = w[i + 1].north - w[i].north;
    const double len = std::hypot(dx, dy);
    if (!(len > 0.0)) throw ConfigError("procedure has repeated waypoints");
    normals[i] = {-dy / len, dx / len};
  }
  std::vector<EnuPoint> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Xy m;
    if (i == 0) {
      m = normals.front();
    } else if (i == n - 1) {
      m = normals.back();
    } else {
      const Xy a = normals[i - 1], b = normals[i];
      Xy s{a.x + b.x, a.y + b.y};
      const double sl = std::hypot(s.x, s.y);
      if (sl < 1e-9) {
        s = a;
      } else {
        s = {s.x / sl, s.y / sl};
      }
      const double c = std::max(0.25, s.x * a.x + s.y * a.y);  // cos of the half-turn, mitre limited
      m = {s.x / c, s.y / c};
    }
    out[i] = {w[i].east + offset * m.x, w[i].north + offset * m.y, w[i].up};
  }
  return out;
}

}  // namespace detail

/// One flight along `proc` starting at integer time `t0`, sampled at 1 Hz.
inline Trajectory fly(const Procedure& proc, const std::string& id, int t0, double lateral, double vertical,
                      const GeoPoint& origin) {
  proc.validate();
  const auto w = detail::offset_polyline(proc.waypoints, lateral);
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < w.size(); ++i) {
    cum.push_back(cum.back() + std::hypot(w[i].east - w[i - 1].east, w[i].north - w[i - 1].north));
  }
  const double L = cum.back();
  // Ramp from the entry speed to cruise, then from cruise to the exit speed.
  const double a2 = 2.0 * proc.accel, vc2 = proc.cruise_speed * proc.cruise_speed;
  const double ve2 = proc.entry_speed * proc.entry_speed, vx2 = proc.exit_speed * proc.exit_speed;
  auto speed = [&](double s) {
    const double rest = std::max(0.0, L - s);
    double v = ve2 <= vc2 ? std::sqrt(std::min(vc2, ve2 + a2 * s)) : std::sqrt(std::max(vc2, ve2 - a2 * s));
    if (vx2 < vc2) v = std::min(v, std::sqrt(vx2 + a2 * rest));
    if (vx2 > vc2) v = std::max(v, std::sqrt(std::max(0.0, vx2 - a2 * rest)));
    return v;
  };
  auto at = [&](double s) {
    const auto it = std::upper_bound(cum.begin(), cum.end(), s);
    const std::size_t i = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - cum.begin(), 1), w.size() - 1);
    const double seg = cum[i] - cum[i - 1];
    const double f = std::clamp((s - cum[i - 1]) / seg, 0.0, 1.0);
    EnuPoint e{w[i - 1].east + f * (w[i].east - w[i - 1].east), w[i - 1].north + f * (w[i].north - w[i - 1].north),
               w[i - 1].up + f * (w[i].up - w[i - 1].up) + vertical};
    e.up = std::max(e.up, 0.0);
    return geo::from_enu(e, origin);
  };
  Trajectory tr{id, proc.kind, {}};
  double s = 0.0;
  int t = t0;
  constexpr int kSub = 10;
  while (true) {
    const GeoPoint g = at(s);
    tr.points.push_back({static_cast<double>(t), g.lon, g.lat, g.alt});
    if (s >= L) break;
    for (int k = 0; k < kSub && s < L; ++k) {
      // Midpoint step on ds/dt = v(s).
      const double h = 1.0 / kSub;
      const double v1 = speed(s);
      s = std::min(L, s + h * speed(s + 0.5 * h * v1));
    }
    ++t;
  }
  return tr;
}

/// Poisson departures/arrivals over [-warmup, duration), each flight with a
/// constant lateral and vertical offset from its procedure centerline.
/// Sorted by start time, then id.
inline std::vector<Trajectory> generate_traffic(const GeneratorConfig& cfg, const GeoPoint& origin, int duration_s,
                                                std::uint64_t seed) {
  if (duration_s < 1) throw ConfigError("traffic: duration must be positive");
  if (!(cfg.lateral_sigma >= 0.0) || !(cfg.vertical_sigma >= 0.0) || cfg.warmup_s < 0) {
    throw ConfigError("traffic: noise and warm-up must be non-negative");
  }
  std::vector<Trajectory> out;
  for (std::size_t p = 0; p < cfg.procedures.size(); ++p) {
    const Procedure& proc = cfg.procedures[p];
    proc.validate();
    std::mt19937_64 rng(derive_seed(seed, fnv1a64(proc.name), p));
    std::exponential_distribution<double> gap(proc.rate_per_hour / 3600.0);
    std::normal_distribution<double> lat(0.0, cfg.lateral_sigma), vert(0.0, cfg.vertical_sigma);
    double t = -static_cast<double>(cfg.warmup_s);
    int n = 0;
    while (true) {
      t += gap(rng);
      if (t >= duration_s) break;
      const double dl = cfg.lateral_sigma > 0.0 ? lat(rng) : 0.0;
      const double dv = cfg.vertical_sigma > 0.0 ? vert(rng) : 0.0;
      out.push_back(fly(proc, proc.name + "-" + std::to_string(n++), static_cast<int>(std::ceil(t)), dl, dv, origin));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Trajectory& a, const Trajectory& b) {
    return a.points.front().t != b.points.front().t ? a.points.front().t < b.points.front().t : a.id < b.id;
  });
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const EnuPoint& e) { return {e.east, e.north, e.up}; }

inline EnuPoint enu_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("waypoint must be [east, north, up]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json to_json(const Procedure& p) {
  nlohmann::json w = nlohmann::json::array();
  for (const auto& e : p.waypoints) w.push_back(to_json(e));
  return {{"name", p.name},
          {"kind", trajdata::to_string(p.kind)},
          {"waypoints_enu_m", w},
          {"entry_speed_mps", p.entry_speed},
          {"cruise_speed_mps", p.cruise_speed},
          {"exit_speed_mps", p.exit_speed},
          {"accel_mps2", p.accel},
          {"rate_per_hour", p.rate_per_hour}};
}

inline Procedure procedure_from_json(const nlohmann::json& j) {
  Procedure p;
  p.name = j.at("name").get<std::string>();
  p.kind = trajdata::parse_kind(j.at("kind").get<std::string>());
  for (const auto& w : j.at("waypoints_enu_m")) p.waypoints.push_back(enu_from_json(w));
  p.entry_speed = j.value("entry_speed_mps", p.entry_speed);
  p.cruise_speed = j.value("cruise_speed_mps", p.cruise_speed);
  p.exit_speed = j.value("exit_speed_mps", p.exit_speed);
  p.accel = j.value("accel_mps2", p.accel);
  p.rate_per_hour = j.value("rate_per_hour", p.rate_per_hour);
  p.validate();
  return p;
}

inline nlohmann::json to_json(const GeneratorConfig& g) {
  nlohmann::json procs = nlohmann::json::array();
  for (const auto& p : g.procedures) procs.push_back(to_json(p));
  return {{"procedures", procs},
          {"lateral_sigma_m", g.lateral_sigma},
          {"vertical_sigma_m", g.vertical_sigma},
          {"warmup_s", g.warmup_s}};
}

inline GeneratorConfig generator_from_json(const nlohmann::json& j) {
  GeneratorConfig g = j.contains("procedures") ? GeneratorConfig{} : default_generator();
  if (j.contains("procedures")) {
    for (const auto& p : j.at("procedures")) g.procedures.push_back(procedure_from_json(p));
  }
  g.lateral_sigma = j.value("lateral_sigma_m", g.lateral_sigma);
  g.vertical_sigma = j.value("vertical_sigma_m", g.vertical_sigma);
  g.warmup_s = j.value("warmup_s", g.warmup_s);
  return g;
}

}  // namespace uamflow::sim
