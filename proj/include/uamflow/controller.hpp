#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "uamflow/errors.hpp"
#include "uamflow/geo.hpp"
#include "uamflow/predictor.hpp"

namespace uamflow::controller {

using geo::EnuPoint;
using geo::GeoPoint;
using geo::Units;
using predictor::PredictionSet;

inline constexpr double kVmax = 210.0 * Units::kmh;
inline constexpr double kMaxAccel = 0.2 * Units::g0;
inline constexpr double kMaxDecel = -0.3 * Units::g0;
inline constexpr int kHorizon = 60;
inline constexpr int kDecelGridPoints = 31;

struct SeparationStandard {
  double horizontal = 2500.0 * Units::foot;  // 762.0 m
  double vertical = 1000.0 * Units::foot;    // 304.8 m

  void validate() const {
    if (!(horizontal > 0.0) || !(vertical > 0.0)) throw ConfigError("separation minima must be positive");
  }
};

/// Straight constant-altitude route. Positions along it are expressed in the
/// ENU frame anchored at `start` (ground level).
class LaneGeometry {
 public:
  LaneGeometry() = default;
  LaneGeometry(GeoPoint start, GeoPoint end, double altitude_m)
      : start_{start.lon, start.lat, 0.0}, end_{end.lon, end.lat, 0.0}, altitude_(altitude_m) {
    const EnuPoint e = geo::to_enu(end_, start_);
    length_ = std::hypot(e.east, e.north);
    if (!(length_ > 0.0)) throw ConfigError("lane start and end coincide");
    ue_ = e.east / length_;
    un_ = e.north / length_;
  }

  const GeoPoint& start() const { return start_; }
  const GeoPoint& end() const { return end_; }
  double altitude() const { return altitude_; }
  double length() const { return length_; }
  /// Course over ground in degrees clockwise from north.
  double course_deg() const {
    double c = geo::rad2deg(std::atan2(ue_, un_));
    return c < 0.0 ? c + 360.0 : c;
  }

  EnuPoint enu_at(double along) const { return {along * ue_, along * un_, altitude_}; }
  GeoPoint geo_at(double along) const { return geo::from_enu(enu_at(along), start_); }
  /// Signed distance of a point's projection along the lane axis.
  double project(const EnuPoint& p) const { return p.east * ue_ + p.north * un_; }

 private:
  GeoPoint start_, end_;
  double altitude_ = 0.0, length_ = 0.0, ue_ = 0.0, un_ = 1.0;
};

struct UamState {
  double along = 0.0;  // meters from lane start
  double v = kVmax;    // along-lane speed
  double a = 0.0;      // current rate
};

// ---------------------------------------------------------------------------
// Kinematics with speed clamped to [0, vmax].

inline double speed_after(double v, double a, double tau, double vmax = kVmax) {
  return std::clamp(v + a * tau, 0.0, vmax);
}

inline double travel(double v, double a, double tau, double vmax = kVmax) {
  if (a > 0.0) {
    const double tc = (vmax - v) / a;
    if (tau <= tc) return v * tau + 0.5 * a * tau * tau;
    return v * tc + 0.5 * a * tc * tc + vmax * (tau - tc);
  }
  if (a < 0.0) {
    const double ts = v / -a;
    if (tau <= ts) return v * tau + 0.5 * a * tau * tau;
    return v * v / (-2.0 * a);
  }
  return v * tau;
}

inline void check_rate(double a) {
  constexpr double eps = 1e-12;
  if (!(a >= kMaxDecel - eps && a <= kMaxAccel + eps)) {
    throw InvariantViolation("rate " + std::to_string(a) + " m/s^2 outside [-0.3g, +0.2g]");
  }
}

/// Along-lane positions at tau = 1..horizon under constant rate `a`.
inline std::vector<double> plan_along(const UamState& s, double a, int horizon = kHorizon) {
  check_rate(a);
  std::vector<double> out(horizon);
  for (int tau = 1; tau <= horizon; ++tau) out[tau - 1] = s.along + travel(s.v, a, tau);
  return out;
}

/// Planned lane-frame ENU points at tau = 1..horizon.
inline std::vector<EnuPoint> plan_uam_trajectory(const LaneGeometry& lane, const UamState& s, double a,
                                                 int horizon = kHorizon) {
  std::vector<EnuPoint> out;
  out.reserve(horizon);
  for (double x : plan_along(s, a, horizon)) out.push_back(lane.enu_at(x));
  return out;
}

// ---------------------------------------------------------------------------
// Closest point of approach on 1 s paths sharing one ENU frame.

struct Cpa {
  int tau = 0;  // 1-based step
  double horizontal = 0.0;
  double vertical = 0.0;
  double bearing = 0.0;     // relative to own course; 0 when positions coincide
  bool vert_clear = false;  // no step had vertical separation below the minimum
};

inline Cpa cpa(std::span<const EnuPoint> own, std::span<const EnuPoint> other, double own_course_deg,
               const SeparationStandard& sep = {}) {
  if (own.empty() || own.size() != other.size()) throw ShapeError("cpa: paths must be non-empty and equal length");
  Cpa best;
  double best_close = std::numeric_limits<double>::infinity();
  double best_any = std::numeric_limits<double>::infinity();
  std::size_t i_close = 0, i_any = 0;
  for (std::size_t i = 0; i < own.size(); ++i) {
    const double h = geo::horizontal_norm(own[i], other[i]);
    const double v = std::abs(own[i].up - other[i].up);
    if (v < sep.vertical && h < best_close) {
      best_close = h;
      i_close = i;
    }
    if (h < best_any) {
      best_any = h;
      i_any = i;
    }
  }
  best.vert_clear = !std::isfinite(best_close);
  const std::size_t i = best.vert_clear ? i_any : i_close;
  best.tau = static_cast<int>(i) + 1;
  best.horizontal = best.vert_clear ? best_any : best_close;
  best.vertical = std::abs(own[i].up - other[i].up);
  best.bearing = best.horizontal > 0.0 ? geo::relative_bearing(own[i], own_course_deg, other[i]) : 0.0;
  return best;
}

// ---------------------------------------------------------------------------
// Loss-of-separation probability against sampled futures.

namespace detail {

struct UnitPoint {
  double x, y, z;
};

inline UnitPoint unit(const GeoPoint& g) {
  const double lat = geo::deg2rad(g.lat), lon = geo::deg2rad(g.lon);
  return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

// Great-circle distance <= limit, decided on the chord (sin^2 of half the
// central angle equals a quarter of the squared chord) and settled with the
// haversine itself when the two are too close to call.
inline bool within(const UnitPoint& a, const GeoPoint& ga, const UnitPoint& b, const GeoPoint& gb, double hav_limit,
                   double limit) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  const double hav = 0.25 * (dx * dx + dy * dy + dz * dz);
  if (hav < hav_limit * (1.0 - 1e-9)) return true;
  if (hav > hav_limit * (1.0 + 1e-9)) return false;
  return geo::geodesic_distance(ga, gb) <= limit;
}

}  // namespace detail

/// A PredictionSet converted to geodetic points once, for repeated scoring.
struct Forecast {
  int k = 0, horizon = 0;
  std::vector<double> weights;
  std::vector<GeoPoint> points;  // k * horizon, sample-major
  std::vector<detail::UnitPoint> units;

  const GeoPoint& at(int sample, int tau_index) const { return points[sample * horizon + tau_index]; }
};

inline Forecast make_forecast(const PredictionSet& ps) {
  ps.validate();
  Forecast f;
  f.k = ps.k();
  f.horizon = ps.horizon();
  f.weights = ps.weights;
  f.points.reserve(static_cast<std::size_t>(f.k) * f.horizon);
  for (const auto& s : ps.samples)
    for (const auto& p : s) f.points.push_back(geo::from_enu(p, ps.origin));
  f.units.reserve(f.points.size());
  for (const auto& g : f.points) f.units.push_back(detail::unit(g));
  return f;
}

/// Planned UAM path on the geodetic side.
struct Plan {
  double rate = 0.0;
  double altitude = 0.0;
  std::vector<double> along;
  std::vector<GeoPoint> points;
  std::vector<detail::UnitPoint> units;
};

inline Plan make_plan(const LaneGeometry& lane, const UamState& s, double a, int horizon = kHorizon) {
  Plan p;
  p.rate = a;
  p.altitude = lane.altitude();
  p.along = plan_along(s, a, horizon);
  p.points.reserve(horizon);
  for (double x : p.along) p.points.push_back(lane.geo_at(x));
  for (const auto& g : p.points) p.units.push_back(detail::unit(g));
  return p;
}

struct LosAssessment {
  double probability = 0.0;
  std::vector<int> first_violation;  // per sample, 1-based tau; 0 = never
};

inline LosAssessment assess(const Plan& plan, const Forecast& f, const SeparationStandard& sep = {}) {
  if (static_cast<int>(plan.points.size()) != f.horizon) throw ShapeError("los: plan and forecast horizons differ");
  double wsum = 0.0;
  for (double w : f.weights) wsum += w;
  if (std::abs(wsum - 1.0) > predictor::kWeightTolerance) throw InvariantViolation("los: weights do not sum to 1");
  const double half = std::sin(sep.horizontal / (2.0 * geo::kEarthRadius));
  const double hav_limit = half * half;
  LosAssessment out;
  out.first_violation.assign(f.k, 0);
  for (int k = 0; k < f.k; ++k) {
    for (int t = 0; t < f.horizon; ++t) {
      const std::size_t i = static_cast<std::size_t>(k) * f.horizon + t;
      if (std::abs(f.points[i].alt - plan.altitude) > sep.vertical) continue;
      if (detail::within(plan.units[t], plan.points[t], f.units[i], f.points[i], hav_limit, sep.horizontal)) {
        out.first_violation[k] = t + 1;
        out.probability += f.weights[k];
        break;
      }
    }
  }
  out.probability = std::clamp(out.probability, 0.0, 1.0);
  return out;
}

inline double los_probability(const LaneGeometry& lane, const UamState& s, double a, const PredictionSet& ps,
                              const SeparationStandard& sep = {}) {
  return assess(make_plan(lane, s, a, ps.horizon()), make_forecast(ps), sep).probability;
}

// ---------------------------------------------------------------------------
// Rate selection.

/// {+0.2g, 0} plus the deceleration grid and an optional stop-short rate,
/// sorted from largest to smallest.
inline std::vector<double> rate_set(std::optional<double> stop_short = std::nullopt,
                                    int grid_points = kDecelGridPoints) {
  std::vector<double> a{kMaxAccel, 0.0};
  for (int i = 1; i <= grid_points; ++i) a.push_back(kMaxDecel * i / grid_points);
  if (stop_short && *stop_short < 0.0 && *stop_short >= kMaxDecel) a.push_back(*stop_short);
  std::sort(a.begin(), a.end(), std::greater<>());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

/// Deceleration that brings the UAM to rest one horizontal minimum short of
/// the earliest predicted violation point projected on the lane, if any.
inline std::optional<double> stop_short_rate(const LaneGeometry& lane, const UamState& s,
                                             std::span<const Forecast* const> forecasts,
                                             std::span<const LosAssessment> current, const SeparationStandard& sep) {
  int earliest = 0;
  const GeoPoint* point = nullptr;
  for (std::size_t j = 0; j < forecasts.size(); ++j) {
    const auto& fv = current[j].first_violation;
    for (int k = 0; k < static_cast<int>(fv.size()); ++k) {
      if (fv[k] > 0 && (earliest == 0 || fv[k] < earliest)) {
        earliest = fv[k];
        point = &forecasts[j]->at(k, fv[k] - 1);
      }
    }
  }
  if (!point || !(s.v > 0.0)) return std::nullopt;
  const double room = lane.project(geo::to_enu(*point, lane.start())) - s.along - sep.horizontal;
  if (!(room > 0.0)) return std::nullopt;
  const double a = -s.v * s.v / (2.0 * room);
  if (a < kMaxDecel) return std::nullopt;
  return a;
}

struct RateScore {
  double rate;
  double probability;
};

struct Decision {
  double rate = 0.0;
  double p_current = 0.0;   // aggregate risk of keeping the current rate
  double p_selected = 0.0;  // aggregate risk of the chosen rate
  bool forced_brake = false;
  std::vector<RateScore> scores;  // every candidate evaluated, in evaluation order
};

/// One intruder as seen by the controller; a null forecast means the
/// aircraft is in the encounter envelope without enough history.
struct Intruder {
  const Forecast* forecast = nullptr;
};

inline Decision select_rate(const LaneGeometry& lane, const UamState& s, std::span<const Intruder> intruders,
                            const SeparationStandard& sep = {}) {
  Decision d;
  for (const auto& in : intruders) {
    if (!in.forecast) {
      d.rate = kMaxDecel;
      d.forced_brake = true;
      return d;
    }
  }
  std::vector<const Forecast*> fs;
  for (const auto& in : intruders) fs.push_back(in.forecast);
  const int horizon = fs.empty() ? kHorizon : fs.front()->horizon;

  auto score = [&](double a, std::vector<LosAssessment>* keep) {
    const Plan plan = make_plan(lane, s, a, horizon);
    double p = 0.0;
    for (const auto* f : fs) {
      LosAssessment la = assess(plan, *f, sep);
      p = std::max(p, la.probability);
      if (keep) keep->push_back(std::move(la));
    }
    return p;
  };

  std::vector<LosAssessment> current;
  d.p_current = score(s.a, &current);
  if (d.p_current == 0.0 && s.a > 0.0) {
    d.rate = s.a;
    return d;
  }
  std::vector<double> candidates;
  if (d.p_current > 0.0) {
    candidates = rate_set(stop_short_rate(lane, s, fs, current, sep));
  } else {
    for (double a : rate_set())
      if (a > s.a) candidates.push_back(a);
    candidates.push_back(s.a);
  }
  // Descending order with a strict improvement test keeps the largest rate
  // among equally risky ones.
  d.p_selected = std::numeric_limits<double>::infinity();
  for (double a : candidates) {
    const double p = a == s.a ? d.p_current : score(a, nullptr);
    d.scores.push_back({a, p});
    if (p < d.p_selected) {
      d.p_selected = p;
      d.rate = a;
    }
  }
  return d;
}

/// Advances a UAM by one 1 s tick at its current rate.
inline UamState step(const UamState& s, double dt = 1.0) {
  return {s.along + travel(s.v, s.a, dt), speed_after(s.v, s.a, dt), s.a};
}

}  // namespace uamflow::controller
