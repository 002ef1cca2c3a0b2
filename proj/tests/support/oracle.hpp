#pragma once

// Straightforward re-derivations of the controller's geometry and decision
// rule, written without the library's fast paths, for cross-checking.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace uamflow::oracle {

inline constexpr double kR = 6371000.0;
inline constexpr double kG = 9.80665;
inline constexpr double kVmax = 210.0 / 3.6;
inline constexpr double kSh = 762.0;
inline constexpr double kSv = 304.8;

struct Ll {
  double lon, lat, alt;
};

inline double rad(double d) { return d * std::numbers::pi / 180.0; }

inline double haversine(const Ll& a, const Ll& b) {
  const double p1 = rad(a.lat), p2 = rad(b.lat);
  const double dp = p2 - p1, dl = rad(b.lon - a.lon);
  const double h = std::pow(std::sin(dp / 2), 2) + std::cos(p1) * std::cos(p2) * std::pow(std::sin(dl / 2), 2);
  return 2 * kR * std::asin(std::sqrt(std::min(1.0, h)));
}

// Local tangent-plane offsets (east, north) from `o` to lon/lat.
inline Ll offset(const Ll& o, double east, double north, double alt) {
  const double m_per_deg = kR * std::numbers::pi / 180.0;
  return {o.lon + east / (m_per_deg * std::cos(rad(o.lat))), o.lat + north / m_per_deg, o.alt + alt};
}

inline double distance_travelled(double v, double a, double tau) {
  if (a == 0.0) return v * tau;
  const double t_sat = a > 0 ? (kVmax - v) / a : v / -a;
  const double t1 = std::min(tau, t_sat);
  return v * t1 + 0.5 * a * t1 * t1 + (a > 0 ? kVmax * (tau - t1) : 0.0);
}

struct Lane {
  Ll start;  // ground-level anchor
  double ue, un, alt;
  Ll at(double s) const { return offset(start, s * ue, s * un, alt); }
};

struct Sample {
  std::vector<Ll> pts;
};

struct Intruder {
  bool missing = false;
  std::vector<Sample> samples;
  std::vector<double> weights;
};

inline int first_violation(const Lane& lane, double along, double v, double a, const Sample& s) {
  for (int tau = 1; tau <= static_cast<int>(s.pts.size()); ++tau) {
    const Ll own = lane.at(along + distance_travelled(v, a, tau));
    const Ll& o = s.pts[tau - 1];
    if (haversine(own, o) <= kSh && std::abs(own.alt - o.alt) <= kSv) return tau;
  }
  return 0;
}

inline double risk(const Lane& lane, double along, double v, double a, const std::vector<Intruder>& in) {
  double worst = 0.0;
  for (const auto& i : in) {
    double p = 0.0;
    for (std::size_t k = 0; k < i.samples.size(); ++k)
      if (first_violation(lane, along, v, a, i.samples[k])) p += i.weights[k];
    worst = std::max(worst, std::min(1.0, p));
  }
  return worst;
}

inline double select(const Lane& lane, double along, double v, double a_cur, const std::vector<Intruder>& in) {
  for (const auto& i : in)
    if (i.missing) return -0.3 * kG;
  const double p_cur = risk(lane, along, v, a_cur, in);
  if (p_cur == 0.0 && a_cur > 0.0) return a_cur;

  std::vector<double> grid{0.2 * kG, 0.0};
  for (int i = 1; i <= 31; ++i) grid.push_back(-0.3 * kG * i / 31.0);
  if (p_cur > 0.0 && v > 0.0) {
    // Earliest violating sample point under the current rate.
    int best_tau = 0;
    Ll where{};
    for (const auto& i : in)
      for (const auto& s : i.samples) {
        const int tau = first_violation(lane, along, v, a_cur, s);
        if (tau && (!best_tau || tau < best_tau)) {
          best_tau = tau;
          where = s.pts[tau - 1];
        }
      }
    const double m_per_deg = kR * std::numbers::pi / 180.0;
    const double e = (where.lon - lane.start.lon) * m_per_deg * std::cos(rad(lane.start.lat));
    const double n = (where.lat - lane.start.lat) * m_per_deg;
    const double room = e * lane.ue + n * lane.un - along - kSh;
    if (room > 0) {
      const double a = -v * v / (2 * room);
      if (a >= -0.3 * kG) grid.push_back(a);
    }
  }
  std::vector<double> cands;
  for (double a : grid)
    if (p_cur > 0.0 || a > a_cur) cands.push_back(a);
  if (p_cur == 0.0) cands.push_back(a_cur);

  double best_a = 0.0, best_p = 2.0;
  for (double a : cands) {
    const double p = a == a_cur ? p_cur : risk(lane, along, v, a, in);
    if (p < best_p || (p == best_p && a > best_a)) {
      best_p = p;
      best_a = a;
    }
  }
  return best_a;
}

}  // namespace uamflow::oracle
