#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "uamflow/errors.hpp"

namespace uamflow::geo {

struct Units {
  static constexpr double foot = 0.3048;
  static constexpr double nautical_mile = 1852.0;
  static constexpr double g0 = 9.80665;
  static constexpr double kmh = 1000.0 / 3600.0;
};

inline constexpr double kEarthRadius = 6'371'000.0;
// Local tangent-plane projection is refused for origins poleward of this.
inline constexpr double kMaxOriginLatitude = 85.0;
inline constexpr double kMaxLatitudeSpan = 2.0;

struct GeoPoint {
  double lon = 0.0;  // degrees
  double lat = 0.0;  // degrees
  double alt = 0.0;  // meters above reference
};

struct EnuPoint {
  double east = 0.0;
  double north = 0.0;
  double up = 0.0;
};

inline constexpr double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

inline void validate(const GeoPoint& p) {
  if (!std::isfinite(p.lon) || !std::isfinite(p.lat) || !std::isfinite(p.alt) ||
      p.lon < -180.0 || p.lon > 180.0 || p.lat < -90.0 || p.lat > 90.0) {
    throw InvalidCoordinate("invalid coordinate (lon=" + std::to_string(p.lon) +
                            ", lat=" + std::to_string(p.lat) +
                            ", alt=" + std::to_string(p.alt) + ")");
  }
}

inline void validate(const EnuPoint& e) {
  if (!std::isfinite(e.east) || !std::isfinite(e.north) || !std::isfinite(e.up)) {
    throw InvalidCoordinate("non-finite ENU coordinate");
  }
}

// Haversine on the radians representation; callers with precomputed
// cos(lat) use this directly in the controller's inner loops.
inline double haversine_rad(double lat1, double lon1, double cos_lat1, double lat2,
                            double lon2, double cos_lat2) {
  const double sdlat = std::sin(0.5 * (lat2 - lat1));
  const double sdlon = std::sin(0.5 * (lon2 - lon1));
  double h = sdlat * sdlat + cos_lat1 * cos_lat2 * sdlon * sdlon;
  if (h > 1.0) h = 1.0;
  return 2.0 * kEarthRadius * std::asin(std::sqrt(h));
}

/// Horizontal great-circle distance in meters. Altitude is ignored.
inline double geodesic_distance(const GeoPoint& a, const GeoPoint& b) {
  validate(a);
  validate(b);
  const double lat1 = deg2rad(a.lat), lat2 = deg2rad(b.lat);
  return haversine_rad(lat1, deg2rad(a.lon), std::cos(lat1), lat2, deg2rad(b.lon),
                       std::cos(lat2));
}

inline double wrap_lon_delta(double dlon) {
  while (dlon > 180.0) dlon -= 360.0;
  while (dlon <= -180.0) dlon += 360.0;
  return dlon;
}

inline void check_origin(const GeoPoint& origin) {
  validate(origin);
  if (std::abs(origin.lat) > kMaxOriginLatitude) {
    throw UnsupportedRegion("ENU origin too close to a pole (lat=" +
                            std::to_string(origin.lat) + ")");
  }
}

/// Equirectangular projection about `origin`, east scaled by cos(lat_origin).
inline EnuPoint to_enu(const GeoPoint& p, const GeoPoint& origin) {
  validate(p);
  check_origin(origin);
  if (std::abs(p.lat - origin.lat) >= kMaxLatitudeSpan) {
    throw UnsupportedRegion("point outside the local projection area");
  }
  const double k = kEarthRadius * std::numbers::pi / 180.0;
  return {k * wrap_lon_delta(p.lon - origin.lon) * std::cos(deg2rad(origin.lat)),
          k * (p.lat - origin.lat), p.alt - origin.alt};
}

inline GeoPoint from_enu(const EnuPoint& e, const GeoPoint& origin) {
  validate(e);
  check_origin(origin);
  const double k = kEarthRadius * std::numbers::pi / 180.0;
  const double dlat = e.north / k;
  if (std::abs(dlat) >= kMaxLatitudeSpan) {
    throw UnsupportedRegion("ENU point outside the local projection area");
  }
  double lon = origin.lon + e.east / (k * std::cos(deg2rad(origin.lat)));
  if (lon > 180.0) lon -= 360.0;
  if (lon < -180.0) lon += 360.0;
  return {lon, origin.lat + dlat, origin.alt + e.up};
}

/// Bearing of `other` seen from `own_pos`, clockwise from the own course,
/// in [0, 360). 0 is dead ahead, 90 is off the right side.
inline double relative_bearing(const EnuPoint& own_pos, double own_course_deg,
                               const EnuPoint& other_pos) {
  const double de = other_pos.east - own_pos.east;
  const double dn = other_pos.north - own_pos.north;
  if (de == 0.0 && dn == 0.0) {
    throw UndefinedBearing("relative bearing undefined for coincident positions");
  }
  double rel = std::fmod(rad2deg(std::atan2(de, dn)) - own_course_deg, 360.0);
  if (rel < 0.0) rel += 360.0;
  if (rel >= 360.0) rel -= 360.0;
  return rel;
}

inline double horizontal_norm(const EnuPoint& a, const EnuPoint& b) {
  return std::hypot(a.east - b.east, a.north - b.north);
}

}  // namespace uamflow::geo
