#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "uamflow/geo.hpp"

using namespace uamflow;
using namespace uamflow::geo;

TEST(GeodesicDistance, IdentityIsZero) {
  GeoPoint a{126.8, 37.55, 300};
  EXPECT_EQ(geodesic_distance(a, a), 0.0);
}

TEST(GeodesicDistance, OneDegreeOfLongitudeOnEquator) {
  // On the equator the haversine reduces to R * dlon.
  const double expected = kEarthRadius * std::numbers::pi / 180.0;
  const double d = geodesic_distance({0, 0, 0}, {1, 0, 0});
  EXPECT_NEAR(d, expected, 1e-6);
  EXPECT_NEAR(d, 111195.0, 1.0);
}

TEST(GeodesicDistance, IgnoresAltitude) {
  EXPECT_EQ(geodesic_distance({126.8, 37.5, 0}, {126.9, 37.6, 0}),
            geodesic_distance({126.8, 37.5, 1000}, {126.9, 37.6, -50}));
}

TEST(GeodesicDistance, SymmetricAndTriangleInequality) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lon(126.0, 127.5), lat(36.8, 38.2);
  for (int i = 0; i < 500; ++i) {
    GeoPoint a{lon(rng), lat(rng), 0}, b{lon(rng), lat(rng), 0}, c{lon(rng), lat(rng), 0};
    const double ab = geodesic_distance(a, b), ba = geodesic_distance(b, a);
    EXPECT_EQ(ab, ba);
    EXPECT_GE(ab, 0.0);
    const double ac = geodesic_distance(a, c), cb = geodesic_distance(c, b);
    EXPECT_LE(ab, (ac + cb) * (1.0 + 1e-6));
  }
}

TEST(GeodesicDistance, RejectsNonFinite) {
  EXPECT_THROW(geodesic_distance({NAN, 0, 0}, {0, 0, 0}), InvalidCoordinate);
  EXPECT_THROW(geodesic_distance({0, 0, 0}, {0, 95, 0}), InvalidCoordinate);
  EXPECT_THROW(geodesic_distance({0, 0, INFINITY}, {0, 0, 0}), InvalidCoordinate);
}

TEST(Enu, OriginMapsToZero) {
  GeoPoint o{126.79, 37.56, 20};
  EnuPoint e = to_enu(o, o);
  EXPECT_EQ(e.east, 0.0);
  EXPECT_EQ(e.north, 0.0);
  EXPECT_EQ(e.up, 0.0);
}

TEST(Enu, EastOffsetScalesWithCosLatitude) {
  GeoPoint o{126.79, 37.56, 0};
  EnuPoint e = to_enu({o.lon + 0.01, o.lat, 0}, o);
  const double expected = 0.01 * kEarthRadius * std::numbers::pi / 180.0 * std::cos(deg2rad(o.lat));
  EXPECT_NEAR(e.east, expected, 1e-6);
  EXPECT_NEAR(e.east, 1111.95 * std::cos(deg2rad(o.lat)), 0.01);
  EXPECT_NEAR(e.north, 0.0, 1e-9);
}

TEST(Enu, RoundTripWithinOneDegree) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> off(-1.0, 1.0), alt(0, 3000);
  GeoPoint o{126.79, 37.56, 15};
  for (int i = 0; i < 1000; ++i) {
    GeoPoint p{o.lon + off(rng), o.lat + off(rng), alt(rng)};
    GeoPoint q = from_enu(to_enu(p, o), o);
    EXPECT_NEAR(q.lon, p.lon, 1e-9);
    EXPECT_NEAR(q.lat, p.lat, 1e-9);
    EXPECT_NEAR(q.alt, p.alt, 1e-9);
  }
}

TEST(Enu, PoleOriginIsUnsupported) {
  EXPECT_THROW(to_enu({0, 89.95, 0}, {0, 90, 0}), UnsupportedRegion);
  EXPECT_THROW(from_enu({0, 0, 0}, {10, -90, 0}), UnsupportedRegion);
}

TEST(Enu, FarPointIsUnsupported) {
  EXPECT_THROW(to_enu({126.8, 40.0, 0}, {126.8, 37.5, 0}), UnsupportedRegion);
}

TEST(RelativeBearing, Definitions) {
  const EnuPoint own{0, 0, 0};
  EXPECT_NEAR(relative_bearing(own, 0.0, {1000, 0, 0}), 90.0, 1e-12);
  EXPECT_NEAR(relative_bearing(own, 0.0, {-1000, 0, 0}), 270.0, 1e-12);
  EXPECT_NEAR(relative_bearing(own, 90.0, {0, 1000, 0}), 270.0, 1e-12);
  EXPECT_NEAR(relative_bearing(own, 0.0, {0, 500, 0}), 0.0, 1e-12);
}

TEST(RelativeBearing, CoincidentIsUndefined) {
  EXPECT_THROW(relative_bearing({5, 5, 0}, 0.0, {5, 5, 100}), UndefinedBearing);
}

TEST(RelativeBearing, RotatingCourseShiftsBearing) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(-5000, 5000), ang(0, 360);
  for (int i = 0; i < 500; ++i) {
    EnuPoint own{pos(rng), pos(rng), 0}, other{pos(rng), pos(rng), 0};
    const double c = ang(rng), theta = ang(rng);
    const double b0 = relative_bearing(own, c, other);
    const double b1 = relative_bearing(own, c + theta, other);
    ASSERT_GE(b0, 0.0);
    ASSERT_LT(b0, 360.0);
    double diff = std::fmod(b1 - b0 + theta, 360.0);
    if (diff < 0) diff += 360.0;
    EXPECT_TRUE(diff < 1e-9 || 360.0 - diff < 1e-9) << diff;
  }
}
