#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "geobias/errors.hpp"
#include "geobias/geometry.hpp"

using namespace geobias;

namespace {

double cosine_law_miles(GeoPoint a, GeoPoint b) {
  const double d2r = std::numbers::pi / 180.0;
  const double c = std::sin(a.lat * d2r) * std::sin(b.lat * d2r) +
                   std::cos(a.lat * d2r) * std::cos(b.lat * d2r) * std::cos((b.lon - a.lon) * d2r);
  return kEarthRadiusMiles * std::acos(std::clamp(c, -1.0, 1.0));
}

std::vector<PolygonPart> square(double lat0, double lon0, double lat1, double lon1) {
  return {{rectangle_ring(lat0, lon0, lat1, lon1), {}}};
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("haversine basics") {
    const GeoPoint a{0.0, 0.0}, b{0.0, 1.0};
    CHECK(haversine_miles(a, b) == doctest::Approx(2.0 * std::numbers::pi * kEarthRadiusMiles / 360.0));
    CHECK(haversine_miles(a, a) == 0.0);
    const GeoPoint p{40.7, -74.0}, q{34.05, -118.25};
    CHECK(haversine_miles(p, q) == doctest::Approx(haversine_miles(q, p)).epsilon(1e-15));
    CHECK(haversine_miles({0, 0}, {0, 180}) == doctest::Approx(std::numbers::pi * kEarthRadiusMiles));
  }

  TEST_CASE("haversine matches law of cosines away from tiny distances") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> lat(-80, 80), lon(-180, 180);
    for (int i = 0; i < 1000; ++i) {
      const GeoPoint a{lat(gen), lon(gen)}, b{lat(gen), lon(gen)};
      const double h = haversine_miles(a, b);
      if (h < 10.0) continue;
      CHECK(std::fabs(h - cosine_law_miles(a, b)) / h < 1e-6);
    }
  }

  TEST_CASE("point in polygon with edges and holes") {
    PolygonPart part{rectangle_ring(0, 0, 10, 10), {rectangle_ring(4, 4, 6, 6)}};
    const std::vector<PolygonPart> parts{part};
    CHECK(point_in_polygon({1, 1}, parts));
    CHECK(point_in_polygon({0, 5}, parts));    // on the outer edge
    CHECK(point_in_polygon({10, 10}, parts));  // vertex
    CHECK_FALSE(point_in_polygon({5, 5}, parts));
    CHECK(point_in_polygon({4, 5}, parts));  // on the hole edge
    CHECK_FALSE(point_in_polygon({11, 5}, parts));
    CHECK_FALSE(point_in_polygon({-0.0001, 5}, parts));
  }

  TEST_CASE("point in a concave ring") {
    // U shape opening to the north
    const Ring u{{0, 0}, {0, 3}, {3, 3}, {3, 2}, {1, 2}, {1, 1}, {3, 1}, {3, 0}, {0, 0}};
    CHECK(point_in_ring({0.5, 1.5}, u));
    CHECK(point_in_ring({2.0, 0.5}, u));
    CHECK_FALSE(point_in_ring({2.0, 1.5}, u));
  }

  TEST_CASE("boundary distance agrees with the rectangle formula") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(-3, 3);
    const auto parts = square(-1, -2, 1, 2);
    for (int i = 0; i < 2000; ++i) {
      const GeoPoint p{u(gen), u(gen)};
      const double dy = std::max({-1 - p.lat, 0.0, p.lat - 1});
      const double dx = std::max({-2 - p.lon, 0.0, p.lon - 2});
      CHECK(boundary_distance_degrees(p, parts) == doctest::Approx(std::hypot(dx, dy)).epsilon(1e-12));
    }
  }

  TEST_CASE("boundary distance is the minimum over parts and ignores latitude") {
    std::vector<PolygonPart> parts = square(0, 0, 1, 1);
    parts.push_back({rectangle_ring(0, 5, 1, 6), {}});
    CHECK(boundary_distance_degrees({0.5, 4.0}, parts) == doctest::Approx(1.0));
    CHECK(boundary_distance_degrees({0.5, 0.5}, parts) == 0.0);
    // the same degree offset at 60N as at the equator
    const auto far_north = square(60, 0, 61, 1);
    CHECK(boundary_distance_degrees({60.5, 2.0}, far_north) == doctest::Approx(1.0));
  }

  TEST_CASE("a point inside a hole measures to the hole ring") {
    PolygonPart part{rectangle_ring(0, 0, 10, 10), {rectangle_ring(4, 4, 6, 6)}};
    CHECK(boundary_distance_degrees({5, 5}, std::vector<PolygonPart>{part}) == doctest::Approx(1.0));
  }

  TEST_CASE("segment distance clamps to endpoints") {
    CHECK(segment_distance_degrees({0, 2}, {0, 0}, {0, 1}) == doctest::Approx(1.0));
    CHECK(segment_distance_degrees({1, 0.5}, {0, 0}, {0, 1}) == doctest::Approx(1.0));
    CHECK(segment_distance_degrees({3, 4}, {0, 0}, {0, 0}) == doctest::Approx(5.0));
  }

  TEST_CASE("display conversion") {
    CHECK(degrees_to_approx_miles(0.2) == doctest::Approx(10.0));
    CHECK_THROWS_AS(degrees_to_approx_miles(-1.0), InputError);
  }

  TEST_CASE("ZipPolygon validation") {
    auto make = [](Ring r, GeoPoint ip, double land) {
      return ZipPolygon("12345", {{std::move(r), {}}}, ip, land, 0.0);
    };
    CHECK_NOTHROW(make(rectangle_ring(0, 0, 1, 1), {0.5, 0.5}, 1.0));
    Ring open = rectangle_ring(0, 0, 1, 1);
    open.pop_back();
    CHECK_THROWS_AS(make(open, {0.5, 0.5}, 1.0), InputError);
    CHECK_THROWS_AS(make(rectangle_ring(0, 0, 1, 1), {2, 2}, 1.0), InputError);
    CHECK_THROWS_AS(make(rectangle_ring(0, 0, 1, 1), {0.5, 0.5}, 0.0), InputError);
    CHECK_THROWS_AS(ZipPolygon("1234", {{rectangle_ring(0, 0, 1, 1), {}}}, {0.5, 0.5}, 1, 0),
                    InputError);
    CHECK_THROWS_AS(ZipPolygon("12345", {}, {0.5, 0.5}, 1, 0), InputError);
  }
}
