#include "geobias/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "geobias/errors.hpp"
#include "geobias/zip.hpp"

namespace geobias {

namespace {

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

void validate_ring(const Ring& ring, const std::string& zip) {
  if (ring.size() < 4) {
    throw InputError("ZIP " + zip + ": ring has fewer than 4 vertices");
  }
  if (!(ring.front() == ring.back())) {
    throw InputError("ZIP " + zip + ": ring is not closed");
  }
  for (const auto& p : ring) {
    if (!is_valid(p)) {
      throw InputError("ZIP " + zip + ": ring vertex outside lat/lon range");
    }
  }
}

}  // namespace

bool is_valid(const GeoPoint& p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 &&
         p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

ZipPolygon::ZipPolygon(std::string zip, std::vector<PolygonPart> parts,
                       GeoPoint internal_point, double land_area_sq_mi,
                       double water_area_sq_mi)
    : zip_(std::move(zip)),
      parts_(std::move(parts)),
      internal_point_(internal_point),
      land_area_(land_area_sq_mi),
      water_area_(water_area_sq_mi) {
  if (!is_valid_zip(zip_)) throw InputError("invalid ZIP code '" + zip_ + "'");
  if (parts_.empty()) throw InputError("ZIP " + zip_ + ": polygon has no parts");
  for (const auto& part : parts_) {
    validate_ring(part.outer, zip_);
    for (const auto& hole : part.holes) validate_ring(hole, zip_);
  }
  if (!(land_area_ >= 0.0) || !(water_area_ >= 0.0) ||
      !std::isfinite(land_area_) || !std::isfinite(water_area_)) {
    throw InputError("ZIP " + zip_ + ": negative or non-finite area");
  }
  if (!(total_area() > 0.0)) {
    throw InputError("ZIP " + zip_ + ": total area must be positive");
  }
  if (!is_valid(internal_point_)) {
    throw InputError("ZIP " + zip_ + ": internal point outside lat/lon range");
  }
  if (!point_in_polygon(internal_point_, parts_)) {
    throw InputError("ZIP " + zip_ + ": internal point not inside polygon");
  }
}

Ring rectangle_ring(double lat0, double lon0, double lat1, double lon1) {
  return {{lat0, lon0}, {lat1, lon0}, {lat1, lon1}, {lat0, lon1}, {lat0, lon0}};
}

double haversine_miles(const GeoPoint& a, const GeoPoint& b) {
  const double dlat = deg2rad(b.lat - a.lat);
  const double dlon = deg2rad(b.lon - a.lon);
  const double s_lat = std::sin(dlat / 2.0);
  const double s_lon = std::sin(dlon / 2.0);
  double h = s_lat * s_lat +
             std::cos(deg2rad(a.lat)) * std::cos(deg2rad(b.lat)) * s_lon * s_lon;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusMiles * std::asin(std::sqrt(h));
}

double segment_distance_degrees(const GeoPoint& p, const GeoPoint& a,
                                const GeoPoint& b) {
  const double dx = b.lon - a.lon;
  const double dy = b.lat - a.lat;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((p.lon - a.lon) * dx + (p.lat - a.lat) * dy) / len2;
    t = std::clamp(t, 0.0, 1.0);
  }
  const double cx = a.lon + t * dx;
  const double cy = a.lat + t * dy;
  return std::hypot(p.lon - cx, p.lat - cy);
}

double ring_distance_degrees(const GeoPoint& p, const Ring& ring) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    best = std::min(best, segment_distance_degrees(p, ring[i], ring[i + 1]));
  }
  return best;
}

bool point_on_ring(const GeoPoint& p, const Ring& ring) {
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    if (segment_distance_degrees(p, ring[i], ring[i + 1]) == 0.0) return true;
  }
  return false;
}

bool point_in_ring(const GeoPoint& p, const Ring& ring) {
  if (point_on_ring(p, ring)) return true;
  // crossing number, x = lon, y = lat
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const GeoPoint& vi = ring[i];
    const GeoPoint& vj = ring[j];
    if ((vi.lat > p.lat) != (vj.lat > p.lat)) {
      const double x_cross =
          (vj.lon - vi.lon) * (p.lat - vi.lat) / (vj.lat - vi.lat) + vi.lon;
      if (p.lon < x_cross) inside = !inside;
    }
  }
  return inside;
}

bool point_in_polygon(const GeoPoint& p, const std::vector<PolygonPart>& parts) {
  for (const auto& part : parts) {
    if (!point_in_ring(p, part.outer)) continue;
    bool in_hole = false;
    for (const auto& hole : part.holes) {
      // the hole's own edge belongs to the polygon boundary
      if (point_in_ring(p, hole) && !point_on_ring(p, hole)) {
        in_hole = true;
        break;
      }
    }
    if (!in_hole) return true;
  }
  return false;
}

bool point_in_polygon(const GeoPoint& p, const ZipPolygon& poly) {
  return point_in_polygon(p, poly.parts());
}

double boundary_distance_degrees(const GeoPoint& p,
                                 const std::vector<PolygonPart>& parts) {
  if (point_in_polygon(p, parts)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& part : parts) {
    best = std::min(best, ring_distance_degrees(p, part.outer));
    for (const auto& hole : part.holes) {
      best = std::min(best, ring_distance_degrees(p, hole));
    }
  }
  return best;
}

double boundary_distance_degrees(const GeoPoint& p, const ZipPolygon& poly) {
  return boundary_distance_degrees(p, poly.parts());
}

double degrees_to_approx_miles(double degrees) {
  if (!(degrees >= 0.0)) {
    throw InputError("degrees_to_approx_miles: negative or NaN distance");
  }
  return kApproxMilesPerDegree * degrees;
}

}  // namespace geobias
