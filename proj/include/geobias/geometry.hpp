#pragma once

#include <string>
#include <vector>

namespace geobias {

inline constexpr double kEarthRadiusMiles = 3958.8;
inline constexpr double kApproxMilesPerDegree = 50.0;

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

bool is_valid(const GeoPoint& p);

// Closed ring: first vertex repeated as the last.
using Ring = std::vector<GeoPoint>;

// One outer boundary plus any holes cut out of it.
struct PolygonPart {
  Ring outer;
  std::vector<Ring> holes;
};

// A ZIP/ZCTA shape. Immutable once constructed; the constructor validates
// ring closure, the internal point and the area.
class ZipPolygon {
 public:
  ZipPolygon(std::string zip, std::vector<PolygonPart> parts,
             GeoPoint internal_point, double land_area_sq_mi,
             double water_area_sq_mi);

  const std::string& zip() const { return zip_; }
  const std::vector<PolygonPart>& parts() const { return parts_; }
  const GeoPoint& internal_point() const { return internal_point_; }
  double land_area() const { return land_area_; }
  double water_area() const { return water_area_; }
  double total_area() const { return land_area_ + water_area_; }

 private:
  std::string zip_;
  std::vector<PolygonPart> parts_;
  GeoPoint internal_point_;
  double land_area_;
  double water_area_;
};

// Axis-aligned rectangle [lat0, lat1] x [lon0, lon1] as a single closed ring.
Ring rectangle_ring(double lat0, double lon0, double lat1, double lon1);

double haversine_miles(const GeoPoint& a, const GeoPoint& b);

// Points on an edge or vertex count as inside.
bool point_in_ring(const GeoPoint& p, const Ring& ring);
bool point_on_ring(const GeoPoint& p, const Ring& ring);
bool point_in_polygon(const GeoPoint& p, const std::vector<PolygonPart>& parts);
bool point_in_polygon(const GeoPoint& p, const ZipPolygon& poly);

// Euclidean distance in (lat, lon) degree space from p to segment [a, b].
double segment_distance_degrees(const GeoPoint& p, const GeoPoint& a,
                                const GeoPoint& b);
double ring_distance_degrees(const GeoPoint& p, const Ring& ring);

// Zero when p is inside or on the boundary, otherwise the minimum
// degree-space distance to any ring of any part. No latitude correction.
double boundary_distance_degrees(const GeoPoint& p,
                                 const std::vector<PolygonPart>& parts);
double boundary_distance_degrees(const GeoPoint& p, const ZipPolygon& poly);

// Display-only conversion at roughly 50 miles per degree.
double degrees_to_approx_miles(double degrees);

}  // namespace geobias
