#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "geobias/geometry.hpp"
#include "geobias/ipv4.hpp"
#include "geobias/zip.hpp"

namespace geobias {

// ---------------------------------------------------------------------------
// Record types
// ---------------------------------------------------------------------------

struct GeoIpBlockRow {
  std::string network;  // as written in the source, e.g. "10.0.0.0/8"
  Cidr cidr;
  ZipCode postal_code;  // empty when the block has no postal assignment
  std::optional<double> latitude;
  std::optional<double> longitude;

  friend bool operator==(const GeoIpBlockRow&, const GeoIpBlockRow&) = default;
};

struct DciInputRow {
  ZipCode zip;
  long long population = 0;
  double no_hs_diploma_rate = 0.0;
  double housing_vacancy_rate = 0.0;
  double unemployment_rate = 0.0;
  double poverty_rate = 0.0;
  double median_income_ratio = 0.0;
  double employment_change_pct = 0.0;
  double establishments_change_pct = 0.0;
  // Vendor categorical density, 1 (Low) .. 4 (Very High). Carried through,
  // not used by the analyses.
  std::optional<int> density_category;

  friend bool operator==(const DciInputRow&, const DciInputRow&) = default;
};

enum class AddressType { street_address, po_box, city_only, unknown };
enum class GeocodeAccuracy {
  rooftop,
  range_interpolated,
  geometric_center,
  approximate,
  none
};
enum class TriState { yes, no, unknown };

struct UserInputRow {
  std::string user_id;
  Ipv4Address modal_ip;
  ZipCode parsed_zip;
  std::string parsed_city;
  std::string parsed_state;
  AddressType address_type = AddressType::unknown;
  ZipCode geo_zip;
  std::optional<double> geo_lat;
  std::optional<double> geo_lon;
  GeocodeAccuracy geo_accuracy = GeocodeAccuracy::none;
  TriState geo_in_us = TriState::unknown;

  friend bool operator==(const UserInputRow&, const UserInputRow&) = default;
};

struct RegistrationRow {
  std::string user_id;
  std::string course_id;
  ZipCode zip;  // pre-geolocated; empty when unknown
  bool viewed = false;
  bool completed = false;
  bool certified = false;
  bool is_staff = false;

  friend bool operator==(const RegistrationRow&, const RegistrationRow&) = default;
};

std::string_view to_string(AddressType v);
std::string_view to_string(GeocodeAccuracy v);
std::string_view to_string(TriState v);
std::optional<AddressType> parse_address_type(std::string_view text);
std::optional<GeocodeAccuracy> parse_geocode_accuracy(std::string_view text);
std::optional<TriState> parse_tri_state(std::string_view text);

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

enum class LoadPolicy { strict, skip_invalid };

struct RowError {
  std::size_t line = 0;  // 1-based source line
  std::string message;
};

struct LoadReport {
  std::size_t total_rows = 0;
  std::size_t accepted = 0;
  std::size_t staff_rows = 0;  // registrations only
  std::vector<RowError> errors;
};

template <class Row>
struct Loaded {
  std::vector<Row> rows;
  LoadReport report;
};

enum class TableSchema { geoip, dci, users, registrations };

// Exact header each CSV schema expects. The DCI schema additionally accepts
// a trailing density_category column.
const std::vector<std::string>& expected_header(TableSchema schema);

// Returns the bytes unchanged unless they start with the gzip magic number,
// in which case they are inflated.
std::string decompress_if_gzip(std::string bytes);
std::string read_input_file(const std::string& path);

// All loaders take raw (possibly gzip-compressed) bytes. In strict mode the
// first malformed row throws InputError; in skip_invalid mode it is recorded
// in the report. A missing or mismatched header always throws.
Loaded<GeoIpBlockRow> load_geoip_csv(std::string_view bytes, LoadPolicy policy);
Loaded<DciInputRow> load_dci_csv(std::string_view bytes, LoadPolicy policy);
Loaded<UserInputRow> load_users_csv(std::string_view bytes, LoadPolicy policy);
Loaded<RegistrationRow> load_registrations_csv(std::string_view bytes,
                                               LoadPolicy policy);

// GeoJSON FeatureCollection of ZCTA features (ZCTA5CE, ALAND, AWATER,
// INTPTLAT, INTPTLON). Areas are converted from square meters to square
// miles. Throws InputError on malformed input or duplicate keys.
std::map<ZipCode, ZipPolygon> load_zip_polygons(std::string_view bytes);

inline constexpr double kSquareMetersPerSquareMile = 2589988.110336;

// ---------------------------------------------------------------------------
// Writing (inverse of the loaders)
// ---------------------------------------------------------------------------

void write_geoip_csv(std::ostream& os, const std::vector<GeoIpBlockRow>& rows);
void write_dci_csv(std::ostream& os, const std::vector<DciInputRow>& rows);
void write_users_csv(std::ostream& os, const std::vector<UserInputRow>& rows);
void write_registrations_csv(std::ostream& os,
                             const std::vector<RegistrationRow>& rows);
void write_zip_polygons(std::ostream& os,
                        const std::map<ZipCode, ZipPolygon>& polygons);

}  // namespace geobias
