#include "geobias/ingest.hpp"

#include <zlib.h>

#include <fstream>
#include <functional>
#include <json.hpp>
#include <set>
#include <sstream>

#include "geobias/csv.hpp"
#include "geobias/errors.hpp"

namespace geobias {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// enum text
// ---------------------------------------------------------------------------

std::string_view to_string(AddressType v) {
  switch (v) {
    case AddressType::street_address: return "street_address";
    case AddressType::po_box: return "po_box";
    case AddressType::city_only: return "city_only";
    case AddressType::unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(GeocodeAccuracy v) {
  switch (v) {
    case GeocodeAccuracy::rooftop: return "rooftop";
    case GeocodeAccuracy::range_interpolated: return "range_interpolated";
    case GeocodeAccuracy::geometric_center: return "geometric_center";
    case GeocodeAccuracy::approximate: return "approximate";
    case GeocodeAccuracy::none: return "none";
  }
  return "none";
}

std::string_view to_string(TriState v) {
  switch (v) {
    case TriState::yes: return "yes";
    case TriState::no: return "no";
    case TriState::unknown: return "unknown";
  }
  return "unknown";
}

std::optional<AddressType> parse_address_type(std::string_view text) {
  for (auto v : {AddressType::street_address, AddressType::po_box,
                 AddressType::city_only, AddressType::unknown}) {
    if (text == to_string(v)) return v;
  }
  return std::nullopt;
}

std::optional<GeocodeAccuracy> parse_geocode_accuracy(std::string_view text) {
  for (auto v : {GeocodeAccuracy::rooftop, GeocodeAccuracy::range_interpolated,
                 GeocodeAccuracy::geometric_center, GeocodeAccuracy::approximate,
                 GeocodeAccuracy::none}) {
    if (text == to_string(v)) return v;
  }
  return std::nullopt;
}

std::optional<TriState> parse_tri_state(std::string_view text) {
  for (auto v : {TriState::yes, TriState::no, TriState::unknown}) {
    if (text == to_string(v)) return v;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// bytes
// ---------------------------------------------------------------------------

std::string decompress_if_gzip(std::string bytes) {
  if (bytes.size() < 2 || static_cast<unsigned char>(bytes[0]) != 0x1f ||
      static_cast<unsigned char>(bytes[1]) != 0x8b) {
    return bytes;
  }
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
    throw InputError("gzip: inflateInit2 failed");
  }
  zs.next_in = reinterpret_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  std::string out;
  char buffer[1 << 15];
  int ret = Z_OK;
  while (ret != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buffer);
    zs.avail_out = sizeof(buffer);
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      throw InputError("gzip: corrupt compressed stream");
    }
    out.append(buffer, sizeof(buffer) - zs.avail_out);
    if (ret == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw InputError("gzip: truncated compressed stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::string read_input_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open input file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

const std::vector<std::string>& expected_header(TableSchema schema) {
  static const std::vector<std::string> geoip{"network", "postal_code",
                                              "latitude", "longitude"};
  static const std::vector<std::string> dci{"zip",
                                            "population",
                                            "no_hs_diploma_rate",
                                            "housing_vacancy_rate",
                                            "unemployment_rate",
                                            "poverty_rate",
                                            "median_income_ratio",
                                            "employment_change_pct",
                                            "establishments_change_pct"};
  static const std::vector<std::string> users{
      "user_id",      "modal_ip", "parsed_zip", "parsed_city",
      "parsed_state", "address_type", "geo_zip", "geo_lat",
      "geo_lon",      "geo_accuracy", "geo_in_us"};
  static const std::vector<std::string> registrations{
      "user_id", "course_id", "zip", "viewed", "completed", "certified",
      "is_staff"};
  switch (schema) {
    case TableSchema::geoip: return geoip;
    case TableSchema::dci: return dci;
    case TableSchema::users: return users;
    case TableSchema::registrations: return registrations;
  }
  return geoip;
}

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += v[i];
  }
  return s;
}

// Reads the header, then hands each data record to parse_row. parse_row
// throws InputError for a malformed record.
template <class Row>
Loaded<Row> load_csv(std::string_view bytes, LoadPolicy policy,
                     TableSchema schema,
                     const std::function<bool(const std::vector<std::string>&)>&
                         header_ok,
                     const std::function<Row(const csv::Record&)>& parse_row) {
  const std::string text = decompress_if_gzip(std::string(bytes));
  csv::Reader reader(text);
  csv::Record header;
  if (!reader.next(header)) throw InputError("missing CSV header");
  if (!header_ok(header)) {
    throw InputError("CSV header mismatch: expected '" +
                     join(expected_header(schema)) + "', got '" + join(header) +
                     "'");
  }
  Loaded<Row> loaded;
  csv::Record record;
  while (reader.next(record)) {
    ++loaded.report.total_rows;
    try {
      if (record.size() != header.size()) {
        throw InputError("expected " + std::to_string(header.size()) +
                         " fields, got " + std::to_string(record.size()));
      }
      loaded.rows.push_back(parse_row(record));
      ++loaded.report.accepted;
    } catch (const InputError& e) {
      const std::string msg =
          "line " + std::to_string(reader.line()) + ": " + e.what();
      if (policy == LoadPolicy::strict) throw InputError(msg);
      loaded.report.errors.push_back({reader.line(), e.what()});
    }
  }
  return loaded;
}

std::optional<double> optional_number(const std::string& text,
                                      const char* column) {
  if (text.empty()) return std::nullopt;
  auto v = csv::parse_double(text);
  if (!v) throw InputError(std::string("non-numeric ") + column + " '" + text + "'");
  return v;
}

double required_number(const std::string& text, const char* column) {
  auto v = optional_number(text, column);
  if (!v) throw InputError(std::string("missing ") + column);
  return *v;
}

double fraction(const std::string& text, const char* column) {
  const double v = required_number(text, column);
  if (v < 0.0 || v > 1.0) {
    throw InputError(std::string(column) + " out of [0,1]: " + text);
  }
  return v;
}

ZipCode optional_zip(const std::string& text, const char* column) {
  if (!text.empty() && !is_valid_zip(text)) {
    throw InputError(std::string("invalid ") + column + " '" + text + "'");
  }
  return text;
}

bool parse_bool(const std::string& text, const char* column) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw InputError(std::string("invalid boolean ") + column + " '" + text + "'");
}

void check_coordinates(const std::optional<double>& lat,
                       const std::optional<double>& lon) {
  if (lat.has_value() != lon.has_value()) {
    throw InputError("latitude and longitude must both be present or both empty");
  }
  if (lat && !is_valid(GeoPoint{*lat, *lon})) {
    throw InputError("coordinates out of range");
  }
}

bool exact_header(const std::vector<std::string>& got, TableSchema schema) {
  return got == expected_header(schema);
}

}  // namespace

Loaded<GeoIpBlockRow> load_geoip_csv(std::string_view bytes, LoadPolicy policy) {
  return load_csv<GeoIpBlockRow>(
      bytes, policy, TableSchema::geoip,
      [](const auto& h) { return exact_header(h, TableSchema::geoip); },
      [](const csv::Record& r) {
        GeoIpBlockRow row;
        row.network = r[0];
        row.cidr = parse_cidr(r[0]);
        row.postal_code = optional_zip(r[1], "postal_code");
        row.latitude = optional_number(r[2], "latitude");
        row.longitude = optional_number(r[3], "longitude");
        check_coordinates(row.latitude, row.longitude);
        return row;
      });
}

Loaded<DciInputRow> load_dci_csv(std::string_view bytes, LoadPolicy policy) {
  return load_csv<DciInputRow>(
      bytes, policy, TableSchema::dci,
      [](const auto& h) {
        if (exact_header(h, TableSchema::dci)) return true;
        auto extended = expected_header(TableSchema::dci);
        extended.push_back("density_category");
        return h == extended;
      },
      [](const csv::Record& r) {
        DciInputRow row;
        row.zip = r[0];
        if (!is_valid_zip(row.zip)) throw InputError("invalid zip '" + r[0] + "'");
        const auto pop = csv::parse_int(r[1]);
        if (!pop || *pop <= 0) {
          throw InputError("population must be a positive integer: '" + r[1] + "'");
        }
        row.population = *pop;
        row.no_hs_diploma_rate = fraction(r[2], "no_hs_diploma_rate");
        row.housing_vacancy_rate = fraction(r[3], "housing_vacancy_rate");
        row.unemployment_rate = fraction(r[4], "unemployment_rate");
        row.poverty_rate = fraction(r[5], "poverty_rate");
        row.median_income_ratio = required_number(r[6], "median_income_ratio");
        if (row.median_income_ratio < 0.0) {
          throw InputError("median_income_ratio must be nonnegative");
        }
        row.employment_change_pct = required_number(r[7], "employment_change_pct");
        row.establishments_change_pct =
            required_number(r[8], "establishments_change_pct");
        if (r.size() > 9 && !r[9].empty()) {
          const auto cat = csv::parse_int(r[9]);
          if (!cat || *cat < 1 || *cat > 4) {
            throw InputError("density_category must be 1..4: '" + r[9] + "'");
          }
          row.density_category = static_cast<int>(*cat);
        }
        return row;
      });
}

Loaded<UserInputRow> load_users_csv(std::string_view bytes, LoadPolicy policy) {
  return load_csv<UserInputRow>(
      bytes, policy, TableSchema::users,
      [](const auto& h) { return exact_header(h, TableSchema::users); },
      [](const csv::Record& r) {
        UserInputRow row;
        row.user_id = r[0];
        if (row.user_id.empty()) throw InputError("empty user_id");
        row.modal_ip = parse_ipv4(r[1]);
        row.parsed_zip = optional_zip(r[2], "parsed_zip");
        row.parsed_city = r[3];
        row.parsed_state = r[4];
        const auto type = parse_address_type(r[5]);
        if (!type) throw InputError("invalid address_type '" + r[5] + "'");
        row.address_type = *type;
        row.geo_zip = optional_zip(r[6], "geo_zip");
        row.geo_lat = optional_number(r[7], "geo_lat");
        row.geo_lon = optional_number(r[8], "geo_lon");
        check_coordinates(row.geo_lat, row.geo_lon);
        const auto acc = parse_geocode_accuracy(r[9]);
        if (!acc) throw InputError("invalid geo_accuracy '" + r[9] + "'");
        row.geo_accuracy = *acc;
        const auto in_us = parse_tri_state(r[10]);
        if (!in_us) throw InputError("invalid geo_in_us '" + r[10] + "'");
        row.geo_in_us = *in_us;
        const bool confident = row.geo_accuracy == GeocodeAccuracy::rooftop ||
                               row.geo_accuracy == GeocodeAccuracy::range_interpolated;
        if (confident && !row.geo_lat) {
          throw InputError("confident geocode (" + r[9] + ") without coordinates");
        }
        return row;
      });
}

Loaded<RegistrationRow> load_registrations_csv(std::string_view bytes,
                                               LoadPolicy policy) {
  auto loaded = load_csv<RegistrationRow>(
      bytes, policy, TableSchema::registrations,
      [](const auto& h) { return exact_header(h, TableSchema::registrations); },
      [](const csv::Record& r) {
        RegistrationRow row;
        row.user_id = r[0];
        if (row.user_id.empty()) throw InputError("empty user_id");
        row.course_id = r[1];
        if (row.course_id.empty()) throw InputError("empty course_id");
        row.zip = optional_zip(r[2], "zip");
        row.viewed = parse_bool(r[3], "viewed");
        row.completed = parse_bool(r[4], "completed");
        row.certified = parse_bool(r[5], "certified");
        row.is_staff = parse_bool(r[6], "is_staff");
        return row;
      });
  for (const auto& row : loaded.rows) {
    if (row.is_staff) ++loaded.report.staff_rows;
  }
  return loaded;
}

// ---------------------------------------------------------------------------
// GeoJSON polygons
// ---------------------------------------------------------------------------

namespace {

double json_number(const json& v, const std::string& what) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    if (auto d = csv::parse_double(v.get<std::string>())) return *d;
  }
  throw InputError("expected numeric " + what);
}

Ring parse_ring(const json& coords, const std::string& zip) {
  if (!coords.is_array()) throw InputError("ZIP " + zip + ": ring is not an array");
  Ring ring;
  ring.reserve(coords.size());
  for (const auto& pt : coords) {
    if (!pt.is_array() || pt.size() < 2 || !pt[0].is_number() ||
        !pt[1].is_number()) {
      throw InputError("ZIP " + zip + ": malformed coordinate");
    }
    // GeoJSON positions are [lon, lat]
    ring.push_back({pt[1].get<double>(), pt[0].get<double>()});
  }
  return ring;
}

PolygonPart parse_part(const json& rings, const std::string& zip) {
  if (!rings.is_array() || rings.empty()) {
    throw InputError("ZIP " + zip + ": polygon without rings");
  }
  PolygonPart part;
  part.outer = parse_ring(rings[0], zip);
  for (std::size_t i = 1; i < rings.size(); ++i) {
    part.holes.push_back(parse_ring(rings[i], zip));
  }
  return part;
}

}  // namespace

std::map<ZipCode, ZipPolygon> load_zip_polygons(std::string_view bytes) {
  const std::string text = decompress_if_gzip(std::string(bytes));
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed GeoJSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array()) {
    throw InputError("GeoJSON root must be a FeatureCollection");
  }
  std::map<ZipCode, ZipPolygon> out;
  for (const auto& feature : doc["features"]) {
    if (!feature.is_object() || !feature.contains("properties") ||
        !feature.contains("geometry")) {
      throw InputError("GeoJSON feature missing properties or geometry");
    }
    const auto& props = feature["properties"];
    if (!props.contains("ZCTA5CE") || !props["ZCTA5CE"].is_string()) {
      throw InputError("feature missing string ZCTA5CE");
    }
    const std::string zip = props["ZCTA5CE"].get<std::string>();
    for (const char* key : {"ALAND", "AWATER", "INTPTLAT", "INTPTLON"}) {
      if (!props.contains(key)) {
        throw InputError("ZIP " + zip + ": missing property " + key);
      }
    }
    const double aland = json_number(props["ALAND"], "ALAND for " + zip);
    const double awater = json_number(props["AWATER"], "AWATER for " + zip);
    const GeoPoint internal{json_number(props["INTPTLAT"], "INTPTLAT for " + zip),
                            json_number(props["INTPTLON"], "INTPTLON for " + zip)};

    const auto& geom = feature["geometry"];
    if (!geom.is_object()) throw InputError("ZIP " + zip + ": null geometry");
    const std::string type = geom.value("type", "");
    if (!geom.contains("coordinates")) {
      throw InputError("ZIP " + zip + ": geometry without coordinates");
    }
    const auto& coords = geom["coordinates"];
    std::vector<PolygonPart> parts;
    if (type == "Polygon") {
      parts.push_back(parse_part(coords, zip));
    } else if (type == "MultiPolygon") {
      if (!coords.is_array() || coords.empty()) {
        throw InputError("ZIP " + zip + ": empty MultiPolygon");
      }
      for (const auto& poly : coords) parts.push_back(parse_part(poly, zip));
    } else {
      throw InputError("ZIP " + zip + ": unsupported geometry type '" + type + "'");
    }

    if (out.contains(zip)) throw InputError("duplicate ZCTA5CE " + zip);
    out.emplace(zip, ZipPolygon(zip, std::move(parts), internal,
                                aland / kSquareMetersPerSquareMile,
                                awater / kSquareMetersPerSquareMile));
  }
  return out;
}

// ---------------------------------------------------------------------------
// writers
// ---------------------------------------------------------------------------

void write_geoip_csv(std::ostream& os, const std::vector<GeoIpBlockRow>& rows) {
  csv::write_record(os, expected_header(TableSchema::geoip));
  for (const auto& r : rows) {
    csv::write_record(os, {r.network, r.postal_code, csv::format_optional(r.latitude),
                           csv::format_optional(r.longitude)});
  }
}

void write_dci_csv(std::ostream& os, const std::vector<DciInputRow>& rows) {
  auto header = expected_header(TableSchema::dci);
  const bool with_category = std::any_of(
      rows.begin(), rows.end(), [](const auto& r) { return r.density_category; });
  if (with_category) header.push_back("density_category");
  csv::write_record(os, header);
  for (const auto& r : rows) {
    csv::Record rec{r.zip,
                    std::to_string(r.population),
                    csv::format_double(r.no_hs_diploma_rate),
                    csv::format_double(r.housing_vacancy_rate),
                    csv::format_double(r.unemployment_rate),
                    csv::format_double(r.poverty_rate),
                    csv::format_double(r.median_income_ratio),
                    csv::format_double(r.employment_change_pct),
                    csv::format_double(r.establishments_change_pct)};
    if (with_category) {
      rec.push_back(r.density_category ? std::to_string(*r.density_category) : "");
    }
    csv::write_record(os, rec);
  }
}

void write_users_csv(std::ostream& os, const std::vector<UserInputRow>& rows) {
  csv::write_record(os, expected_header(TableSchema::users));
  for (const auto& r : rows) {
    csv::write_record(
        os, {r.user_id, format_ipv4(r.modal_ip), r.parsed_zip, r.parsed_city,
             r.parsed_state, std::string(to_string(r.address_type)), r.geo_zip,
             csv::format_optional(r.geo_lat), csv::format_optional(r.geo_lon),
             std::string(to_string(r.geo_accuracy)),
             std::string(to_string(r.geo_in_us))});
  }
}

void write_registrations_csv(std::ostream& os,
                             const std::vector<RegistrationRow>& rows) {
  csv::write_record(os, expected_header(TableSchema::registrations));
  auto b = [](bool v) { return std::string(v ? "1" : "0"); };
  for (const auto& r : rows) {
    csv::write_record(os, {r.user_id, r.course_id, r.zip, b(r.viewed),
                           b(r.completed), b(r.certified), b(r.is_staff)});
  }
}

void write_zip_polygons(std::ostream& os,
                        const std::map<ZipCode, ZipPolygon>& polygons) {
  auto ring_json = [](const Ring& ring) {
    json arr = json::array();
    for (const auto& p : ring) arr.push_back({p.lon, p.lat});
    return arr;
  };
  json features = json::array();
  for (const auto& [zip, poly] : polygons) {
    json parts = json::array();
    for (const auto& part : poly.parts()) {
      json rings = json::array();
      rings.push_back(ring_json(part.outer));
      for (const auto& hole : part.holes) rings.push_back(ring_json(hole));
      parts.push_back(std::move(rings));
    }
    json geometry;
    if (parts.size() == 1) {
      geometry = {{"type", "Polygon"}, {"coordinates", parts[0]}};
    } else {
      geometry = {{"type", "MultiPolygon"}, {"coordinates", parts}};
    }
    json props = {
        {"ZCTA5CE", zip},
        {"ALAND", poly.land_area() * kSquareMetersPerSquareMile},
        {"AWATER", poly.water_area() * kSquareMetersPerSquareMile},
        {"INTPTLAT", csv::format_double(poly.internal_point().lat)},
        {"INTPTLON", csv::format_double(poly.internal_point().lon)},
    };
    features.push_back(
        {{"type", "Feature"}, {"properties", props}, {"geometry", geometry}});
  }
  json doc = {{"type", "FeatureCollection"}, {"features", features}};
  os << doc.dump() << '\n';
}

}  // namespace geobias
