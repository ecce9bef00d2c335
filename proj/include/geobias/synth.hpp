#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "geobias/dci.hpp"
#include "geobias/geometry.hpp"
#include "geobias/ingest.hpp"

namespace geobias {

// How emitted users are spread over the ground-truth rule branches.
struct RuleMix {
  double agree = 0.70;
  double parsed_only = 0.05;
  double geocode_only = 0.10;
  double disagree = 0.05;
  double outside_us = 0.05;
  double no_zip = 0.05;
};

enum class SynthCategory { agree, parsed_only, geocode_only, disagree, outside_us, no_zip };
std::string_view to_string(SynthCategory c);

struct SynthConfig {
  int rows = 10;
  int cols = 10;
  double cell_deg = 0.1;
  double origin_lat = 35.0;
  double origin_lon = -100.0;

  std::size_t n_users = 10000;
  double usage_beta = 0.0;
  double match_base = 0.3;
  double match_dci_slope = 0.0;
  double error_sigma0 = 0.25;
  double error_dci_gamma = 0.0;
  double snap_prosperity_weight = 0.0;
  std::uint64_t seed = 1;

  RuleMix rule_mix;

  double population_median = 10000.0;
  double population_log_sd = 0.6;
  double area_median = 40.0;  // sq mi, independent of the cell outline
  double area_log_sd = 0.6;

  int n_courses = 20;
  double mean_courses = 2.0;
  double completion_prob = 0.3;
  double certification_prob = 0.5;
  double staff_fraction = 0.005;
};

// Throws InputError on an invalid value.
void validate(const SynthConfig& config);

// JSON object with the layout documented in docs/synth_config.schema.json.
// Missing keys keep their defaults; unknown keys throw InputError.
SynthConfig synth_config_from_json(std::string_view text);
std::string synth_config_to_json(const SynthConfig& config);

inline constexpr std::string_view kSynthGenerator = "mt19937_64/splitmix64-streams";

// Portable draws on top of std::mt19937_64, whose output sequence the
// standard fixes exactly.
class SynthRng {
 public:
  SynthRng(std::uint64_t seed, std::uint64_t stream);

  double uniform();  // [0, 1)
  double normal();   // Box-Muller, one draw per call
  std::uint64_t below(std::uint64_t n);
  int poisson(double mean);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

struct SynthCell {
  int row = 0;
  int col = 0;
  ZipCode zip;
  double lat0 = 0.0, lon0 = 0.0, lat1 = 0.0, lon1 = 0.0;
  double dci = 0.0;
  long long population = 0;
  double area = 0.0;
  double density = 0.0;
  std::uint32_t block_base = 0;  // first address of the cell's /24
};

struct SynthWorld {
  SynthConfig config;
  std::vector<SynthCell> cells;  // row-major
  std::map<ZipCode, ZipPolygon> polygons;
  std::vector<DciInputRow> dci_rows;
  std::vector<GeoIpBlockRow> geoip_rows;
};

// ZIPs are 10000 + cell index; cell i owns 10.0.0.0 + 256 i /24.
SynthWorld generate_world(const SynthConfig& config);

struct TruthRow {
  std::string user_id;
  std::size_t true_cell = 0;
  ZipCode true_zip;
  double true_lat = 0.0;
  double true_lon = 0.0;
  double true_dci = 0.0;
  SynthCategory category = SynthCategory::agree;
  double match_probability = 0.0;
  double match_draw = 0.0;
  bool matched = false;
  double sigma = 0.0;  // degrees
  std::size_t observed_cell = 0;
  ZipCode observed_zip;
  double observed_dci = 0.0;
  Ipv4Address observed_ip;
};

struct SynthUsers {
  std::vector<UserInputRow> users;
  std::vector<TruthRow> truth;
  std::vector<RegistrationRow> registrations;
};

// Per-user PRNG streams, so the output does not depend on the thread count.
SynthUsers generate_users(const SynthWorld& world, unsigned threads = 0);

void write_truth_csv(std::ostream& os, const std::vector<TruthRow>& rows);

}  // namespace geobias
