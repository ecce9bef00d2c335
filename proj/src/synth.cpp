#include "geobias/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numbers>
#include <set>

#include "geobias/csv.hpp"
#include "geobias/errors.hpp"
#include "geobias/parallel.hpp"

namespace geobias {

using nlohmann::json;

std::string_view to_string(SynthCategory c) {
  switch (c) {
    case SynthCategory::agree: return "agree";
    case SynthCategory::parsed_only: return "parsed_only";
    case SynthCategory::geocode_only: return "geocode_only";
    case SynthCategory::disagree: return "disagree";
    case SynthCategory::outside_us: return "outside_us";
    case SynthCategory::no_zip: return "no_zip";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

void validate(const SynthConfig& c) {
  auto fail = [](const std::string& what) { throw InputError("synth config: " + what); };
  if (c.rows < 1 || c.cols < 1) fail("grid rows and cols must be positive");
  const long long cells = static_cast<long long>(c.rows) * c.cols;
  if (cells < 2) fail("grid needs at least 2 cells");
  if (cells > 65536) fail("grid may have at most 65536 cells");
  if (!(c.cell_deg > 0.0) || !std::isfinite(c.cell_deg)) fail("cell_deg must be positive");
  if (c.origin_lat < -90.0 || c.origin_lat + c.rows * c.cell_deg > 90.0) {
    fail("grid leaves the latitude range");
  }
  if (c.origin_lon < -180.0 || c.origin_lon + c.cols * c.cell_deg > 180.0) {
    fail("grid leaves the longitude range");
  }
  auto finite = [&](double v, const char* name) {
    if (!std::isfinite(v)) fail(std::string(name) + " must be finite");
  };
  finite(c.usage_beta, "usage_beta");
  finite(c.match_dci_slope, "match_dci_slope");
  finite(c.error_dci_gamma, "error_dci_gamma");
  if (!(c.match_base >= 0.0 && c.match_base <= 1.0)) fail("match_base must lie in [0,1]");
  if (!(c.error_sigma0 > 0.0) || !std::isfinite(c.error_sigma0)) {
    fail("error_sigma0 must be positive");
  }
  if (!(c.snap_prosperity_weight >= 0.0) || !std::isfinite(c.snap_prosperity_weight)) {
    fail("snap_prosperity_weight must be >= 0");
  }
  const RuleMix& m = c.rule_mix;
  for (double w : {m.agree, m.parsed_only, m.geocode_only, m.disagree, m.outside_us, m.no_zip}) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail("rule_mix weights must be >= 0");
  }
  if (!(m.agree + m.parsed_only + m.geocode_only + m.disagree + m.outside_us + m.no_zip > 0.0)) {
    fail("rule_mix weights must not all be zero");
  }
  if (!(c.population_median >= 1.0) || !std::isfinite(c.population_median)) {
    fail("population median must be >= 1");
  }
  if (!(c.area_median > 0.0) || !std::isfinite(c.area_median)) fail("area median must be positive");
  if (!(c.population_log_sd >= 0.0) || !(c.area_log_sd >= 0.0)) fail("log_sd must be >= 0");
  if (c.n_courses < 1 || c.n_courses > 9999) fail("n_courses must lie in [1,9999]");
  if (!(c.mean_courses >= 0.0) || c.mean_courses > 1000.0) fail("mean_courses must lie in [0,1000]");
  for (double p : {c.completion_prob, c.certification_prob, c.staff_fraction}) {
    if (!(p >= 0.0 && p <= 1.0)) fail("registration probabilities must lie in [0,1]");
  }
}

namespace {

template <class T>
void take(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(std::string("synth config: bad value for '") + key + "': " + e.what());
  }
}

void check_keys(const json& obj, std::initializer_list<const char*> keys, const char* where) {
  if (!obj.is_object()) throw InputError(std::string("synth config: ") + where + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* x) { return k == x; })) {
      throw InputError(std::string("synth config: unknown key '") + k + "' in " + where);
    }
  }
}

}  // namespace

SynthConfig synth_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("synth config: ") + e.what());
  }
  SynthConfig c;
  check_keys(j,
             {"grid", "n_users", "usage_beta", "match_base", "match_dci_slope", "error_sigma0",
              "error_dci_gamma", "snap_prosperity_weight", "seed", "rule_mix", "population",
              "area", "registrations"},
             "top level");
  if (j.contains("grid")) {
    const json& g = j["grid"];
    check_keys(g, {"rows", "cols", "cell_deg", "origin_lat", "origin_lon"}, "grid");
    take(g, "rows", c.rows);
    take(g, "cols", c.cols);
    take(g, "cell_deg", c.cell_deg);
    take(g, "origin_lat", c.origin_lat);
    take(g, "origin_lon", c.origin_lon);
  }
  take(j, "n_users", c.n_users);
  take(j, "usage_beta", c.usage_beta);
  take(j, "match_base", c.match_base);
  take(j, "match_dci_slope", c.match_dci_slope);
  take(j, "error_sigma0", c.error_sigma0);
  take(j, "error_dci_gamma", c.error_dci_gamma);
  take(j, "snap_prosperity_weight", c.snap_prosperity_weight);
  take(j, "seed", c.seed);
  if (j.contains("rule_mix")) {
    const json& m = j["rule_mix"];
    check_keys(m, {"agree", "parsed_only", "geocode_only", "disagree", "outside_us", "no_zip"},
               "rule_mix");
    take(m, "agree", c.rule_mix.agree);
    take(m, "parsed_only", c.rule_mix.parsed_only);
    take(m, "geocode_only", c.rule_mix.geocode_only);
    take(m, "disagree", c.rule_mix.disagree);
    take(m, "outside_us", c.rule_mix.outside_us);
    take(m, "no_zip", c.rule_mix.no_zip);
  }
  if (j.contains("population")) {
    const json& p = j["population"];
    check_keys(p, {"median", "log_sd"}, "population");
    take(p, "median", c.population_median);
    take(p, "log_sd", c.population_log_sd);
  }
  if (j.contains("area")) {
    const json& a = j["area"];
    check_keys(a, {"median", "log_sd"}, "area");
    take(a, "median", c.area_median);
    take(a, "log_sd", c.area_log_sd);
  }
  if (j.contains("registrations")) {
    const json& r = j["registrations"];
    check_keys(r, {"n_courses", "mean_courses", "completion_prob", "certification_prob",
                   "staff_fraction"},
               "registrations");
    take(r, "n_courses", c.n_courses);
    take(r, "mean_courses", c.mean_courses);
    take(r, "completion_prob", c.completion_prob);
    take(r, "certification_prob", c.certification_prob);
    take(r, "staff_fraction", c.staff_fraction);
  }
  validate(c);
  return c;
}

std::string synth_config_to_json(const SynthConfig& c) {
  json j;
  j["grid"] = {{"rows", c.rows},
               {"cols", c.cols},
               {"cell_deg", c.cell_deg},
               {"origin_lat", c.origin_lat},
               {"origin_lon", c.origin_lon}};
  j["n_users"] = c.n_users;
  j["usage_beta"] = c.usage_beta;
  j["match_base"] = c.match_base;
  j["match_dci_slope"] = c.match_dci_slope;
  j["error_sigma0"] = c.error_sigma0;
  j["error_dci_gamma"] = c.error_dci_gamma;
  j["snap_prosperity_weight"] = c.snap_prosperity_weight;
  j["seed"] = c.seed;
  j["rule_mix"] = {{"agree", c.rule_mix.agree},           {"parsed_only", c.rule_mix.parsed_only},
                   {"geocode_only", c.rule_mix.geocode_only}, {"disagree", c.rule_mix.disagree},
                   {"outside_us", c.rule_mix.outside_us}, {"no_zip", c.rule_mix.no_zip}};
  j["population"] = {{"median", c.population_median}, {"log_sd", c.population_log_sd}};
  j["area"] = {{"median", c.area_median}, {"log_sd", c.area_log_sd}};
  j["registrations"] = {{"n_courses", c.n_courses},
                        {"mean_courses", c.mean_courses},
                        {"completion_prob", c.completion_prob},
                        {"certification_prob", c.certification_prob},
                        {"staff_fraction", c.staff_fraction}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// PRNG
// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

SynthRng::SynthRng(std::uint64_t seed, std::uint64_t stream)
    : engine_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL))) {}

double SynthRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SynthRng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SynthRng::below(std::uint64_t n) {
  if (n == 0) throw InputError("SynthRng::below(0)");
  // rejection keeps the draw unbiased
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

int SynthRng::poisson(double mean) {
  if (!(mean > 0.0)) return 0;
  if (mean > 30.0) {
    const double v = std::round(mean + std::sqrt(mean) * normal());
    return v < 0.0 ? 0 : static_cast<int>(v);
  }
  const double limit = std::exp(-mean);
  int k = 0;
  double p = uniform();
  while (p > limit) {
    ++k;
    p *= uniform();
  }
  return k;
}

// ---------------------------------------------------------------------------
// world
// ---------------------------------------------------------------------------

namespace {

ZipCode cell_zip(std::size_t index) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%05zu", 10000 + index);
  return buf;
}

}  // namespace

SynthWorld generate_world(const SynthConfig& config) {
  validate(config);
  SynthWorld w;
  w.config = config;
  SynthRng rng(config.seed, 0);
  const std::size_t n = static_cast<std::size_t>(config.rows) * static_cast<std::size_t>(config.cols);

  // latent distress rank per cell, independent across cells
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  w.cells.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    SynthCell& c = w.cells[i];
    c.row = static_cast<int>(i / static_cast<std::size_t>(config.cols));
    c.col = static_cast<int>(i % static_cast<std::size_t>(config.cols));
    c.zip = cell_zip(i);
    c.lat0 = config.origin_lat + c.row * config.cell_deg;
    c.lat1 = config.origin_lat + (c.row + 1) * config.cell_deg;
    c.lon0 = config.origin_lon + c.col * config.cell_deg;
    c.lon1 = config.origin_lon + (c.col + 1) * config.cell_deg;
    const double pop = std::round(config.population_median *
                                  std::exp(config.population_log_sd * rng.normal()));
    c.population = std::max<long long>(1, static_cast<long long>(pop));
    c.area = config.area_median * std::exp(config.area_log_sd * rng.normal());
    c.block_base = (10u << 24) + static_cast<std::uint32_t>(i) * 256u;

    const double t = static_cast<double>(order[i]) / static_cast<double>(n - 1);
    DciInputRow d;
    d.zip = c.zip;
    d.population = c.population;
    // every metric is strictly monotone in t, so all seven rank orders agree
    d.no_hs_diploma_rate = 0.04 + 0.30 * t;
    d.housing_vacancy_rate = 0.03 + 0.22 * std::pow(t, 1.5);
    d.unemployment_rate = 0.02 + 0.14 * t;
    d.poverty_rate = 0.04 + 0.36 * std::pow(t, 0.8);
    d.median_income_ratio = 1.7 - 1.1 * t;
    d.employment_change_pct = 9.0 - 15.0 * t;
    d.establishments_change_pct = 6.0 - 11.0 * std::sqrt(t);
    w.dci_rows.push_back(std::move(d));

    GeoIpBlockRow b;
    b.cidr = Cidr{Ipv4Address{c.block_base}, 24, false};
    b.network = format_cidr(b.cidr);
    b.postal_code = c.zip;
    b.latitude = 0.5 * (c.lat0 + c.lat1);
    b.longitude = 0.5 * (c.lon0 + c.lon1);
    w.geoip_rows.push_back(std::move(b));

    std::vector<PolygonPart> parts{{rectangle_ring(c.lat0, c.lon0, c.lat1, c.lon1), {}}};
    w.polygons.emplace(c.zip, ZipPolygon(c.zip, std::move(parts),
                                         GeoPoint{*w.geoip_rows.back().latitude,
                                                  *w.geoip_rows.back().longitude},
                                         c.area, 0.0));
  }
  const DciTable table = composite_dci(w.dci_rows);
  for (auto& c : w.cells) {
    c.dci = table.at(c.zip).dci;
    c.density = static_cast<double>(c.population) / c.area;
  }
  return w;
}

// ---------------------------------------------------------------------------
// users
// ---------------------------------------------------------------------------

namespace {

std::size_t sample_cumulative(const std::vector<double>& cumulative, double u) {
  const double target = u * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                               cumulative.size() - 1);
}

double rect_distance(const SynthCell& c, double lat, double lon) {
  const double dy = std::max({c.lat0 - lat, 0.0, lat - c.lat1});
  const double dx = std::max({c.lon0 - lon, 0.0, lon - c.lon1});
  return std::hypot(dx, dy);
}

SynthCategory draw_category(const RuleMix& m, double u) {
  const double w[] = {m.agree, m.parsed_only, m.geocode_only, m.disagree, m.outside_us, m.no_zip};
  double total = 0.0;
  for (double x : w) total += x;
  double acc = 0.0;
  for (int k = 0; k < 6; ++k) {
    acc += w[k];
    if (u * total < acc) return static_cast<SynthCategory>(k);
  }
  for (int k = 5; k >= 0; --k) {
    if (w[k] > 0.0) return static_cast<SynthCategory>(k);
  }
  return SynthCategory::agree;
}

struct UserDraw {
  UserInputRow user;
  TruthRow truth;
  std::vector<RegistrationRow> registrations;
};

}  // namespace

SynthUsers generate_users(const SynthWorld& world, unsigned threads) {
  const SynthConfig& cfg = world.config;
  validate(cfg);
  const std::size_t n_cells = world.cells.size();
  if (n_cells < 2) throw InputError("synth world needs at least 2 cells");

  std::vector<double> usage_cum(n_cells);
  std::vector<double> decoy_base(n_cells);
  double acc = 0.0;
  for (std::size_t i = 0; i < n_cells; ++i) {
    const SynthCell& c = world.cells[i];
    acc += static_cast<double>(c.population) * std::exp(-cfg.usage_beta * c.dci);
    usage_cum[i] = acc;
    decoy_base[i] = c.density * std::exp(-cfg.snap_prosperity_weight * c.dci);
  }
  if (!(acc > 0.0) || !std::isfinite(acc)) throw NumericalError("synth: usage weights degenerate");

  std::vector<std::string> courses(static_cast<std::size_t>(cfg.n_courses));
  for (int k = 0; k < cfg.n_courses; ++k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "C%04d", k + 1);
    courses[static_cast<std::size_t>(k)] = buf;
  }

  std::vector<UserDraw> draws(cfg.n_users);
  parallel_for(
      cfg.n_users,
      [&](std::size_t idx) {
        SynthRng rng(cfg.seed, 1 + static_cast<std::uint64_t>(idx));
        UserDraw& d = draws[idx];
        TruthRow& t = d.truth;
        char id[24];
        std::snprintf(id, sizeof id, "u%08zu", idx + 1);
        t.user_id = id;

        t.true_cell = sample_cumulative(usage_cum, rng.uniform());
        const SynthCell& tc = world.cells[t.true_cell];
        t.true_zip = tc.zip;
        t.true_dci = tc.dci;
        t.true_lat = tc.lat0 + (tc.lat1 - tc.lat0) * rng.uniform();
        t.true_lon = tc.lon0 + (tc.lon1 - tc.lon0) * rng.uniform();
        t.category = draw_category(cfg.rule_mix, rng.uniform());

        t.match_probability = std::clamp(cfg.match_base + cfg.match_dci_slope * tc.dci, 0.0, 1.0);
        t.match_draw = rng.uniform();
        t.matched = t.match_draw < t.match_probability;
        t.sigma = cfg.error_sigma0 * std::exp(cfg.error_dci_gamma * tc.dci);
        if (t.matched) {
          t.observed_cell = t.true_cell;
        } else {
          std::vector<double> cum(n_cells);
          double s = 0.0;
          const double inv = 1.0 / (2.0 * t.sigma * t.sigma);
          for (std::size_t c = 0; c < n_cells; ++c) {
            if (c != t.true_cell) {
              const double dist = rect_distance(world.cells[c], t.true_lat, t.true_lon);
              s += decoy_base[c] * std::exp(-dist * dist * inv);
            }
            cum[c] = s;
          }
          const double u = rng.uniform();
          if (s > 0.0) {
            t.observed_cell = sample_cumulative(cum, u);
            // zero-width steps belong to the true cell; step past it
            while (t.observed_cell == t.true_cell ||
                   (t.observed_cell > 0 && cum[t.observed_cell] == cum[t.observed_cell - 1])) {
              t.observed_cell = (t.observed_cell + 1) % n_cells;
            }
          } else {
            t.observed_cell = (t.true_cell + 1) % n_cells;
          }
        }
        const SynthCell& oc = world.cells[t.observed_cell];
        t.observed_zip = oc.zip;
        t.observed_dci = oc.dci;
        t.observed_ip = Ipv4Address{oc.block_base + 1u + static_cast<std::uint32_t>(rng.below(254))};

        UserInputRow& u = d.user;
        u.user_id = t.user_id;
        u.modal_ip = t.observed_ip;
        switch (t.category) {
          case SynthCategory::agree:
            u.parsed_zip = tc.zip;
            u.address_type = AddressType::street_address;
            u.geo_zip = tc.zip;
            u.geo_lat = t.true_lat;
            u.geo_lon = t.true_lon;
            u.geo_accuracy = GeocodeAccuracy::rooftop;
            u.geo_in_us = TriState::yes;
            break;
          case SynthCategory::parsed_only:
            u.parsed_zip = tc.zip;
            u.address_type = AddressType::po_box;
            break;
          case SynthCategory::geocode_only:
            u.parsed_city = "Gridville";
            u.parsed_state = "GV";
            u.address_type = AddressType::street_address;
            u.geo_zip = tc.zip;
            u.geo_lat = t.true_lat;
            u.geo_lon = t.true_lon;
            u.geo_accuracy = GeocodeAccuracy::range_interpolated;
            u.geo_in_us = TriState::yes;
            break;
          case SynthCategory::disagree: {
            std::vector<std::size_t> nbrs;
            const int r = tc.row, c = tc.col;
            const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
              const int rr = r + dr[k], cc = c + dc[k];
              if (rr >= 0 && rr < cfg.rows && cc >= 0 && cc < cfg.cols) {
                nbrs.push_back(static_cast<std::size_t>(rr) * static_cast<std::size_t>(cfg.cols) +
                               static_cast<std::size_t>(cc));
              }
            }
            const std::size_t nb = nbrs[rng.below(nbrs.size())];
            u.parsed_zip = tc.zip;
            u.address_type = AddressType::street_address;
            u.geo_zip = world.cells[nb].zip;
            u.geo_lat = t.true_lat;
            u.geo_lon = t.true_lon;
            u.geo_accuracy = GeocodeAccuracy::range_interpolated;
            u.geo_in_us = TriState::yes;
            break;
          }
          case SynthCategory::outside_us:
            u.parsed_zip = tc.zip;
            u.address_type = AddressType::street_address;
            u.geo_lat = 51.5;
            u.geo_lon = -0.12;
            u.geo_accuracy = GeocodeAccuracy::rooftop;
            u.geo_in_us = TriState::no;
            break;
          case SynthCategory::no_zip:
            u.address_type = AddressType::unknown;
            break;
        }

        const bool staff = rng.uniform() < cfg.staff_fraction;
        const int k = std::min(rng.poisson(cfg.mean_courses), cfg.n_courses);
        std::vector<std::size_t> picks(courses.size());
        for (std::size_t j = 0; j < picks.size(); ++j) picks[j] = j;
        for (int j = 0; j < k; ++j) {
          const std::size_t s = static_cast<std::size_t>(j) + rng.below(picks.size() - static_cast<std::size_t>(j));
          std::swap(picks[static_cast<std::size_t>(j)], picks[s]);
        }
        std::sort(picks.begin(), picks.begin() + k);
        for (int j = 0; j < k; ++j) {
          RegistrationRow reg;
          reg.user_id = t.user_id;
          reg.course_id = courses[picks[static_cast<std::size_t>(j)]];
          reg.zip = t.observed_zip;
          reg.viewed = rng.uniform() < 0.85;
          reg.completed = reg.viewed && rng.uniform() < cfg.completion_prob;
          reg.certified = reg.completed && rng.uniform() < cfg.certification_prob;
          reg.is_staff = staff;
          d.registrations.push_back(std::move(reg));
        }
      },
      threads);

  SynthUsers out;
  out.users.reserve(draws.size());
  out.truth.reserve(draws.size());
  for (auto& d : draws) {
    out.users.push_back(std::move(d.user));
    out.truth.push_back(std::move(d.truth));
    for (auto& r : d.registrations) out.registrations.push_back(std::move(r));
  }
  return out;
}

void write_truth_csv(std::ostream& os, const std::vector<TruthRow>& rows) {
  using csv::format_double;
  csv::write_record(os, {"user_id", "true_cell", "true_zip", "true_lat", "true_lon", "true_dci",
                         "category", "match_probability", "match_draw", "matched", "sigma_deg",
                         "observed_cell", "observed_zip", "observed_dci", "observed_ip"});
  for (const auto& t : rows) {
    csv::write_record(os, {t.user_id, std::to_string(t.true_cell), t.true_zip,
                           format_double(t.true_lat), format_double(t.true_lon),
                           format_double(t.true_dci), std::string(to_string(t.category)),
                           format_double(t.match_probability), format_double(t.match_draw),
                           t.matched ? "1" : "0", format_double(t.sigma),
                           std::to_string(t.observed_cell), t.observed_zip,
                           format_double(t.observed_dci), format_ipv4(t.observed_ip)});
  }
}

}  // namespace geobias
