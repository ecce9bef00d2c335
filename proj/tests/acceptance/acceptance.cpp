// One line per acceptance criterion; exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <string>
#include <vector>

#include "geobias/audit.hpp"
#include "geobias/cli.hpp"
#include "geobias/dci.hpp"
#include "geobias/geolocate.hpp"
#include "geobias/geometry.hpp"
#include "geobias/pipeline.hpp"
#include "geobias/psychometrics.hpp"
#include "geobias/regression.hpp"
#include "geobias/synth.hpp"

namespace fs = std::filesystem;
using namespace geobias;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool ok = o.pass && in_time;
  if (!ok) ++failures;
  std::printf("%s %d: %s [%.3f s, budget %g s%s]\n", ok ? "PASS" : "FAIL", id, o.detail.c_str(), secs,
              budget_s, in_time ? "" : ", over budget");
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(GEOBIAS_TEST_TMP) / "acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------

Outcome spearman_brown_check() {
  const double r = spearman_brown(0.98, 576, 20);
  return {r >= 0.61 && r <= 0.65, fmt("spearman_brown(0.98, 576, 20) = %.4f, want [0.61, 0.65]", r)};
}

Outcome dci_uniformity() {
  constexpr int kTables = 1000, kZips = 1000;
  std::mt19937_64 gen(20240601);
  std::uniform_real_distribution<double> u(0, 1);
  int exact = 0;
  for (int t = 0; t < kTables; ++t) {
    std::vector<DciInputRow> rows(kZips);
    for (int i = 0; i < kZips; ++i) {
      auto& r = rows[static_cast<std::size_t>(i)];
      r.zip = fmt("%05d", i);
      r.population = 1000;
      r.no_hs_diploma_rate = u(gen);
      r.housing_vacancy_rate = u(gen);
      r.unemployment_rate = u(gen);
      r.median_income_ratio = u(gen);
      r.employment_change_pct = u(gen);
      r.establishments_change_pct = u(gen);
    }
    // plain rank sum of the six random metrics (continuous draws, no ties)
    std::vector<long> sum(kZips, 0);
    auto add_ranks = [&](double DciInputRow::*f, bool worse_high) {
      std::vector<int> idx(kZips);
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        const double x = rows[static_cast<std::size_t>(a)].*f, y = rows[static_cast<std::size_t>(b)].*f;
        return worse_high ? x < y : x > y;
      });
      for (int k = 0; k < kZips; ++k) sum[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] += k + 1;
    };
    add_ranks(&DciInputRow::no_hs_diploma_rate, true);
    add_ranks(&DciInputRow::housing_vacancy_rate, true);
    add_ranks(&DciInputRow::unemployment_rate, true);
    add_ranks(&DciInputRow::median_income_ratio, false);
    add_ranks(&DciInputRow::employment_change_pct, false);
    add_ranks(&DciInputRow::establishments_change_pct, false);
    // seventh metric ranked in six-sum order, so the seven-sums are distinct
    std::vector<int> order(kZips);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return sum[static_cast<std::size_t>(a)] < sum[static_cast<std::size_t>(b)]; });
    for (int k = 0; k < kZips; ++k) rows[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])].poverty_rate = k;

    const DciTable table = composite_dci(rows);
    std::vector<double> got;
    for (const auto& [z, s] : table) got.push_back(s.dci);
    std::sort(got.begin(), got.end());
    bool same = got.size() == static_cast<std::size_t>(kZips);
    for (int i = 0; same && i < kZips; ++i) same = got[static_cast<std::size_t>(i)] == 100.0 * i / (kZips - 1);
    exact += same ? 1 : 0;
  }
  return {exact == kTables, fmt("%d / %d tables give exactly {100 i / 999}", exact, kTables)};
}

double law_of_cosines_miles(const GeoPoint& a, const GeoPoint& b) {
  const double d2r = std::acos(-1.0) / 180.0;
  const double p1 = a.lat * d2r, p2 = b.lat * d2r, dl = (b.lon - a.lon) * d2r;
  double c = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
  c = std::clamp(c, -1.0, 1.0);
  return kEarthRadiusMiles * std::acos(c);
}

Outcome geometry_oracle() {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> u(0, 1);
  const double two_pi = 2 * std::acos(-1.0);
  constexpr int kPolys = 500, kSamples = 100000;
  int agree = 0;
  double worst_excess = 0;
  for (int t = 0; t < kPolys; ++t) {
    const double clat = -60 + 120 * u(gen), clon = -170 + 340 * u(gen);
    const double rad = 0.01 + 2 * u(gen);
    const int n = 3 + static_cast<int>(u(gen) * 20);
    std::vector<double> ang(static_cast<std::size_t>(n));
    for (auto& a : ang) a = two_pi * u(gen);
    std::sort(ang.begin(), ang.end());
    Ring ring;
    for (double a : ang) ring.push_back({clat + rad * std::sin(a), clon + rad * std::cos(a)});
    ring.push_back(ring.front());
    std::vector<PolygonPart> parts{{ring, {}}};
    GeoPoint p;
    do {
      const double a = two_pi * u(gen), r = rad * (0.5 + 3 * u(gen));
      p = {clat + r * std::sin(a), clon + r * std::cos(a)};
    } while (point_in_polygon(p, parts));
    const double analytic = boundary_distance_degrees(p, parts);

    double perim = 0;
    std::vector<double> len;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
      len.push_back(std::hypot(ring[i + 1].lat - ring[i].lat, ring[i + 1].lon - ring[i].lon));
      perim += len.back();
    }
    const double step = perim / kSamples;
    double sampled = INFINITY;
    std::size_t seg = 0;
    double seg_start = 0;
    for (int k = 0; k < kSamples; ++k) {
      const double s = k * step;
      while (seg + 1 < len.size() && s > seg_start + len[seg]) seg_start += len[seg++];
      const double f = len[seg] > 0 ? std::min(1.0, (s - seg_start) / len[seg]) : 0.0;
      const GeoPoint q{ring[seg].lat + f * (ring[seg + 1].lat - ring[seg].lat),
                       ring[seg].lon + f * (ring[seg + 1].lon - ring[seg].lon)};
      sampled = std::min(sampled, std::hypot(q.lat - p.lat, q.lon - p.lon));
    }
    const double excess = sampled - analytic;
    worst_excess = std::max(worst_excess, excess / step);
    if (excess >= -1e-12 && excess <= step) ++agree;
  }

  int hav_ok = 0, hav_n = 0;
  double worst_rel = 0;
  while (hav_n < 10000) {
    const GeoPoint a{-89 + 178 * u(gen), -180 + 360 * u(gen)};
    const double spread = std::pow(10.0, -2 + 4 * u(gen));  // 0.01 .. 100 degrees
    const GeoPoint b{std::clamp(a.lat + spread * (u(gen) - 0.5), -89.0, 89.0),
                     a.lon + spread * (u(gen) - 0.5)};
    const double h = haversine_miles(a, b);
    if (h < 1.0) continue;
    ++hav_n;
    const double rel = std::fabs(h - law_of_cosines_miles(a, b)) / h;
    worst_rel = std::max(worst_rel, rel);
    if (rel <= 1e-6) ++hav_ok;
  }
  return {agree == kPolys && hav_ok == hav_n,
          fmt("boundary %d / %d within sampling gap (worst %.3f gaps); haversine %d / %d within 1e-6 "
              "(worst %.2e)",
              agree, kPolys, worst_excess, hav_ok, hav_n, worst_rel)};
}

Outcome geolocation_index() {
  std::mt19937_64 gen(4242);
  std::vector<GeoIpBlockRow> rows;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> taken;
  while (rows.size() < 1000) {
    const int prefix = 12 + static_cast<int>(gen() % 21);
    const std::uint32_t size = prefix == 32 ? 1u : (1u << (32 - prefix));
    const std::uint32_t base = static_cast<std::uint32_t>(gen()) & ~(size - 1u);
    const std::uint32_t last = base + (size - 1u);
    bool clash = false;
    for (const auto& [s, e] : taken) clash = clash || !(last < s || base > e);
    if (clash) continue;
    taken.push_back({base, last});
    GeoIpBlockRow r;
    r.cidr = Cidr{Ipv4Address{base}, prefix, false};
    r.network = format_cidr(r.cidr);
    if (gen() % 10 != 0) {
      r.postal_code = fmt("%05u", static_cast<unsigned>(gen() % 100000));
      r.latitude = static_cast<double>(gen() % 180) - 90;
      r.longitude = static_cast<double>(gen() % 360) - 180;
    }
    rows.push_back(std::move(r));
  }
  const GeoIpIndex index = build_index(rows);
  int agree = 0, hits = 0;
  constexpr int kLookups = 100000;
  for (int k = 0; k < kLookups; ++k) {
    std::uint32_t ip;
    if (k % 2 == 0) {
      const auto& [s, e] = taken[gen() % taken.size()];
      ip = s + static_cast<std::uint32_t>(gen() % (static_cast<std::uint64_t>(e - s) + 1));
    } else {
      ip = static_cast<std::uint32_t>(gen());
    }
    const GeoIpBlockRow* oracle = nullptr;
    for (const auto& r : rows) {
      if (ip >= r.cidr.first() && ip <= r.cidr.last()) oracle = &r;
    }
    const auto got = lookup(index, Ipv4Address{ip});
    bool same;
    if (!oracle || oracle->postal_code.empty()) {
      same = !got;
    } else {
      same = got && got->zip == oracle->postal_code && got->point &&
             got->point->lat == *oracle->latitude && got->point->lon == *oracle->longitude;
      ++hits;
    }
    agree += same ? 1 : 0;
  }
  return {agree == kLookups, fmt("%d / %d lookups match the linear scan (%d assigned)", agree, kLookups, hits)};
}

Outcome ols_correctness() {
  std::mt19937_64 gen(5150);
  std::normal_distribution<double> z(0, 1);
  int match = 0;
  double worst = 0;
  for (int d = 0; d < 50; ++d) {
    const int n = 10 + static_cast<int>(gen() % 40), k = 2 + static_cast<int>(gen() % 4);
    Eigen::MatrixXd x(n, k);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = 1;
      for (int j = 1; j < k; ++j) x(i, j) = z(gen);
      y(i) = 1 + x.row(i).sum() + z(gen);
    }
    std::vector<std::string> names(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) names[static_cast<std::size_t>(j)] = fmt("x%d", j);
    const OlsFit fit = ols_fit(x, y, names);
    // normal equations by Cholesky of X'X
    const Eigen::MatrixXd xtx = x.transpose() * x;
    const Eigen::LLT<Eigen::MatrixXd> llt(xtx);
    const Eigen::VectorXd beta = llt.solve(x.transpose() * y);
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(k, k));
    const double s2 = (y - x * beta).squaredNorm() / (n - k);
    bool ok = true;
    for (int j = 0; j < k; ++j) {
      const auto& c = fit.coefficients[static_cast<std::size_t>(j)];
      const double se = std::sqrt(s2 * inv(j, j));
      const double e1 = std::fabs(c.coef - beta(j)) / std::max(1.0, std::fabs(beta(j)));
      const double e2 = std::fabs(c.std_err - se) / std::max(1.0, se);
      worst = std::max({worst, e1, e2});
      ok = ok && e1 <= 1e-10 && e2 <= 1e-10;
    }
    match += ok ? 1 : 0;
  }
  int covered = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> e(0, 1);
    constexpr int n = 40;
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = 1;
      x(i, 1) = e(g);
      y(i) = 0.5 + 0.7 * x(i, 1) + 1.5 * e(g);
    }
    const OlsFit fit = ols_fit(x, y, {"const", "slope"});
    const auto& s = fit["slope"];
    covered += (s.ci_low <= 0.7 && 0.7 <= s.ci_high) ? 1 : 0;
  }
  const double coverage = covered / 200.0;
  return {match == 50 && coverage >= 0.93,
          fmt("%d / 50 designs within 1e-10 (worst %.1e); 95%% CI coverage %.1f%% over 200 seeds", match,
              worst, 100 * coverage)};
}

Outcome factor_recovery() {
  std::mt19937_64 gen(606);
  std::normal_distribution<double> z(0, 1);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  constexpr int n = 200, p = 50;
  Eigen::VectorXd l(p);
  for (int j = 0; j < p; ++j) l(j) = u(gen);
  const double noise = 0.25 * std::sqrt(l.squaredNorm() / p);
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i) {
    const double f = z(gen);
    for (int j = 0; j < p; ++j) x(i, j) = 5 + l(j) * f + noise * z(gen);
  }
  const FactorSolution fs = principal_factors(x, 1);
  const Eigen::VectorXd est = fs.raw_loadings().col(0);
  const Eigen::ArrayXd a = est.array() - est.mean(), b = l.array() - l.mean();
  const double r = (a * b).sum() / std::sqrt((a * a).sum() * (b * b).sum());
  const double l1 = fs.eigenvalues(0), l2 = fs.eigenvalues(1);
  return {std::fabs(r) >= 0.99 && l1 >= 5 * l2,
          fmt("|corr(loadings)| = %.4f (>= 0.99), lambda1 = %.3f, lambda2 = %.3f (ratio %.1f, >= 5)",
              std::fabs(r), l1, l2, l1 / l2)};
}

AuditInputs inputs_for(const SynthWorld& w, const SynthUsers& u) {
  AuditInputs in;
  in.users = u.users;
  in.index = build_index(w.geoip_rows);
  in.polygons = w.polygons;
  in.dci = composite_dci(w.dci_rows);
  attach_density(in.dci, in.polygons);
  return in;
}

Outcome planted_bias() {
  constexpr double kGamma = 0.0022;
  int good = 0;
  std::string coefs;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SynthConfig c;
    c.rows = c.cols = 30;
    c.n_users = 50000;
    c.error_dci_gamma = kGamma;
    c.seed = seed;
    const SynthWorld w = generate_world(c);
    const SynthUsers u = generate_users(w);
    const AuditRun run = compute_audits(inputs_for(w, u));
    const auto data = prepare_regression_vars(run.audits, RegressionModel::boundary_nonzero);
    const OlsFit fit = ols_fit(data.x, data.y, {"const", "dci", "population", "ln_area"});
    const double b = fit["dci"].coef;
    if (b > 0 && std::fabs(b - kGamma) <= 0.5 * kGamma) ++good;
    coefs += fmt(seed == 1 ? "%.5f" : " %.5f", b);
  }
  return {good >= 19, fmt("%d / 20 seeds recover 0.0022 within 50%% (>= 19); coefs %s", good, coefs.c_str())};
}

GapComparison gap_for(const SynthConfig& c) {
  const SynthWorld w = generate_world(c);
  const SynthUsers u = generate_users(w);
  const AuditInputs in = inputs_for(w, u);
  const AuditRun run = compute_audits(in);
  std::map<ZipCode, std::size_t> gt, mm;
  for (const auto& a : run.audits) {
    ++gt[a.gt_zip];
    ++mm[a.mm_zip];
  }
  return per_capita_by_tier(gt, mm, in.dci).gap;
}

Outcome gap_direction() {
  SynthConfig biased;
  biased.n_users = 100000;
  biased.usage_beta = 0.02;
  biased.snap_prosperity_weight = 0.01;
  biased.seed = 11;
  const GapComparison g = gap_for(biased);

  SynthConfig null_cfg;
  null_cfg.n_users = 200000;
  null_cfg.seed = 12;
  const GapComparison h = gap_for(null_cfg);

  const bool ok = g.ratio_change && *g.ratio_change > 0 && h.ratio_change && std::fabs(*h.ratio_change) <= 0.05;
  return {ok, fmt("snap 0.01: ratio change %+.3f (gt %.3f, mm %.3f), difference change %+.3f; "
                  "null: ratio change %+.4f (want within 0.05)",
                  g.ratio_change.value_or(NAN), g.gt_ratio.value_or(NAN), g.mm_ratio.value_or(NAN),
                  g.difference_change.value_or(NAN), h.ratio_change.value_or(NAN))};
}

Outcome table_shape() {
  const fs::path dir = scratch("shape");
  const std::string cfg = (dir / "cfg.json").string();
  std::ofstream(cfg) << R"({"n_users": 3000, "seed": 9})";
  if (run({"synth", "--config", cfg, "--out-dir", (dir / "in").string()}) != 0) return {false, "synth failed"};
  const std::string in = (dir / "in").string();
  if (run({"audit", "--users", in + "/users.csv", "--geoip", in + "/geoip_blocks.csv", "--polygons",
           in + "/zip_polygons.geojson", "--dci", in + "/dci_metrics.csv", "--out-dir",
           (dir / "audit").string()}) != 0) {
    return {false, "audit failed"};
  }
  const std::string text = slurp(dir / "audit" / "bin_summary.csv");
  const std::string header = text.substr(0, text.find('\n'));
  bool cols = true;
  for (const char* c : {"upper_bound", "pct_exact_match", "geo_mean_error", "geo_sd_error"}) {
    cols = cols && header.find(c) != std::string::npos;
  }

  auto user = [](double miles) {
    UserAudit a;
    a.exact_match = miles == 0.0;
    a.boundary_distance = miles / kApproxMilesPerDegree;
    a.centroid_distance = miles;
    a.gt_props.dci = 5.0;
    a.mm_props = a.gt_props;
    return a;
  };
  const std::vector<UserAudit> micro{user(0), user(0), user(1), user(100)};
  const auto rows = summarize_bins(micro, make_bin_edges({}, ZipProperty::dci, BinScheme::tiers),
                                   ErrorMetric::boundary);
  const auto& b = rows.front();
  const bool micro_ok = b.pct_exact_match && std::fabs(*b.pct_exact_match - 50.0) < 1e-9 && b.geo_mean_error &&
                        std::fabs(*b.geo_mean_error - 10.0) < 1e-9 && b.geo_sd_error &&
                        std::fabs(*b.geo_sd_error - 25.99) < 0.05;
  return {cols && micro_ok,
          fmt("header [%s]; micro case %.1f%% / %.4f / %.3f (want 50 / 10.0 / ~25.99)", header.c_str(),
              b.pct_exact_match.value_or(NAN), b.geo_mean_error.value_or(NAN), b.geo_sd_error.value_or(NAN))};
}

std::map<std::string, std::string> data_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::string body = slurp(e.path());
    if (e.path().filename() == "manifest.json") {
      auto j = nlohmann::json::parse(body);
      j.erase("runtime");
      // paths differ between the two output roots
      j.erase("inputs");
      j.erase("flags");
      body = j.dump();
    }
    out[fs::relative(e.path(), root).string()] = body;
  }
  return out;
}

Outcome determinism() {
  const fs::path dir = scratch("determinism");
  const std::string cfg = (dir / "cfg.json").string();
  std::ofstream(cfg) << R"({"n_users": 20000, "seed": 2024, "grid": {"rows": 15, "cols": 15},
    "usage_beta": 0.02, "error_dci_gamma": 0.0022, "snap_prosperity_weight": 0.01})";
  const unsigned many = std::max(4u, std::thread::hardware_concurrency());
  std::vector<std::map<std::string, std::string>> runs;
  for (unsigned t : {1u, many, many}) {
    setenv("GEOBIAS_THREADS", std::to_string(t).c_str(), 1);
    const fs::path root = dir / fmt("t%u_%zu", t, runs.size());
    if (run({"synth", "--config", cfg, "--out-dir", (root / "in").string()}) != 0) return {false, "synth failed"};
    if (run({"pipeline", "--input-dir", (root / "in").string(), "--out-dir", (root / "out").string()}) != 0) {
      return {false, "pipeline failed"};
    }
    runs.push_back(data_files(root));
  }
  unsetenv("GEOBIAS_THREADS");
  std::size_t diff = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].size() != runs[0].size()) ++diff;
    for (const auto& [name, body] : runs[0]) {
      const auto it = runs[r].find(name);
      if (it == runs[r].end() || it->second != body) ++diff;
    }
  }
  return {diff == 0 && runs[0].size() > 30,
          fmt("%zu files compared across 1, %u, %u threads; %zu differ", runs[0].size(), many, many, diff)};
}

}  // namespace

int main() {
  criterion(1, 0.001, spearman_brown_check);
  criterion(2, 5, dci_uniformity);
  criterion(3, 30, geometry_oracle);
  criterion(4, 5, geolocation_index);
  criterion(5, 60, ols_correctness);
  criterion(6, 10, factor_recovery);
  criterion(7, 120, planted_bias);
  criterion(8, 120, gap_direction);
  criterion(9, 1, table_shape);
  criterion(10, 180, determinism);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
