#include <doctest.h>

#include <cmath>
#include <random>

#include "geobias/audit.hpp"
#include "geobias/errors.hpp"
#include "geobias/geolocate.hpp"
#include "geobias/pipeline.hpp"
#include "geobias/synth.hpp"

using namespace geobias;

namespace {

UserAudit with_error(double miles, double dci) {
  UserAudit a;
  a.exact_match = miles == 0.0;
  a.boundary_distance = miles / kApproxMilesPerDegree;
  a.centroid_distance = miles;
  a.gt_props.dci = dci;
  a.gt_props.tier = tier_of(dci);
  a.gt_props.sub_tier = sub_tier_of(dci);
  a.mm_props = a.gt_props;
  return a;
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

}  // namespace

TEST_SUITE("audit") {
  TEST_CASE("micro case: two exact, errors 1 and 100") {
    std::vector<UserAudit> v{with_error(0, 10), with_error(0, 10), with_error(1, 10),
                             with_error(100, 10)};
    const BinSpec spec = make_bin_edges({}, ZipProperty::dci, BinScheme::tiers);
    const auto rows = summarize_bins(v, spec, ErrorMetric::boundary);
    REQUIRE(rows.size() == 5);
    const auto& b = rows[0];
    CHECK(b.upper_bound == 20.0);
    CHECK(b.n_users == 4);
    CHECK(*b.pct_exact_match == doctest::Approx(50.0));
    CHECK(*b.geo_mean_error == doctest::Approx(10.0).epsilon(1e-12));
    // sample SD of {0, ln 100} is ln(100)/sqrt(2)
    CHECK(*b.geo_sd_error == doctest::Approx(std::pow(10.0, std::sqrt(2.0))).epsilon(1e-12));
    CHECK(std::fabs(*b.geo_sd_error - 25.99) < 0.05);
    CHECK_FALSE(rows[1].pct_exact_match.has_value());
  }

  TEST_CASE("bin summary ignores user order") {
    std::mt19937_64 gen(8);
    std::vector<UserAudit> v;
    for (int i = 0; i < 300; ++i) {
      v.push_back(with_error(static_cast<double>(gen() % 1000) / 7.0, static_cast<double>(gen() % 101)));
    }
    const BinSpec spec = make_bin_edges({}, ZipProperty::dci, BinScheme::sub_tiers);
    const auto a = summarize_bins(v, spec, ErrorMetric::centroid);
    std::shuffle(v.begin(), v.end(), gen);
    const auto b = summarize_bins(v, spec, ErrorMetric::centroid);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].geo_mean_error == b[i].geo_mean_error);
      CHECK(a[i].geo_sd_error == b[i].geo_sd_error);
    }
  }

  TEST_CASE("quantile edges") {
    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) v.push_back(i);
    const BinSpec q = make_bin_edges(v, ZipProperty::population, BinScheme::quintiles);
    REQUIRE(q.edges().size() == 4);
    CHECK(q.edges()[0] == doctest::Approx(20.8));
    CHECK(q.edges()[3] == doctest::Approx(80.2));
    CHECK(q.upper_bound(4) == 100.0);
    CHECK(q.bin_of(20.8) == 1);  // left closed
    CHECK(q.bin_of(20.7) == 0);
    CHECK(q.bin_of(1e9) == 4);
    std::vector<double> few{1, 2, 3};
    CHECK_THROWS_AS(make_bin_edges(few, ZipProperty::area, BinScheme::deciles), InputError);
    CHECK_THROWS_AS(make_bin_edges(v, ZipProperty::area, BinScheme::tiers), InputError);
  }

  TEST_CASE("transition rows normalize to one") {
    std::mt19937_64 gen(9);
    std::vector<UserAudit> v;
    for (int i = 0; i < 500; ++i) {
      UserAudit a = with_error(1.0, static_cast<double>(gen() % 101));
      a.mm_props.dci = static_cast<double>(gen() % 101);
      v.push_back(a);
    }
    const BinSpec spec = make_bin_edges({}, ZipProperty::dci, BinScheme::tiers);
    const auto counts = transition_matrix(v, spec, Normalization::none);
    const auto norm = transition_matrix(v, spec, Normalization::row);
    double total = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        s += norm.cells[i][j];
        total += counts.cells[i][j];
      }
      CHECK(s == doctest::Approx(1.0));
    }
    CHECK(total == 500.0);
  }

  TEST_CASE("zero-error world matches in every bin") {
    SynthConfig c;
    c.rows = 6;
    c.cols = 6;
    c.n_users = 3000;
    c.match_base = 1.0;
    c.seed = 4;
    const SynthWorld w = generate_world(c);
    const SynthUsers u = generate_users(w, 2);
    const AuditRun run = compute_audits(inputs_for(w, u), 2);
    REQUIRE(run.audits.size() > 2000);
    const auto schemes = parse_bins_flag("deciles");
    REQUIRE(schemes);
    for (auto [prop, scheme] : *schemes) {
      std::vector<double> vals;
      for (const auto& a : run.audits) vals.push_back(value_of(a.gt_props, prop));
      const BinSpec spec = make_bin_edges(vals, prop, scheme);
      for (const auto& b : summarize_bins(run.audits, spec, ErrorMetric::centroid)) {
        if (b.n_users) CHECK(*b.pct_exact_match == 100.0);
      }
    }
    const auto diffs = dci_difference_stats(run.audits);
    for (const auto& d : diffs) CHECK(d.rms_diff == 0.0);
  }

  TEST_CASE("boundary error is zero inside, positive outside") {
    const std::map<ZipCode, ZipPolygon> polys{
        {"10000", ZipPolygon("10000", {{rectangle_ring(0, 0, 1, 1), {}}}, {0.5, 0.5}, 10, 0)},
        {"10001", ZipPolygon("10001", {{rectangle_ring(0, 1, 1, 2), {}}}, {0.5, 1.5}, 10, 0)}};
    std::vector<DciInputRow> rows(2);
    rows[0].zip = "10000";
    rows[1].zip = "10001";
    rows[0].population = rows[1].population = 100;
    rows[1].poverty_rate = 0.5;
    const DciTable dci = composite_dci(rows);
    GroundTruth gt{"10000", GeoPoint{0.5, 0.25}, ReconcileRule::agree};
    const auto r = audit_user("u", gt, "10001", polys, dci);
    const auto& a = std::get<UserAudit>(r);
    CHECK_FALSE(a.exact_match);
    CHECK(*a.boundary_distance == doctest::Approx(0.75));
    CHECK(*error_of(a, ErrorMetric::boundary) == doctest::Approx(37.5));
    CHECK(*a.centroid_distance == doctest::Approx(haversine_miles({0.5, 0.5}, {0.5, 1.5})));
    CHECK(std::get<AuditExclusion>(audit_user("u", gt, "99999", polys, dci)) ==
          AuditExclusion::mm_zip_no_polygon);
    gt.zip = "99999";
    CHECK(std::get<AuditExclusion>(audit_user("u", gt, "10001", polys, dci)) ==
          AuditExclusion::gt_zip_no_polygon);
  }

  TEST_CASE("gap definitions") {
    const auto g = compare_gaps(130, 100, 120, 100);
    CHECK(*g.gt_ratio == doctest::Approx(1.3));
    CHECK(*g.ratio_change == doctest::Approx(1.3 / 1.2 - 1));
    CHECK(*g.difference_change == doctest::Approx(30.0 / 20.0 - 1));
    const auto z = compare_gaps(1, 0, 1, 1);
    CHECK_FALSE(z.gt_ratio.has_value());
    CHECK_FALSE(z.ratio_change.has_value());
  }

  TEST_CASE("per-capita rates by tier") {
    std::vector<DciInputRow> rows(10);
    for (int i = 0; i < 10; ++i) {
      rows[static_cast<std::size_t>(i)].zip = std::to_string(10000 + i);
      rows[static_cast<std::size_t>(i)].population = 1000;
      rows[static_cast<std::size_t>(i)].poverty_rate = 0.01 * i;
    }
    const DciTable dci = composite_dci(rows);
    std::map<ZipCode, std::size_t> gt{{"10000", 10}, {"10009", 1}}, mm{{"10000", 5}, {"10009", 5}};
    const auto report = per_capita_by_tier(gt, mm, dci);
    REQUIRE(report.tiers.size() == 5);
    CHECK(report.tiers[0].population == 2000);
    CHECK(report.tiers[0].gt_per_100k == doctest::Approx(500.0));
    CHECK(report.tiers[4].mm_per_100k == doctest::Approx(250.0));
    CHECK(*report.gap.gt_ratio == doctest::Approx(10.0));
    CHECK(*report.gap.mm_ratio == doctest::Approx(1.0));
    CHECK_THROWS_AS(per_capita_by_tier({{"99999", 1}}, {}, dci), InputError);
  }
}
