#include "geobias/audit.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "geobias/errors.hpp"
#include "geobias/stats.hpp"

namespace geobias {

std::string_view to_string(ZipProperty p) {
  switch (p) {
    case ZipProperty::population: return "population";
    case ZipProperty::area: return "area";
    case ZipProperty::density: return "density";
    case ZipProperty::dci: return "dci";
  }
  return "?";
}

std::string_view to_string(BinScheme s) {
  switch (s) {
    case BinScheme::deciles: return "deciles";
    case BinScheme::quintiles: return "quintiles";
    case BinScheme::tiers: return "tiers";
    case BinScheme::sub_tiers: return "sub_tiers";
  }
  return "?";
}

std::string_view to_string(ErrorMetric m) {
  return m == ErrorMetric::boundary ? "boundary" : "centroid";
}

std::string_view to_string(AuditExclusion e) {
  switch (e) {
    case AuditExclusion::gt_zip_no_polygon: return "gt_zip_no_polygon";
    case AuditExclusion::gt_zip_no_dci: return "gt_zip_no_dci";
    case AuditExclusion::mm_zip_no_polygon: return "mm_zip_no_polygon";
    case AuditExclusion::mm_zip_no_dci: return "mm_zip_no_dci";
  }
  return "?";
}

double value_of(const ZipProps& props, ZipProperty property) {
  switch (property) {
    case ZipProperty::population: return static_cast<double>(props.population);
    case ZipProperty::area: return props.total_area;
    case ZipProperty::density: return props.density;
    case ZipProperty::dci: return props.dci;
  }
  return 0.0;
}

std::optional<double> error_of(const UserAudit& audit, ErrorMetric metric) {
  if (metric == ErrorMetric::boundary) {
    if (!audit.boundary_distance) return std::nullopt;
    return degrees_to_approx_miles(*audit.boundary_distance);
  }
  return audit.centroid_distance;
}

// ---------------------------------------------------------------------------
// per-user
// ---------------------------------------------------------------------------

namespace {

ZipProps props_for(const ZipPolygon& poly, const DciScore& score) {
  ZipProps p;
  p.dci = score.dci;
  p.tier = score.tier;
  p.sub_tier = score.sub_tier;
  p.population = score.population;
  p.total_area = poly.total_area();
  p.density = density_of(score.population, poly);
  return p;
}

}  // namespace

AuditResult audit_user(std::string user_id, const GroundTruth& gt,
                       const ZipCode& mm_zip,
                       const std::map<ZipCode, ZipPolygon>& polygons,
                       const DciTable& dci_scores) {
  const auto gt_poly = polygons.find(gt.zip);
  if (gt_poly == polygons.end()) return AuditExclusion::gt_zip_no_polygon;
  const auto gt_score = dci_scores.find(gt.zip);
  if (gt_score == dci_scores.end()) return AuditExclusion::gt_zip_no_dci;
  const auto mm_poly = polygons.find(mm_zip);
  if (mm_poly == polygons.end()) return AuditExclusion::mm_zip_no_polygon;
  const auto mm_score = dci_scores.find(mm_zip);
  if (mm_score == dci_scores.end()) return AuditExclusion::mm_zip_no_dci;

  UserAudit a;
  a.user_id = std::move(user_id);
  a.gt_zip = gt.zip;
  a.mm_zip = mm_zip;
  a.rule = gt.rule;
  a.exact_match = gt.zip == mm_zip;
  a.gt_props = props_for(gt_poly->second, gt_score->second);
  a.mm_props = props_for(mm_poly->second, mm_score->second);
  if (gt.coords) {
    a.coords_outside_gt_zip = !point_in_polygon(*gt.coords, gt_poly->second);
  }
  if (a.exact_match) {
    a.boundary_distance = 0.0;
    a.centroid_distance = 0.0;
  } else {
    if (gt.coords) {
      a.boundary_distance = boundary_distance_degrees(*gt.coords, mm_poly->second);
    }
    a.centroid_distance = haversine_miles(gt_poly->second.internal_point(),
                                          mm_poly->second.internal_point());
  }
  return a;
}

// ---------------------------------------------------------------------------
// bins
// ---------------------------------------------------------------------------

BinSpec::BinSpec(ZipProperty property, BinScheme scheme, std::vector<double> edges,
                 double top)
    : property_(property), scheme_(scheme), edges_(std::move(edges)), top_(top) {
  for (std::size_t i = 1; i < edges_.size(); ++i) {
    if (!(edges_[i - 1] < edges_[i])) {
      throw InputError("bin edges must be strictly ascending");
    }
  }
  if ((scheme_ == BinScheme::tiers || scheme_ == BinScheme::sub_tiers) &&
      property_ != ZipProperty::dci) {
    throw InputError("tier schemes apply only to DCI");
  }
}

std::size_t BinSpec::bin_of(double value) const {
  // left-closed: value == edge belongs to the upper bin
  return static_cast<std::size_t>(
      std::upper_bound(edges_.begin(), edges_.end(), value) - edges_.begin());
}

double BinSpec::upper_bound(std::size_t bin) const {
  return bin < edges_.size() ? edges_[bin] : top_;
}

BinSpec make_bin_edges(std::span<const double> values, ZipProperty property,
                       BinScheme scheme) {
  if (scheme == BinScheme::tiers) {
    return BinSpec(property, scheme, {20.0, 40.0, 60.0, 80.0}, 100.0);
  }
  if (scheme == BinScheme::sub_tiers) {
    return BinSpec(property, scheme,
                   {10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0}, 100.0);
  }
  const int bins = scheme == BinScheme::deciles ? 10 : 5;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = static_cast<int>(
      std::set<double>(sorted.begin(), sorted.end()).size());
  if (distinct < bins) {
    throw InputError("need at least " + std::to_string(bins) + " distinct " +
                     std::string(to_string(property)) + " values for " +
                     std::string(to_string(scheme)) + ", got " +
                     std::to_string(distinct));
  }
  std::vector<double> edges;
  for (int i = 1; i < bins; ++i) {
    const double q = stats::quantile_sorted(sorted, static_cast<double>(i) / bins);
    if (edges.empty() || q > edges.back()) edges.push_back(q);
  }
  return BinSpec(property, scheme, std::move(edges), sorted.back());
}

namespace {

// Errors grouped by ground-truth bin, each group sorted ascending so sums are
// independent of user order.
struct BinnedErrors {
  std::vector<std::vector<double>> errors;
  std::vector<std::size_t> exact;
  std::size_t skipped = 0;
};

BinnedErrors bin_errors(std::span<const UserAudit> audits, const BinSpec& spec,
                        ErrorMetric metric) {
  BinnedErrors b;
  b.errors.resize(spec.bin_count());
  b.exact.assign(spec.bin_count(), 0);
  for (const auto& a : audits) {
    const auto e = error_of(a, metric);
    if (!e) {
      ++b.skipped;
      continue;
    }
    const std::size_t bin = spec.bin_of(value_of(a.gt_props, spec.property()));
    b.errors[bin].push_back(*e);
    if (a.exact_match) ++b.exact[bin];
  }
  for (auto& v : b.errors) std::sort(v.begin(), v.end());
  return b;
}

}  // namespace

std::vector<BinSummary> summarize_bins(std::span<const UserAudit> audits,
                                       const BinSpec& spec, ErrorMetric metric,
                                       std::size_t* skipped) {
  const BinnedErrors binned = bin_errors(audits, spec, metric);
  if (skipped) *skipped = binned.skipped;
  std::vector<BinSummary> out;
  for (std::size_t bin = 0; bin < spec.bin_count(); ++bin) {
    const auto& errs = binned.errors[bin];
    BinSummary s;
    s.bin = bin;
    s.upper_bound = spec.upper_bound(bin);
    s.n_users = errs.size();
    if (!errs.empty()) {
      s.pct_exact_match =
          100.0 * static_cast<double>(binned.exact[bin]) / static_cast<double>(errs.size());
    }
    std::vector<double> logs;
    for (double e : errs) {
      if (e > 0.0) logs.push_back(std::log(e));
    }
    s.n_positive_errors = logs.size();
    if (!logs.empty()) s.geo_mean_error = std::exp(stats::mean(logs));
    if (logs.size() >= 2) {
      s.geo_sd_error = std::exp(std::sqrt(stats::sample_variance(logs)));
    }
    out.push_back(s);
  }
  return out;
}

std::vector<double> default_quantile_probs() {
  return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
}

std::vector<QuantileRow> error_quantiles(std::span<const UserAudit> audits,
                                         const BinSpec& spec, ErrorMetric metric,
                                         std::span<const double> probs) {
  const BinnedErrors binned = bin_errors(audits, spec, metric);
  std::vector<QuantileRow> out;
  for (std::size_t bin = 0; bin < spec.bin_count(); ++bin) {
    const auto& errs = binned.errors[bin];
    if (errs.empty()) continue;
    QuantileRow row;
    row.bin = bin;
    row.upper_bound = spec.upper_bound(bin);
    row.n_users = errs.size();
    for (double p : probs) row.values.push_back(stats::quantile_sorted(errs, p));
    out.push_back(std::move(row));
  }
  return out;
}

TransitionMatrix transition_matrix(std::span<const UserAudit> audits,
                                   const BinSpec& spec, Normalization normalization) {
  const std::size_t k = spec.bin_count();
  TransitionMatrix m{spec.property(), spec.scheme(), {},
                     std::vector<std::vector<double>>(k, std::vector<double>(k, 0.0))};
  for (std::size_t i = 0; i < k; ++i) m.upper_bounds.push_back(spec.upper_bound(i));
  for (const auto& a : audits) {
    const std::size_t i = spec.bin_of(value_of(a.gt_props, spec.property()));
    const std::size_t j = spec.bin_of(value_of(a.mm_props, spec.property()));
    m.cells[i][j] += 1.0;
  }
  if (normalization == Normalization::row) {
    for (auto& row : m.cells) {
      double total = 0.0;
      for (double c : row) total += c;
      if (total > 0.0) {
        for (double& c : row) c /= total;
      }
    }
  }
  return m;
}

std::vector<DciDifferenceRow> dci_difference_stats(std::span<const UserAudit> audits) {
  std::vector<std::vector<double>> deltas(kTierCount);
  for (const auto& a : audits) {
    deltas[static_cast<std::size_t>(a.gt_props.tier)].push_back(a.mm_props.dci -
                                                               a.gt_props.dci);
  }
  std::vector<DciDifferenceRow> out;
  for (int t = 0; t < kTierCount; ++t) {
    auto& d = deltas[static_cast<std::size_t>(t)];
    if (d.empty()) continue;
    std::sort(d.begin(), d.end());
    std::vector<double> abs_d;
    double sq = 0.0;
    for (double v : d) {
      abs_d.push_back(std::fabs(v));
    }
    std::sort(abs_d.begin(), abs_d.end());
    for (double v : abs_d) sq += v * v;
    DciDifferenceRow row;
    row.tier = static_cast<Tier>(t);
    row.n_users = d.size();
    row.median_abs_diff = stats::quantile_sorted(abs_d, 0.5);
    row.rms_diff = std::sqrt(sq / static_cast<double>(d.size()));
    out.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// per-capita
// ---------------------------------------------------------------------------

GapComparison compare_gaps(double gt_prosperous, double gt_distressed,
                           double mm_prosperous, double mm_distressed) {
  GapComparison g;
  if (gt_distressed > 0.0) g.gt_ratio = gt_prosperous / gt_distressed;
  if (mm_distressed > 0.0) g.mm_ratio = mm_prosperous / mm_distressed;
  if (g.gt_ratio && g.mm_ratio && *g.mm_ratio > 0.0) {
    g.ratio_change = *g.gt_ratio / *g.mm_ratio - 1.0;
  }
  g.gt_difference = gt_prosperous - gt_distressed;
  g.mm_difference = mm_prosperous - mm_distressed;
  if (*g.mm_difference != 0.0) {
    g.difference_change = *g.gt_difference / *g.mm_difference - 1.0;
  }
  return g;
}

PerCapitaReport per_capita_by_tier(const std::map<ZipCode, std::size_t>& gt_counts,
                                   const std::map<ZipCode, std::size_t>& mm_counts,
                                   const DciTable& dci_scores) {
  std::vector<LevelRate> tiers(kTierCount);
  std::vector<LevelRate> subs(10);
  for (int i = 0; i < kTierCount; ++i) tiers[static_cast<std::size_t>(i)].level = i;
  for (int i = 0; i < 10; ++i) subs[static_cast<std::size_t>(i)].level = i + 1;

  // population sums in ZIP order
  for (const auto& [zip, score] : dci_scores) {
    tiers[static_cast<std::size_t>(score.tier)].population +=
        static_cast<double>(score.population);
    subs[static_cast<std::size_t>(score.sub_tier - 1)].population +=
        static_cast<double>(score.population);
  }
  auto add_counts = [&](const std::map<ZipCode, std::size_t>& counts, bool gt) {
    for (const auto& [zip, n] : counts) {
      const auto it = dci_scores.find(zip);
      if (it == dci_scores.end()) {
        throw InputError("per-capita counts reference ZIP " + zip +
                         " without a DCI score");
      }
      auto& t = tiers[static_cast<std::size_t>(it->second.tier)];
      auto& s = subs[static_cast<std::size_t>(it->second.sub_tier - 1)];
      (gt ? t.gt_users : t.mm_users) += n;
      (gt ? s.gt_users : s.mm_users) += n;
    }
  };
  add_counts(gt_counts, true);
  add_counts(mm_counts, false);

  auto rates = [](LevelRate& r) {
    r.gt_per_100k = 100000.0 * static_cast<double>(r.gt_users) / r.population;
    r.mm_per_100k = 100000.0 * static_cast<double>(r.mm_users) / r.population;
  };
  PerCapitaReport report;
  for (auto& t : tiers) {
    if (!(t.population > 0.0)) {
      throw NumericalError("tier " + std::string(to_string(static_cast<Tier>(t.level))) +
                           " has zero population");
    }
    rates(t);
  }
  // sub-tiers may legitimately be empty on small tables
  for (auto& s : subs) {
    if (s.population > 0.0) {
      rates(s);
      report.sub_tiers.push_back(s);
    }
  }
  report.tiers = tiers;
  report.gap = compare_gaps(tiers.front().gt_per_100k, tiers.back().gt_per_100k,
                            tiers.front().mm_per_100k, tiers.back().mm_per_100k);
  return report;
}

}  // namespace geobias
