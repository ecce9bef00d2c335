#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "geobias/dci.hpp"
#include "geobias/geometry.hpp"
#include "geobias/reconcile.hpp"

namespace geobias {

enum class ZipProperty { population, area, density, dci };
enum class BinScheme { deciles, quintiles, tiers, sub_tiers };
enum class ErrorMetric { boundary, centroid };

std::string_view to_string(ZipProperty p);
std::string_view to_string(BinScheme s);
std::string_view to_string(ErrorMetric m);

struct ZipProps {
  double dci = 0.0;
  Tier tier = Tier::Prosperous;
  int sub_tier = 1;
  long long population = 0;
  double total_area = 0.0;  // sq mi
  double density = 0.0;     // people per sq mi
};

double value_of(const ZipProps& props, ZipProperty property);

struct UserAudit {
  std::string user_id;
  ZipCode gt_zip;
  ZipCode mm_zip;
  ReconcileRule rule = ReconcileRule::agree;
  bool exact_match = false;
  std::optional<double> boundary_distance;  // degrees
  std::optional<double> centroid_distance;  // miles
  ZipProps gt_props;
  ZipProps mm_props;
  // Ground-truth coordinates fall outside the ground-truth ZIP's polygon
  // (possible under the parsed/geocode disagreement rule).
  bool coords_outside_gt_zip = false;
};

// Error in display units: approximate miles (degrees x 50) for boundary
// distance, great-circle miles for centroid distance.
std::optional<double> error_of(const UserAudit& audit, ErrorMetric metric);

enum class AuditExclusion {
  gt_zip_no_polygon,
  gt_zip_no_dci,
  mm_zip_no_polygon,
  mm_zip_no_dci
};
std::string_view to_string(AuditExclusion e);

using AuditResult = std::variant<UserAudit, AuditExclusion>;

AuditResult audit_user(std::string user_id, const GroundTruth& gt,
                       const ZipCode& mm_zip,
                       const std::map<ZipCode, ZipPolygon>& polygons,
                       const DciTable& dci_scores);

// Level boundaries for one ZIP property. Bin i covers
// [edges[i-1], edges[i]) with open ends at both sides; the last bin is
// labelled with `top`.
class BinSpec {
 public:
  BinSpec(ZipProperty property, BinScheme scheme, std::vector<double> edges,
          double top);

  ZipProperty property() const { return property_; }
  BinScheme scheme() const { return scheme_; }
  const std::vector<double>& edges() const { return edges_; }
  std::size_t bin_count() const { return edges_.size() + 1; }
  std::size_t bin_of(double value) const;
  // Upper end of bin i, used as its label.
  double upper_bound(std::size_t bin) const;

 private:
  ZipProperty property_;
  BinScheme scheme_;
  std::vector<double> edges_;
  double top_;
};

// Deciles / quintiles: interior edges at the 10%..90% (20%..80%) type-7
// quantiles of `values`; requires 10 (5) distinct values. Coinciding
// quantiles collapse into a single edge. Tiers / sub-tiers: fixed DCI edges,
// valid only for ZipProperty::dci; `values` are ignored.
BinSpec make_bin_edges(std::span<const double> values, ZipProperty property,
                       BinScheme scheme);

struct BinSummary {
  std::size_t bin = 0;
  double upper_bound = 0.0;
  std::size_t n_users = 0;
  std::optional<double> pct_exact_match;  // absent for an empty bin
  std::size_t n_positive_errors = 0;
  std::optional<double> geo_mean_error;  // exp(mean ln e) over e > 0
  std::optional<double> geo_sd_error;    // exp(sample sd ln e), needs 2 errors
};

// Users are binned by their ground-truth ZIP property. Users without a
// defined error for `metric` are skipped and counted in `skipped`.
std::vector<BinSummary> summarize_bins(std::span<const UserAudit> audits,
                                       const BinSpec& spec, ErrorMetric metric,
                                       std::size_t* skipped = nullptr);

struct QuantileRow {
  std::size_t bin = 0;
  double upper_bound = 0.0;
  std::size_t n_users = 0;
  std::vector<double> values;  // one per requested probability
};

std::vector<double> default_quantile_probs();

// Empty bins produce no row.
std::vector<QuantileRow> error_quantiles(std::span<const UserAudit> audits,
                                         const BinSpec& spec, ErrorMetric metric,
                                         std::span<const double> probs);

enum class Normalization { none, row };

struct TransitionMatrix {
  ZipProperty property;
  BinScheme scheme;
  std::vector<double> upper_bounds;
  // cells[i][j]: users with ground-truth level i and geolocated level j.
  std::vector<std::vector<double>> cells;
};

TransitionMatrix transition_matrix(std::span<const UserAudit> audits,
                                   const BinSpec& spec, Normalization normalization);

struct DciDifferenceRow {
  Tier tier = Tier::Prosperous;
  std::size_t n_users = 0;
  double median_abs_diff = 0.0;
  double rms_diff = 0.0;
};

// Delta = mm_dci - gt_dci grouped by ground-truth tier; tiers without users
// are omitted.
std::vector<DciDifferenceRow> dci_difference_stats(std::span<const UserAudit> audits);

struct LevelRate {
  int level = 0;  // tier index 0..4 or sub-tier 1..10
  double population = 0.0;
  std::size_t gt_users = 0;
  std::size_t mm_users = 0;
  double gt_per_100k = 0.0;
  double mm_per_100k = 0.0;
};

// Prosperous vs Distressed gap under two definitions. ratio: P / D.
// difference: P - D. change = gap_gt / gap_mm - 1. Fields are absent when a
// denominator is zero.
struct GapComparison {
  std::optional<double> gt_ratio, mm_ratio, ratio_change;
  std::optional<double> gt_difference, mm_difference, difference_change;
};

struct PerCapitaReport {
  std::vector<LevelRate> tiers;
  std::vector<LevelRate> sub_tiers;
  GapComparison gap;
};

// Users per 100,000 residents of each tier / sub-tier, where population sums
// over every ZIP of that level in `dci_scores`. Throws InputError when a
// counted ZIP has no DCI score and NumericalError when a level has zero
// population.
PerCapitaReport per_capita_by_tier(const std::map<ZipCode, std::size_t>& gt_counts,
                                   const std::map<ZipCode, std::size_t>& mm_counts,
                                   const DciTable& dci_scores);

GapComparison compare_gaps(double gt_prosperous, double gt_distressed,
                           double mm_prosperous, double mm_distressed);

}  // namespace geobias
