#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geobias/dci.hpp"
#include "geobias/ingest.hpp"

namespace geobias {

enum class EngagementMetric { registrations, completions, certifications };
enum class EngagementTransform { raw, dichotomized, shifted_log };

std::string_view to_string(EngagementMetric m);
std::string_view to_string(EngagementTransform t);

// ZIP x course scores. Rows are ZIP codes (subjects), columns are courses
// (items); raw values are counts per million residents.
struct EngagementMatrix {
  std::vector<ZipCode> zips;
  std::vector<std::string> courses;
  Eigen::MatrixXd values;
  EngagementMetric metric = EngagementMetric::registrations;
  EngagementTransform transform = EngagementTransform::raw;
};

struct MatrixBuildReport {
  std::size_t staff_rows = 0;
  std::size_t no_zip_rows = 0;
  std::size_t zip_without_dci_rows = 0;
  std::size_t used_rows = 0;
};

// r_jk = 1e6 * count_jk / population_k over non-staff registrations whose ZIP
// has a DCI score. ZIPs without any registration are left out.
EngagementMatrix build_matrix(const std::vector<RegistrationRow>& registrations,
                              const DciTable& dci_scores, EngagementMetric metric,
                              MatrixBuildReport* report = nullptr);

// dichotomized: 1 if r > 0; shifted_log: ln(r + 1). Input must be raw.
EngagementMatrix transform(const EngagementMatrix& matrix, EngagementTransform kind);

// Needs p >= 2 items, n >= 2 subjects and positive total-score variance.
double cronbach_alpha(const Eigen::MatrixXd& scores);

// Reliability prophesied for a test of target_items items, from the
// per-item reliability implied by alpha at p_items items.
double spearman_brown(double alpha, double p_items, double target_items);

// Pearson r of each item with the total score (item included). Absent for
// zero-variance items.
std::vector<std::optional<double>> item_test_correlations(const Eigen::MatrixXd& scores);

struct FactorSolution {
  int n_factors = 0;
  std::vector<std::size_t> retained_items;  // column indices into the input
  std::vector<std::size_t> dropped_items;   // zero variance
  Eigen::VectorXd item_means;               // u_j, retained items
  Eigen::VectorXd item_sds;
  Eigen::MatrixXd loadings;  // retained items x factors, correlation metric
  Eigen::VectorXd communalities;
  Eigen::VectorXd uniqueness;  // 1 - communality, clamped to [0, 1]
  Eigen::MatrixXd scores;      // subjects x factors
  Eigen::VectorXd eigenvalues;  // reduced correlation matrix, descending
  bool smc_used = false;        // false: max |r| fallback for a singular matrix
  int iterations = 0;
  double variance_explained_first = 0.0;  // lambda_1 / sum |lambda|
  double variance_explained_first_over_items = 0.0;  // lambda_1 / p

  // Loadings rescaled to the items' own units (l_ij * sd_j).
  Eigen::MatrixXd raw_loadings() const;
};

// Principal-axis factoring. Initial communalities are squared multiple
// correlations (or max absolute off-diagonal correlation when the item
// correlation matrix is singular); `iterate` extra passes re-estimate them.
// Each factor is signed so its largest-magnitude loading is positive. Scores
// are the least-squares regression of standardized data on the loadings.
FactorSolution principal_factors(const Eigen::MatrixXd& scores, int n_factors,
                                 int iterate = 0);

// u_j + sd_j * sum_i l_ij s_ik in the items' own units.
Eigen::MatrixXd fitted_values(const FactorSolution& solution);

enum class SeriesTransform { identity, log, log_plus_1, log_plus_0_01 };
std::string_view to_string(SeriesTransform t);

struct Series {
  std::string name;
  std::vector<std::optional<double>> values;  // aligned across series
  SeriesTransform transform = SeriesTransform::identity;
};

struct CorrelationTable {
  std::vector<std::string> names;
  // absent where fewer than 3 complete pairs remain or a variance is zero
  std::vector<std::vector<std::optional<double>>> r;
  std::vector<std::vector<std::size_t>> n;
  double flag_threshold = 0.2;
  bool flagged(std::size_t i, std::size_t j) const;
};

// Pearson correlations after each series' transform, with pairwise deletion
// of absent or out-of-domain values.
CorrelationTable correlate(const std::vector<Series>& series);

// Single-pair form; throws InputError when fewer than 3 complete pairs remain.
double correlation(const std::vector<std::optional<double>>& x,
                   const std::vector<std::optional<double>>& y);

// ln(score + shift); default shift is 1 - min(score), so the minimum maps to 0.
struct ShiftedLog {
  double shift = 0.0;
  std::vector<double> values;
};
ShiftedLog shifted_log(const Eigen::VectorXd& scores, std::optional<double> shift);

}  // namespace geobias
