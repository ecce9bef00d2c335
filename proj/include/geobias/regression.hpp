#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geobias/audit.hpp"

namespace geobias {

struct Coefficient {
  std::string name;
  double coef = 0.0;
  double std_err = 0.0;
  std::optional<double> t;  // absent for a degenerate fit
  std::optional<double> p;  // two-sided
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct OlsFit {
  std::vector<Coefficient> coefficients;
  std::size_t n = 0;
  std::size_t dof = 0;
  double rss = 0.0;
  double residual_variance = 0.0;
  double r_squared = 0.0;
  double ci_level = 0.95;
  // Zero residuals: std errors are reported as 0 and t / p are absent.
  bool degenerate_fit = false;
  Eigen::VectorXd residuals;

  const Coefficient& operator[](std::string_view name) const;
};

// Two-sided tail probability P(|T| > |t|) for Student's t.
double student_t_two_sided_p(double t, double dof);
double student_t_quantile(double prob, double dof);

// Column-pivoting Householder QR; (X'X)^-1 is recovered from R. X must
// already contain the constant column. Throws NumericalError when X is rank
// deficient and InputError when n <= k.
OlsFit ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
               const std::vector<std::string>& names, double ci_level = 0.95);

// ---------------------------------------------------------------------------
// Model specifications
// ---------------------------------------------------------------------------

enum class RegressionModel {
  boundary,
  boundary_nonzero,
  centroid,
  centroid_nonzero,
  match,
  gt_count,
  mm_count
};

std::string_view to_string(RegressionModel m);
std::optional<RegressionModel> parse_regression_model(std::string_view text);

enum class VariableScale { level, log };

struct DesignVariable {
  std::string name;
  VariableScale scale = VariableScale::level;
  std::string unit;  // "one DCI point", "1000 residents", "1% area"
};

struct RegressionData {
  RegressionModel model = RegressionModel::boundary;
  std::string target_name;
  VariableScale target_scale = VariableScale::level;
  bool target_indicator = false;  // 0/1 target, effects read as pct points
  // always const, dci, population (thousands), ln_area
  std::vector<DesignVariable> regressors;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::size_t dropped_rows = 0;
};

// Constant shift added before taking log of an error.
inline constexpr double kLogErrorShift = 0.1;

// User-level models take the ground-truth ZIP properties as regressors.
// Count models are dispatched to prepare_count_regression_vars. Throws
// InputError on a nonpositive area.
RegressionData prepare_regression_vars(std::span<const UserAudit> audits,
                                       RegressionModel model);
// Count models: one row per ZIP seen as either a ground-truth or a
// geolocated ZIP; the target is that ZIP's number of users under the model's
// source (zero when it only appears under the other one).
RegressionData prepare_count_regression_vars(std::span<const UserAudit> audits,
                                             RegressionModel model);

// Nested fits adding one regressor at a time (const+dci, +population, +ln_area).
std::vector<OlsFit> nested_fits(const RegressionData& data, double ci_level = 0.95);

struct Interpretation {
  std::string regressor;
  std::string kind;  // semi_elasticity, elasticity, level_effect
  double exact = 0.0;
  double approx = 0.0;
  std::string text;
};

// log target + level regressor: (e^b - 1) * 100 % per unit, approx b * 100 %.
// log target + log regressor: b % per 1 % change.
// level target + level regressor: b target units per unit (x100 as
// percentage points for an indicator target).
std::vector<Interpretation> semielasticity_report(const OlsFit& fit,
                                                  const RegressionData& data);

}  // namespace geobias
