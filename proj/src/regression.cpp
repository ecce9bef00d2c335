#include "geobias/regression.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <map>

#include "geobias/errors.hpp"

namespace geobias {

const Coefficient& OlsFit::operator[](std::string_view name) const {
  for (const auto& c : coefficients) {
    if (c.name == name) return c;
  }
  throw InputError("no coefficient named '" + std::string(name) + "'");
}

double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) throw NumericalError("Student t needs positive dof");
  if (!std::isfinite(t)) return 0.0;
  const boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

double student_t_quantile(double prob, double dof) {
  if (!(dof > 0.0)) throw NumericalError("Student t needs positive dof");
  const boost::math::students_t dist(dof);
  return boost::math::quantile(dist, prob);
}

OlsFit ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
               const std::vector<std::string>& names, double ci_level) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = x.cols();
  if (y.size() != n) throw InputError("ols_fit: X and y row counts differ");
  if (static_cast<Eigen::Index>(names.size()) != k) {
    throw InputError("ols_fit: one name per design column required");
  }
  if (n <= k) throw InputError("ols_fit: need more rows than columns");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw InputError("ols_fit: bad CI level");

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < k) throw NumericalError("ols_fit: design matrix is rank deficient");

  OlsFit fit;
  fit.n = static_cast<std::size_t>(n);
  fit.dof = static_cast<std::size_t>(n - k);
  fit.ci_level = ci_level;
  const Eigen::VectorXd beta = qr.solve(y);
  fit.residuals = y - x * beta;
  fit.rss = fit.residuals.squaredNorm();
  fit.residual_variance = fit.rss / static_cast<double>(fit.dof);
  const double tss = (y.array() - y.mean()).square().sum();
  fit.r_squared = tss > 0.0 ? 1.0 - fit.rss / tss : 0.0;
  fit.degenerate_fit = fit.rss <= 1e-26 * y.squaredNorm();

  // X P = Q R  =>  (X'X)^-1 = P R^-1 R^-T P'
  const Eigen::MatrixXd r =
      qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd xtx_inv_perm = r_inv * r_inv.transpose();
  const auto& perm = qr.colsPermutation();
  const Eigen::MatrixXd xtx_inv = perm * xtx_inv_perm * perm.transpose();

  const double t_crit = student_t_quantile(1.0 - (1.0 - ci_level) / 2.0,
                                           static_cast<double>(fit.dof));
  for (Eigen::Index j = 0; j < k; ++j) {
    Coefficient c;
    c.name = names[static_cast<std::size_t>(j)];
    c.coef = beta(j);
    if (fit.degenerate_fit) {
      c.std_err = 0.0;
      c.ci_low = c.ci_high = c.coef;
    } else {
      c.std_err = std::sqrt(fit.residual_variance * xtx_inv(j, j));
      c.t = c.coef / c.std_err;
      c.p = student_t_two_sided_p(*c.t, static_cast<double>(fit.dof));
      c.ci_low = c.coef - t_crit * c.std_err;
      c.ci_high = c.coef + t_crit * c.std_err;
    }
    fit.coefficients.push_back(std::move(c));
  }
  return fit;
}

// ---------------------------------------------------------------------------
// model variables
// ---------------------------------------------------------------------------

std::string_view to_string(RegressionModel m) {
  switch (m) {
    case RegressionModel::boundary: return "boundary";
    case RegressionModel::boundary_nonzero: return "boundary-nonzero";
    case RegressionModel::centroid: return "centroid";
    case RegressionModel::centroid_nonzero: return "centroid-nonzero";
    case RegressionModel::match: return "match";
    case RegressionModel::gt_count: return "gt-count";
    case RegressionModel::mm_count: return "mm-count";
  }
  return "?";
}

std::optional<RegressionModel> parse_regression_model(std::string_view text) {
  for (auto m : {RegressionModel::boundary, RegressionModel::boundary_nonzero,
                 RegressionModel::centroid, RegressionModel::centroid_nonzero,
                 RegressionModel::match, RegressionModel::gt_count,
                 RegressionModel::mm_count}) {
    if (text == to_string(m)) return m;
  }
  return std::nullopt;
}

namespace {

std::vector<DesignVariable> standard_regressors() {
  return {{"const", VariableScale::level, ""},
          {"dci", VariableScale::level, "one DCI point"},
          {"population", VariableScale::level, "1000 residents"},
          {"ln_area", VariableScale::log, "1% area"}};
}

void regressor_row(const ZipProps& props, std::vector<double>& row) {
  if (!(props.total_area > 0.0)) {
    throw InputError("regression: nonpositive ZIP area");
  }
  row.push_back(1.0);
  row.push_back(props.dci);
  row.push_back(static_cast<double>(props.population) / 1000.0);
  row.push_back(std::log(props.total_area));
}

RegressionData assemble(RegressionModel model, std::vector<std::vector<double>> rows,
                        std::vector<double> targets) {
  RegressionData d;
  d.model = model;
  d.regressors = standard_regressors();
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto k = static_cast<Eigen::Index>(d.regressors.size());
  d.x.resize(n, k);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      d.x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    d.y(i) = targets[static_cast<std::size_t>(i)];
  }
  return d;
}

}  // namespace

RegressionData prepare_regression_vars(std::span<const UserAudit> audits,
                                       RegressionModel model) {
  if (model == RegressionModel::gt_count || model == RegressionModel::mm_count) {
    return prepare_count_regression_vars(audits, model);
  }
  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  std::size_t dropped = 0;
  const bool nonzero = model == RegressionModel::boundary_nonzero ||
                       model == RegressionModel::centroid_nonzero;
  const ErrorMetric metric = (model == RegressionModel::boundary ||
                              model == RegressionModel::boundary_nonzero)
                                 ? ErrorMetric::boundary
                                 : ErrorMetric::centroid;
  for (const auto& a : audits) {
    double target = 0.0;
    if (model == RegressionModel::match) {
      target = a.exact_match ? 1.0 : 0.0;
    } else {
      const auto e = error_of(a, metric);
      if (!e || (nonzero && *e == 0.0)) {
        ++dropped;
        continue;
      }
      target = std::log(*e + kLogErrorShift);
    }
    std::vector<double> row;
    regressor_row(a.gt_props, row);
    rows.push_back(std::move(row));
    targets.push_back(target);
  }
  RegressionData d = assemble(model, std::move(rows), std::move(targets));
  d.dropped_rows = dropped;
  if (model == RegressionModel::match) {
    d.target_name = "match";
    d.target_indicator = true;
  } else {
    d.target_name = std::string("ln_") + std::string(to_string(metric)) + "_error";
    d.target_scale = VariableScale::log;
  }
  return d;
}

RegressionData prepare_count_regression_vars(std::span<const UserAudit> audits,
                                             RegressionModel model) {
  if (model != RegressionModel::gt_count && model != RegressionModel::mm_count) {
    throw InputError("count regression needs gt-count or mm-count");
  }
  struct ZipRow {
    ZipProps props;
    std::size_t gt = 0;
    std::size_t mm = 0;
  };
  std::map<ZipCode, ZipRow> zips;
  for (const auto& a : audits) {
    auto& g = zips[a.gt_zip];
    g.props = a.gt_props;
    ++g.gt;
    auto& m = zips[a.mm_zip];
    m.props = a.mm_props;
    ++m.mm;
  }
  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  for (const auto& [zip, z] : zips) {
    std::vector<double> row;
    regressor_row(z.props, row);
    rows.push_back(std::move(row));
    targets.push_back(static_cast<double>(model == RegressionModel::gt_count ? z.gt : z.mm));
  }
  RegressionData d = assemble(model, std::move(rows), std::move(targets));
  d.target_name = model == RegressionModel::gt_count ? "gt_users" : "mm_users";
  return d;
}

std::vector<OlsFit> nested_fits(const RegressionData& data, double ci_level) {
  std::vector<OlsFit> fits;
  std::vector<std::string> names;
  for (const auto& v : data.regressors) names.push_back(v.name);
  for (Eigen::Index cols = 2; cols <= data.x.cols(); ++cols) {
    fits.push_back(ols_fit(data.x.leftCols(cols), data.y,
                           {names.begin(), names.begin() + cols}, ci_level));
  }
  return fits;
}

namespace {

std::string strip_log(const std::string& name) {
  return name.rfind("ln_", 0) == 0 ? name.substr(3) : name;
}

}  // namespace

std::vector<Interpretation> semielasticity_report(const OlsFit& fit,
                                                  const RegressionData& data) {
  std::vector<Interpretation> out;
  char buf[256];
  const std::string target =
      data.target_scale == VariableScale::log ? strip_log(data.target_name) : data.target_name;
  for (const auto& c : fit.coefficients) {
    if (c.name == "const") continue;
    const DesignVariable* var = nullptr;
    for (const auto& v : data.regressors) {
      if (v.name == c.name) var = &v;
    }
    if (!var) throw InputError("untagged regressor '" + c.name + "'");
    Interpretation it;
    it.regressor = c.name;
    const double b = c.coef;
    if (data.target_scale == VariableScale::log) {
      if (var->scale == VariableScale::level) {
        it.kind = "semi_elasticity";
        it.exact = std::expm1(b) * 100.0;
        it.approx = b * 100.0;
        std::snprintf(buf, sizeof buf,
                      "an increase of %s is associated with a %.4g%% change in %s "
                      "(small-coefficient approximation %.4g%%)",
                      var->unit.c_str(), it.exact, target.c_str(), it.approx);
      } else {
        it.kind = "elasticity";
        it.exact = (std::pow(1.01, b) - 1.0) * 100.0;
        it.approx = b;
        std::snprintf(buf, sizeof buf,
                      "a 1%% increase in %s is associated with a %.4g%% change in %s "
                      "(elasticity %.4g)",
                      strip_log(c.name).c_str(), it.exact, target.c_str(), it.approx);
      }
    } else {
      const double scale = data.target_indicator ? 100.0 : 1.0;
      const char* unit = data.target_indicator ? " percentage points" : "";
      it.kind = "level_effect";
      if (var->scale == VariableScale::level) {
        it.exact = b * scale;
        it.approx = it.exact;
        std::snprintf(buf, sizeof buf,
                      "an increase of %s is associated with a %.4g%s change in %s",
                      var->unit.c_str(), it.exact, unit, target.c_str());
      } else {
        it.exact = b * std::log(1.01) * scale;
        it.approx = b / 100.0 * scale;
        std::snprintf(buf, sizeof buf,
                      "a 1%% increase in %s is associated with a %.4g%s change in %s",
                      strip_log(c.name).c_str(), it.exact, unit, target.c_str());
      }
    }
    it.text = buf;
    out.push_back(std::move(it));
  }
  return out;
}

}  // namespace geobias
