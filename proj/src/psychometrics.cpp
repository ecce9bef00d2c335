#include "geobias/psychometrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "geobias/errors.hpp"
#include "geobias/stats.hpp"

namespace geobias {

std::string_view to_string(EngagementMetric m) {
  switch (m) {
    case EngagementMetric::registrations: return "registrations";
    case EngagementMetric::completions: return "completions";
    case EngagementMetric::certifications: return "certifications";
  }
  return "?";
}

std::string_view to_string(EngagementTransform t) {
  switch (t) {
    case EngagementTransform::raw: return "raw";
    case EngagementTransform::dichotomized: return "dichotomized";
    case EngagementTransform::shifted_log: return "shifted_log";
  }
  return "?";
}

std::string_view to_string(SeriesTransform t) {
  switch (t) {
    case SeriesTransform::identity: return "identity";
    case SeriesTransform::log: return "log";
    case SeriesTransform::log_plus_1: return "log_plus_1";
    case SeriesTransform::log_plus_0_01: return "log_plus_0.01";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// matrix construction
// ---------------------------------------------------------------------------

EngagementMatrix build_matrix(const std::vector<RegistrationRow>& registrations,
                              const DciTable& dci_scores, EngagementMetric metric,
                              MatrixBuildReport* report) {
  MatrixBuildReport rep;
  std::set<ZipCode> zips;
  std::set<std::string> courses;
  std::map<std::pair<ZipCode, std::string>, double> counts;
  for (const auto& r : registrations) {
    if (r.is_staff) {
      ++rep.staff_rows;
      continue;
    }
    if (r.zip.empty()) {
      ++rep.no_zip_rows;
      continue;
    }
    if (!dci_scores.contains(r.zip)) {
      ++rep.zip_without_dci_rows;
      continue;
    }
    ++rep.used_rows;
    zips.insert(r.zip);
    courses.insert(r.course_id);
    const bool counted = metric == EngagementMetric::registrations ||
                         (metric == EngagementMetric::completions && r.completed) ||
                         (metric == EngagementMetric::certifications && r.certified);
    if (counted) counts[{r.zip, r.course_id}] += 1.0;
  }

  EngagementMatrix m;
  m.metric = metric;
  m.zips.assign(zips.begin(), zips.end());
  m.courses.assign(courses.begin(), courses.end());
  m.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.zips.size()),
                                   static_cast<Eigen::Index>(m.courses.size()));
  std::map<std::string, Eigen::Index> course_col;
  for (std::size_t j = 0; j < m.courses.size(); ++j) {
    course_col[m.courses[j]] = static_cast<Eigen::Index>(j);
  }
  std::map<ZipCode, Eigen::Index> zip_row;
  for (std::size_t k = 0; k < m.zips.size(); ++k) {
    const auto& score = dci_scores.at(m.zips[k]);
    if (score.population <= 0) {
      throw InputError("ZIP " + m.zips[k] + " has zero population");
    }
    zip_row[m.zips[k]] = static_cast<Eigen::Index>(k);
  }
  for (const auto& [key, count] : counts) {
    const double pop = static_cast<double>(dci_scores.at(key.first).population);
    m.values(zip_row.at(key.first), course_col.at(key.second)) = 1e6 * count / pop;
  }
  if (report) *report = rep;
  return m;
}

EngagementMatrix transform(const EngagementMatrix& matrix, EngagementTransform kind) {
  if (matrix.transform != EngagementTransform::raw) {
    throw InputError("transform expects a raw engagement matrix");
  }
  EngagementMatrix out = matrix;
  out.transform = kind;
  switch (kind) {
    case EngagementTransform::raw: break;
    case EngagementTransform::dichotomized:
      out.values = (matrix.values.array() > 0.0).cast<double>();
      break;
    case EngagementTransform::shifted_log:
      out.values = (matrix.values.array() + 1.0).log();
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// classical test theory
// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd column_sample_variances(const Eigen::MatrixXd& x) {
  const double n = static_cast<double>(x.rows());
  const Eigen::RowVectorXd means = x.colwise().mean();
  return ((x.rowwise() - means).array().square().colwise().sum() / (n - 1.0))
      .transpose();
}

}  // namespace

double cronbach_alpha(const Eigen::MatrixXd& scores) {
  const auto p = static_cast<double>(scores.cols());
  if (scores.cols() < 2) throw NumericalError("Cronbach's alpha needs >= 2 items");
  if (scores.rows() < 2) throw NumericalError("Cronbach's alpha needs >= 2 subjects");
  const double item_var_sum = column_sample_variances(scores).sum();
  const Eigen::VectorXd totals = scores.rowwise().sum();
  const std::vector<double> t(totals.data(), totals.data() + totals.size());
  const double total_var = stats::sample_variance(t);
  if (!(total_var > 0.0)) {
    throw NumericalError("Cronbach's alpha: total score has zero variance");
  }
  return (p / (p - 1.0)) * (1.0 - item_var_sum / total_var);
}

double spearman_brown(double alpha, double p_items, double target_items) {
  if (!(p_items >= 1.0) || !(target_items >= 1.0)) {
    throw InputError("Spearman-Brown needs item counts >= 1");
  }
  if (!(alpha <= 1.0)) throw InputError("Spearman-Brown: alpha above 1");
  const double denom = p_items - alpha * (p_items - 1.0);
  if (!(denom > 0.0)) {
    throw NumericalError("Spearman-Brown: alpha at or beyond p/(p-1)");
  }
  const double per_item = alpha / denom;
  const double out_denom = 1.0 + (target_items - 1.0) * per_item;
  if (!(out_denom > 0.0)) {
    throw NumericalError("Spearman-Brown: nonpositive prophecy denominator");
  }
  return target_items * per_item / out_denom;
}

std::vector<std::optional<double>> item_test_correlations(const Eigen::MatrixXd& scores) {
  const Eigen::VectorXd totals = scores.rowwise().sum();
  const std::vector<double> t(totals.data(), totals.data() + totals.size());
  std::vector<std::optional<double>> out;
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    const Eigen::VectorXd col = scores.col(j);
    const std::vector<double> c(col.data(), col.data() + col.size());
    out.push_back(stats::pearson(c, t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// principal-axis factoring
// ---------------------------------------------------------------------------

Eigen::MatrixXd FactorSolution::raw_loadings() const {
  return item_sds.asDiagonal() * loadings;
}

FactorSolution principal_factors(const Eigen::MatrixXd& scores, int n_factors,
                                 int iterate) {
  if (n_factors < 1) throw InputError("principal_factors: n_factors must be >= 1");
  if (iterate < 0) throw InputError("principal_factors: iterate must be >= 0");
  const Eigen::Index n = scores.rows();
  if (n < 2) throw NumericalError("principal_factors needs >= 2 subjects");

  FactorSolution sol;
  sol.n_factors = n_factors;
  sol.iterations = iterate;
  const Eigen::RowVectorXd means = scores.colwise().mean();
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    const double ss = (scores.col(j).array() - means(j)).square().sum();
    const double xx = scores.col(j).squaredNorm();
    if (ss > 1e-24 * xx && ss > 0.0) {
      sol.retained_items.push_back(static_cast<std::size_t>(j));
    } else {
      sol.dropped_items.push_back(static_cast<std::size_t>(j));
    }
  }
  const auto p = static_cast<Eigen::Index>(sol.retained_items.size());
  if (p < 2 || p < n_factors) {
    throw NumericalError("principal_factors: too few items with nonzero variance");
  }

  Eigen::MatrixXd z(n, p);
  sol.item_means.resize(p);
  sol.item_sds.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto src = static_cast<Eigen::Index>(sol.retained_items[static_cast<std::size_t>(j)]);
    const double mu = means(src);
    const double sd =
        std::sqrt((scores.col(src).array() - mu).square().sum() / static_cast<double>(n - 1));
    sol.item_means(j) = mu;
    sol.item_sds(j) = sd;
    z.col(j) = (scores.col(src).array() - mu) / sd;
  }

  Eigen::MatrixXd corr = (z.transpose() * z) / static_cast<double>(n - 1);
  corr = 0.5 * (corr + corr.transpose());
  corr.diagonal().setOnes();

  // initial communalities
  Eigen::VectorXd h(p);
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
    const Eigen::VectorXd ev = es.eigenvalues();
    const double min_ev = ev.minCoeff();
    if (es.info() == Eigen::Success && min_ev > 1e-10 * static_cast<double>(p)) {
      const Eigen::MatrixXd inv =
          es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
      for (Eigen::Index j = 0; j < p; ++j) h(j) = 1.0 - 1.0 / inv(j, j);
      sol.smc_used = true;
    } else {
      for (Eigen::Index j = 0; j < p; ++j) {
        double best = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) {
          if (k != j) best = std::max(best, std::fabs(corr(j, k)));
        }
        h(j) = best;
      }
    }
  }

  const Eigen::Index m = n_factors;
  Eigen::MatrixXd loadings;
  Eigen::VectorXd eigenvalues;
  for (int pass = 0; pass <= iterate; ++pass) {
    Eigen::MatrixXd reduced = corr;
    reduced.diagonal() = h;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reduced);
    if (es.info() != Eigen::Success) {
      throw NumericalError("principal_factors: eigendecomposition failed");
    }
    // Eigen returns ascending order
    eigenvalues = es.eigenvalues().reverse();
    const Eigen::MatrixXd vectors = es.eigenvectors().rowwise().reverse();
    loadings.resize(p, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      loadings.col(i) = vectors.col(i) * std::sqrt(std::max(eigenvalues(i), 0.0));
    }
    if (pass < iterate) {
      h = loadings.rowwise().squaredNorm().cwiseMin(1.0).cwiseMax(0.0);
    }
  }

  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Index arg = 0;
    loadings.col(i).cwiseAbs().maxCoeff(&arg);
    if (loadings(arg, i) < 0.0) loadings.col(i) *= -1.0;
  }

  sol.loadings = loadings;
  sol.eigenvalues = eigenvalues;
  sol.communalities = loadings.rowwise().squaredNorm();
  sol.uniqueness = (1.0 - sol.communalities.array()).cwiseMax(0.0).cwiseMin(1.0);
  // least squares: z_k ~ L s_k for every subject k
  sol.scores = loadings.completeOrthogonalDecomposition().solve(z.transpose()).transpose();
  const double abs_sum = eigenvalues.cwiseAbs().sum();
  sol.variance_explained_first = abs_sum > 0.0 ? eigenvalues(0) / abs_sum : 0.0;
  sol.variance_explained_first_over_items = eigenvalues(0) / static_cast<double>(p);
  return sol;
}

Eigen::MatrixXd fitted_values(const FactorSolution& solution) {
  const Eigen::MatrixXd standardized = solution.scores * solution.loadings.transpose();
  Eigen::MatrixXd out = standardized * solution.item_sds.asDiagonal();
  out.rowwise() += solution.item_means.transpose();
  return out;
}

// ---------------------------------------------------------------------------
// correlation tables
// ---------------------------------------------------------------------------

namespace {

std::optional<double> apply(SeriesTransform t, std::optional<double> v) {
  if (!v) return std::nullopt;
  switch (t) {
    case SeriesTransform::identity: return v;
    case SeriesTransform::log:
      return *v > 0.0 ? std::optional<double>(std::log(*v)) : std::nullopt;
    case SeriesTransform::log_plus_1:
      return *v > -1.0 ? std::optional<double>(std::log(*v + 1.0)) : std::nullopt;
    case SeriesTransform::log_plus_0_01:
      return *v > -0.01 ? std::optional<double>(std::log(*v + 0.01)) : std::nullopt;
  }
  return std::nullopt;
}

struct Pairwise {
  std::vector<double> x, y;
};

Pairwise complete_pairs(const std::vector<std::optional<double>>& x,
                        const std::vector<std::optional<double>>& y) {
  Pairwise p;
  const std::size_t len = std::min(x.size(), y.size());
  for (std::size_t i = 0; i < len; ++i) {
    if (x[i] && y[i]) {
      p.x.push_back(*x[i]);
      p.y.push_back(*y[i]);
    }
  }
  return p;
}

}  // namespace

bool CorrelationTable::flagged(std::size_t i, std::size_t j) const {
  return r[i][j] && std::fabs(*r[i][j]) > flag_threshold;
}

CorrelationTable correlate(const std::vector<Series>& series) {
  const std::size_t len = series.empty() ? 0 : series.front().values.size();
  std::vector<std::vector<std::optional<double>>> transformed;
  for (const auto& s : series) {
    if (s.values.size() != len) {
      throw InputError("correlate: series '" + s.name + "' is not aligned");
    }
    std::vector<std::optional<double>> t;
    t.reserve(len);
    for (const auto& v : s.values) t.push_back(apply(s.transform, v));
    transformed.push_back(std::move(t));
  }
  CorrelationTable table;
  const std::size_t k = series.size();
  for (const auto& s : series) table.names.push_back(s.name);
  table.r.assign(k, std::vector<std::optional<double>>(k));
  table.n.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      const Pairwise pw = complete_pairs(transformed[i], transformed[j]);
      table.n[i][j] = table.n[j][i] = pw.x.size();
      if (pw.x.size() >= 3) {
        table.r[i][j] = table.r[j][i] = stats::pearson(pw.x, pw.y);
      }
    }
  }
  return table;
}

double correlation(const std::vector<std::optional<double>>& x,
                   const std::vector<std::optional<double>>& y) {
  const Pairwise pw = complete_pairs(x, y);
  if (pw.x.size() < 3) throw InputError("correlation needs at least 3 complete pairs");
  const auto r = stats::pearson(pw.x, pw.y);
  if (!r) throw NumericalError("correlation undefined for a zero-variance series");
  return *r;
}

ShiftedLog shifted_log(const Eigen::VectorXd& scores, std::optional<double> shift) {
  if (scores.size() == 0) throw InputError("shifted_log of empty scores");
  ShiftedLog out;
  out.shift = shift.value_or(1.0 - scores.minCoeff());
  for (Eigen::Index k = 0; k < scores.size(); ++k) {
    const double v = scores(k) + out.shift;
    if (!(v > 0.0)) throw NumericalError("shifted_log: nonpositive shifted score");
    out.values.push_back(std::log(v));
  }
  return out;
}

}  // namespace geobias
