#include "rlcd/regressors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/QR>

namespace rlcd {

std::string to_string(RegressorKind kind) {
  switch (kind) {
    case RegressorKind::ols: return "ols";
    case RegressorKind::quadratic: return "quadratic";
    case RegressorKind::gpr: return "gpr";
  }
  return "?";
}

RegressorKind regressor_kind_from_string(const std::string& name) {
  if (name == "ols") return RegressorKind::ols;
  if (name == "quadratic") return RegressorKind::quadratic;
  if (name == "gpr") return RegressorKind::gpr;
  throw std::invalid_argument("unknown regressor '" + name + "'");
}

void validate(const RegressorSpec& spec) {
  if (!(spec.gpr_jitter > 0.0)) throw std::invalid_argument("gpr_jitter must be positive");
  if (spec.gpr_bandwidth && !(*spec.gpr_bandwidth > 0.0))
    throw std::invalid_argument("gpr_bandwidth must be positive");
}

Eigen::MatrixXd quad_features(const Eigen::MatrixXd& parent_columns) {
  const Eigen::Index p = parent_columns.cols();
  Eigen::MatrixXd out(parent_columns.rows(), p + p * (p + 1) / 2);
  out.leftCols(p) = parent_columns;
  Eigen::Index c = p;
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = a; b < p; ++b, ++c)
      out.col(c) = parent_columns.col(a).cwiseProduct(parent_columns.col(b));
  return out;
}

double median_heuristic(const Eigen::MatrixXd& columns) {
  constexpr Eigen::Index kMaxRows = 1000;
  std::vector<Eigen::Index> rows(columns.rows());
  std::iota(rows.begin(), rows.end(), 0);
  if (columns.rows() > kMaxRows) {
    std::mt19937_64 rng(0);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(kMaxRows);
    std::sort(rows.begin(), rows.end());
  }
  if (rows.size() < 2) throw std::invalid_argument("median_heuristic needs at least two rows");

  std::vector<double> dist;
  dist.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      dist.push_back((columns.row(rows[i]) - columns.row(rows[j])).norm());

  auto median_of = [](std::vector<double>& v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
  };

  double med = median_of(dist);
  if (med > 0.0) return med;
  // Mostly duplicated rows: fall back to the median of the nonzero distances.
  std::erase_if(dist, [](double x) { return x == 0.0; });
  if (dist.empty()) throw std::invalid_argument("median_heuristic: all rows are identical");
  return median_of(dist);
}

namespace {

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& x, std::span<const int> cols) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = x.col(cols[c]);
  return out;
}

// Least squares with intercept via centering plus a minimum-norm solve.
RegressionFit least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
  RegressionFit fit;
  const double y_mean = y.mean();
  const Eigen::VectorXd yc = y.array() - y_mean;
  fit.n_params = static_cast<int>(design.cols()) + 1;
  if (design.cols() == 0) {
    fit.intercept = y_mean;
    fit.rss = yc.squaredNorm();
    fit.coefficients = Eigen::VectorXd();
    return fit;
  }
  const Eigen::RowVectorXd x_mean = design.colwise().mean();
  const Eigen::MatrixXd xc = design.rowwise() - x_mean;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(xc);
  Eigen::VectorXd beta = cod.solve(yc);
  fit.rss = (yc - xc * beta).squaredNorm();
  fit.intercept = y_mean - x_mean.dot(beta);
  fit.coefficients = std::move(beta);
  return fit;
}

RegressionFit kernel_ridge(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& y,
                           const RegressorSpec& spec) {
  RegressionFit fit;
  const double y_mean = y.mean();
  const Eigen::VectorXd yc = y.array() - y_mean;
  fit.intercept = y_mean;
  fit.n_params = static_cast<int>(inputs.cols());
  if (inputs.cols() == 0) {
    fit.rss = yc.squaredNorm();
    return fit;
  }
  const double bandwidth = spec.gpr_bandwidth ? *spec.gpr_bandwidth : median_heuristic(inputs);
  const Eigen::VectorXd sq = inputs.rowwise().squaredNorm();
  Eigen::MatrixXd gram = -2.0 * inputs * inputs.transpose();
  gram.colwise() += sq;
  gram.rowwise() += sq.transpose();
  const double scale = -1.0 / (2.0 * bandwidth * bandwidth);
  gram = (gram.array().max(0.0) * scale).exp().matrix();

  double jitter = spec.gpr_jitter;
  for (int attempt = 0; attempt < 6; ++attempt, jitter *= 10.0) {
    Eigen::MatrixXd reg = gram;
    reg.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(reg);
    if (llt.info() != Eigen::Success) continue;
    // y - K (K + jI)^{-1} y = j (K + jI)^{-1} y
    const Eigen::VectorXd alpha = llt.solve(yc);
    fit.rss = jitter * jitter * alpha.squaredNorm();
    return fit;
  }
  throw std::runtime_error("GPR kernel factorization failed");
}

}  // namespace

RegressionFit fit_node(const Dataset& ds, int target, std::span<const int> parents,
                       const RegressorSpec& spec) {
  if (target < 0 || target >= ds.vars()) throw std::out_of_range("fit_node: target out of range");
  for (int p : parents) {
    if (p < 0 || p >= ds.vars()) throw std::out_of_range("fit_node: parent out of range");
    if (p == target) throw std::invalid_argument("fit_node: target cannot be its own parent");
  }
  const Eigen::VectorXd y = ds.samples.col(target);
  const Eigen::MatrixXd pa = gather_columns(ds.samples, parents);
  switch (spec.kind) {
    case RegressorKind::ols: return least_squares(pa, y);
    case RegressorKind::quadratic: return least_squares(quad_features(pa), y);
    case RegressorKind::gpr: return kernel_ridge(pa, y, spec);
  }
  throw std::invalid_argument("unknown regressor kind");
}

}  // namespace rlcd
