#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rlcd/datagen.hpp"

namespace rlcd {

enum class RegressorKind { ols, quadratic, gpr };

std::string to_string(RegressorKind kind);
RegressorKind regressor_kind_from_string(const std::string& name);

struct RegressorSpec {
  RegressorKind kind = RegressorKind::ols;
  /// Empty means the median heuristic over the parent columns.
  std::optional<double> gpr_bandwidth;
  /// Added to the diagonal of the kernel Gram matrix.
  double gpr_jitter = 1e-2;
};

void validate(const RegressorSpec& spec);

struct RegressionFit {
  double rss = 0.0;
  double intercept = 0.0;
  /// Per-feature coefficients: parents for ols, quad_features columns for
  /// quadratic, absent for gpr.
  std::optional<Eigen::VectorXd> coefficients;
  int n_params = 0;
};

/// Regresses column `target` on the `parents` columns (ascending or not; the
/// fit is taken in the given order) with an intercept.
RegressionFit fit_node(const Dataset& ds, int target, std::span<const int> parents,
                       const RegressorSpec& spec);

/// Parent columns followed by all products (a, b), a <= b, in lexicographic order.
Eigen::MatrixXd quad_features(const Eigen::MatrixXd& parent_columns);

/// Median pairwise Euclidean distance between rows. Uses a seed-0 subsample of
/// at most 1000 rows. Throws if all rows coincide.
double median_heuristic(const Eigen::MatrixXd& columns);

}  // namespace rlcd
