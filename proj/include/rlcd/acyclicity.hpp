#pragma once

#include <Eigen/Core>

#include "rlcd/graph.hpp"
#include "rlcd/scoring.hpp"

namespace rlcd {

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& a);

/// trace(exp(A)) - d. Zero exactly on acyclic graphs, positive otherwise.
double h_value(const AdjacencyMatrix& a);

/// Graphs with h below this count as acyclic in h-based comparisons. is_dag
/// stays authoritative: for long cycles h can fall under any fixed tolerance.
inline constexpr double kAcyclicTolerance = 1e-8;

/// Minimum of h over all cyclic directed graphs on d <= 4 nodes, by exhaustion.
double h_min_bruteforce(int d);

/// Penalty weights and their schedule.
struct PenaltyState {
  double lambda1 = 0.0;        ///< weight on the non-DAG indicator
  double delta1 = 1.0;         ///< additive step for lambda1
  double lambda2 = 0.0;        ///< weight on h(A)
  double delta2 = 10.0;        ///< multiplicative step for lambda2
  double lambda2_cap = 0.01;
  int update_every = 1000;

  /// Defaults for a d-node problem: lambda2 = 10^-ceil(d/3).
  static PenaltyState initial(int d);

  /// One schedule step: lambda1 <- min(lambda1 + delta1, lambda1_cap) and
  /// lambda2 <- min(lambda2 * delta2, lambda2_cap).
  void advance(double lambda1_cap);
};

/// True when lambda1 + lambda2 * hmin >= s_upper - s_lower, i.e. the penalized
/// objective shares its minimizers with the acyclicity-constrained problem.
bool penalties_force_dag(const ScoreBounds& bounds, const PenaltyState& p, double hmin);

}  // namespace rlcd
