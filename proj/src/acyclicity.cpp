#include "rlcd/acyclicity.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace rlcd {

Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("matrix_exp: matrix must be square");
  if (!a.allFinite()) throw std::invalid_argument("matrix_exp: non-finite entry");
  const Eigen::Index n = a.rows();
  if (n == 0) return a;

  // Scale so the 1-norm is at most 1/2; 20 Taylor terms are then below 1e-25.
  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Eigen::MatrixXd scaled = a / std::ldexp(1.0, squarings);

  constexpr int kTerms = 20;
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k <= kTerms; ++k) {
    term = term * scaled / static_cast<double>(k);
    result += term;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

double h_value(const AdjacencyMatrix& a) {
  return matrix_exp(a.to_dense()).trace() - static_cast<double>(a.nodes());
}

double h_min_bruteforce(int d) {
  if (d < 2 || d > 4) throw std::invalid_argument("h_min_bruteforce supports 2 <= d <= 4");
  std::vector<std::pair<int, int>> slots;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (i != j) slots.emplace_back(i, j);
  double best = std::numeric_limits<double>::infinity();
  const std::uint32_t patterns = 1u << slots.size();
  for (std::uint32_t bits = 0; bits < patterns; ++bits) {
    AdjacencyMatrix g(d);
    for (std::size_t s = 0; s < slots.size(); ++s)
      if (bits >> s & 1u) g.set_edge(slots[s].first, slots[s].second);
    if (is_dag(g)) continue;
    best = std::min(best, h_value(g));
  }
  return best;
}

PenaltyState PenaltyState::initial(int d) {
  PenaltyState p;
  p.lambda2 = std::pow(10.0, -std::ceil(d / 3.0));
  return p;
}

void PenaltyState::advance(double lambda1_cap) {
  lambda1 = std::min(lambda1 + delta1, lambda1_cap);
  lambda2 = std::min(lambda2 * delta2, lambda2_cap);
}

bool penalties_force_dag(const ScoreBounds& bounds, const PenaltyState& p, double hmin) {
  return p.lambda1 + p.lambda2 * hmin >= bounds.s_upper - bounds.s_lower;
}

}  // namespace rlcd
