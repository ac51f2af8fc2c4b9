#include "rlcd/graph.hpp"

#include <algorithm>
#include <array>
#include <tuple>
#include <bitset>
#include <numeric>
#include <stdexcept>

#include "csv_util.hpp"

namespace rlcd {

AdjacencyMatrix::AdjacencyMatrix(int d) : d_(d) {
  if (d < 1) throw std::invalid_argument("graph needs at least one node");
  bits_.assign(static_cast<std::size_t>(d) * static_cast<std::size_t>(d), 0);
}

AdjacencyMatrix AdjacencyMatrix::from_dense(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("adjacency matrix must be square");
  AdjacencyMatrix a(static_cast<int>(m.rows()));
  for (int i = 0; i < a.d_; ++i) {
    for (int j = 0; j < a.d_; ++j) {
      const double v = m(i, j);
      if (v != 0.0 && v != 1.0) throw std::invalid_argument("adjacency entries must be 0 or 1");
      if (i == j && v != 0.0) throw std::invalid_argument("self-loop at node " + std::to_string(i));
      a.bits_[a.index(i, j)] = v != 0.0;
    }
  }
  return a;
}

void AdjacencyMatrix::set_edge(int from, int to, bool present) {
  if (from == to) throw std::invalid_argument("self-loops are not allowed");
  bits_[index(from, to)] = present ? 1 : 0;
}

int AdjacencyMatrix::edge_count() const {
  return static_cast<int>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<int> AdjacencyMatrix::parents(int node) const {
  std::vector<int> out;
  for (int i = 0; i < d_; ++i) {
    if (has_edge(i, node)) out.push_back(i);
  }
  return out;
}

std::uint64_t AdjacencyMatrix::parent_mask(int node) const {
  if (d_ > 64) throw std::length_error("parent_mask requires d <= 64");
  std::uint64_t mask = 0;
  for (int i = 0; i < d_; ++i) {
    if (has_edge(i, node)) mask |= std::uint64_t{1} << i;
  }
  return mask;
}

Eigen::MatrixXd AdjacencyMatrix::to_dense() const {
  Eigen::MatrixXd m(d_, d_);
  for (int i = 0; i < d_; ++i) {
    for (int j = 0; j < d_; ++j) m(i, j) = has_edge(i, j) ? 1.0 : 0.0;
  }
  return m;
}

GraphKey graph_key(const AdjacencyMatrix& a) {
  const int d = a.nodes();
  const std::size_t nbits = static_cast<std::size_t>(d) * static_cast<std::size_t>(d);
  GraphKey key;
  key.bytes.assign((nbits + 7) / 8, '\0');
  std::size_t bit = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j, ++bit) {
      if (a.has_edge(i, j)) key.bytes[bit / 8] |= static_cast<char>(1u << (bit % 8));
    }
  }
  return key;
}

std::vector<int> topological_order(const AdjacencyMatrix& a) {
  const int d = a.nodes();
  std::vector<int> indegree(d, 0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) indegree[j] += a.has_edge(i, j);

  std::vector<int> order;
  order.reserve(d);
  std::vector<int> ready;
  for (int i = d - 1; i >= 0; --i)
    if (indegree[i] == 0) ready.push_back(i);
  while (!ready.empty()) {
    const int node = ready.back();
    ready.pop_back();
    order.push_back(node);
    for (int j = d - 1; j >= 0; --j) {
      if (a.has_edge(node, j) && --indegree[j] == 0) ready.push_back(j);
    }
  }
  if (static_cast<int>(order.size()) != d) throw std::invalid_argument("graph has a cycle");
  return order;
}

bool is_dag(const AdjacencyMatrix& a) {
  const int d = a.nodes();
  std::vector<int> indegree(d, 0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) indegree[j] += a.has_edge(i, j);
  std::vector<int> ready;
  for (int i = 0; i < d; ++i)
    if (indegree[i] == 0) ready.push_back(i);
  int removed = 0;
  while (!ready.empty()) {
    const int node = ready.back();
    ready.pop_back();
    ++removed;
    for (int j = 0; j < d; ++j) {
      if (a.has_edge(node, j) && --indegree[j] == 0) ready.push_back(j);
    }
  }
  return removed == d;
}

namespace {

constexpr int kMaxEnumNodes = 5;
using Reach = std::array<std::bitset<kMaxEnumNodes>, kMaxEnumNodes>;

// Depth-first over off-diagonal slots; an edge i->j is only branched on when
// j cannot already reach i, so every completed assignment is acyclic.
void extend_dag(AdjacencyMatrix& a, Reach reach, const std::vector<std::pair<int, int>>& slots,
                std::size_t pos, const std::function<void(const AdjacencyMatrix&)>& visit) {
  if (pos == slots.size()) {
    visit(a);
    return;
  }
  extend_dag(a, reach, slots, pos + 1, visit);

  const auto [from, to] = slots[pos];
  if (reach[to][from]) return;
  a.set_edge(from, to, true);
  const int d = a.nodes();
  // Everything reaching `from` (and `from` itself) now reaches `to` and its descendants.
  std::bitset<kMaxEnumNodes> gained = reach[to];
  gained.set(to);
  for (int k = 0; k < d; ++k) {
    if (k == from || reach[k][from]) reach[k] |= gained;
  }
  extend_dag(a, reach, slots, pos + 1, visit);
  a.set_edge(from, to, false);
}

}  // namespace

void for_each_dag(int d, const std::function<void(const AdjacencyMatrix&)>& visit) {
  if (d < 1 || d > kMaxEnumNodes) {
    throw std::invalid_argument("enumerate_dags supports 1 <= d <= 5, got " + std::to_string(d));
  }
  std::vector<std::pair<int, int>> slots;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (i != j) slots.emplace_back(i, j);
  AdjacencyMatrix a(d);
  extend_dag(a, Reach{}, slots, 0, visit);
}

std::vector<AdjacencyMatrix> enumerate_dags(int d) {
  std::vector<AdjacencyMatrix> out;
  for_each_dag(d, [&](const AdjacencyMatrix& a) { out.push_back(a); });
  return out;
}

namespace {
void require_same_size(const AdjacencyMatrix& a, const AdjacencyMatrix& b) {
  if (a.nodes() != b.nodes()) {
    throw std::invalid_argument("dimension mismatch: " + std::to_string(a.nodes()) + " vs " +
                                std::to_string(b.nodes()));
  }
}
}  // namespace

int shd(const AdjacencyMatrix& est, const AdjacencyMatrix& truth) {
  require_same_size(est, truth);
  const int d = est.nodes();
  int distance = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      if (est.has_edge(i, j) != truth.has_edge(i, j) || est.has_edge(j, i) != truth.has_edge(j, i))
        ++distance;
    }
  }
  return distance;
}

std::pair<double, double> fdr_tpr(const AdjacencyMatrix& est, const AdjacencyMatrix& truth) {
  require_same_size(est, truth);
  const int d = est.nodes();
  int predicted = 0, actual = 0, true_pos = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      predicted += est.has_edge(i, j);
      actual += truth.has_edge(i, j);
      true_pos += est.has_edge(i, j) && truth.has_edge(i, j);
    }
  }
  const double fdr = static_cast<double>(predicted - true_pos) / std::max(1, predicted);
  const double tpr = static_cast<double>(true_pos) / std::max(1, actual);
  return {fdr, tpr};
}

MetricsReport evaluate_graph(const AdjacencyMatrix& est, const AdjacencyMatrix& truth) {
  MetricsReport r;
  std::tie(r.fdr, r.tpr) = fdr_tpr(est, truth);
  r.shd = shd(est, truth);
  r.n_edges_est = est.edge_count();
  r.n_edges_true = truth.edge_count();
  return r;
}

RandomDag random_dag(int d, double edge_prob, std::mt19937_64& rng) {
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) throw std::invalid_argument("edge_prob must be in [0,1]");
  std::bernoulli_distribution coin(edge_prob);
  AdjacencyMatrix triangular(d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (coin(rng)) triangular.set_edge(i, j);

  std::vector<int> perm(d);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  RandomDag out{AdjacencyMatrix(d), perm};
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (triangular.has_edge(i, j)) out.graph.set_edge(perm[i], perm[j]);
  return out;
}

AdjacencyMatrix load_adjacency_csv(const std::string& path) {
  const auto rows = detail::read_numeric_csv(path);
  const auto d = rows.size();
  if (rows.front().size() != d) {
    throw std::runtime_error(path + ": adjacency CSV must be square, got " + std::to_string(d) +
                             "x" + std::to_string(rows.front().size()));
  }
  Eigen::MatrixXd m(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = rows[i][j];
  return AdjacencyMatrix::from_dense(m);
}

void save_adjacency_csv(const AdjacencyMatrix& a, const std::string& path) {
  auto out = detail::open_for_write(path);
  for (int i = 0; i < a.nodes(); ++i) {
    for (int j = 0; j < a.nodes(); ++j) {
      if (j) out << ',';
      out << (a.has_edge(i, j) ? 1 : 0);
    }
    out << '\n';
  }
}

}  // namespace rlcd
