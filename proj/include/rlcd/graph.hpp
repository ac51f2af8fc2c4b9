#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace rlcd {

/// Binary directed graph on d nodes. Entry (i, j) = 1 means the edge i -> j.
/// Self-loops are never stored.
class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;
  explicit AdjacencyMatrix(int d);

  /// Builds from a real matrix with entries exactly 0 or 1 and a zero diagonal.
  static AdjacencyMatrix from_dense(const Eigen::MatrixXd& m);

  int nodes() const { return d_; }
  bool has_edge(int from, int to) const { return bits_[index(from, to)] != 0; }
  void set_edge(int from, int to, bool present = true);

  int edge_count() const;

  /// Parents of `node` in ascending order.
  std::vector<int> parents(int node) const;
  /// Parents of `node` as a bitmask (requires d <= 64).
  std::uint64_t parent_mask(int node) const;

  Eigen::MatrixXd to_dense() const;

  friend bool operator==(const AdjacencyMatrix&, const AdjacencyMatrix&) = default;

 private:
  std::size_t index(int from, int to) const {
    return static_cast<std::size_t>(from) * static_cast<std::size_t>(d_) +
           static_cast<std::size_t>(to);
  }

  int d_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Row-major bit packing of an adjacency matrix; usable as a hash key.
struct GraphKey {
  std::string bytes;
  friend bool operator==(const GraphKey&, const GraphKey&) = default;
};

struct GraphKeyHash {
  std::size_t operator()(const GraphKey& k) const noexcept {
    return std::hash<std::string>{}(k.bytes);
  }
};

GraphKey graph_key(const AdjacencyMatrix& a);

/// Topological-sort membership test.
bool is_dag(const AdjacencyMatrix& a);

/// Calls `visit` once for every labeled DAG on d nodes, 1 <= d <= 5.
void for_each_dag(int d, const std::function<void(const AdjacencyMatrix&)>& visit);
std::vector<AdjacencyMatrix> enumerate_dags(int d);

struct MetricsReport {
  double fdr = 0.0;
  double tpr = 0.0;
  int shd = 0;
  int n_edges_est = 0;
  int n_edges_true = 0;
};

/// Structural Hamming distance: one unit per unordered node pair whose edge
/// state differs (missing, extra, or reversed edge).
int shd(const AdjacencyMatrix& est, const AdjacencyMatrix& truth);

/// Directed-edge FDR and TPR. Zero predictions give FDR 0.
std::pair<double, double> fdr_tpr(const AdjacencyMatrix& est, const AdjacencyMatrix& truth);

MetricsReport evaluate_graph(const AdjacencyMatrix& est, const AdjacencyMatrix& truth);

struct RandomDag {
  AdjacencyMatrix graph;
  /// Original triangular node i was relabeled to permutation[i].
  std::vector<int> permutation;
};

/// Strictly upper-triangular Bernoulli(edge_prob) graph, relabeled by a
/// uniformly random permutation.
RandomDag random_dag(int d, double edge_prob, std::mt19937_64& rng);

/// Any topological order of a DAG. Throws if the graph has a cycle.
std::vector<int> topological_order(const AdjacencyMatrix& a);

AdjacencyMatrix load_adjacency_csv(const std::string& path);
void save_adjacency_csv(const AdjacencyMatrix& a, const std::string& path);

}  // namespace rlcd
