#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include <Eigen/Core>

#include "rlcd/graph.hpp"

namespace rlcd {

/// Observational samples, one row per sample and one column per variable,
/// with the generating graph and weights when known.
struct Dataset {
  Eigen::MatrixXd samples;
  std::optional<AdjacencyMatrix> truth;
  std::optional<Eigen::MatrixXd> weights;

  int rows() const { return static_cast<int>(samples.rows()); }
  int vars() const { return static_cast<int>(samples.cols()); }
};

/// Throws std::invalid_argument if the dataset is empty, holds non-finite
/// values, or carries a truth graph of the wrong size.
void validate(const Dataset& ds);

enum class SemKind { linear_gauss, linear_nongauss, quadratic, gaussian_process };

std::string to_string(SemKind kind);
SemKind sem_kind_from_string(const std::string& name);

struct SemSpec {
  SemKind kind = SemKind::linear_gauss;
  int d = 12;
  int m = 5000;
  double edge_prob = 0.5;
  /// Edge weights are drawn from [-high, -low] U [low, high].
  double weight_low = 0.5;
  double weight_high = 2.0;
  /// Noise variance range; equal ends mean a fixed variance.
  double noise_var_low = 1.0;
  double noise_var_high = 1.0;
  /// When positive, the random DAG is redrawn until it has exactly this many edges.
  int target_edges = 0;
  int max_graph_draws = 100000;
  std::uint64_t seed = 0;
};

void validate(const SemSpec& spec);

/// Benchmark presets.
SemSpec linear_regime(SemKind kind, std::uint64_t seed);       // d=12, m=5000, Bern(0.5), unit noise
SemSpec quadratic_regime(std::uint64_t seed);                  // d=10, m=5000, non-Gaussian noise
SemSpec gp_regime(std::uint64_t seed);                         // d=10, 40 edges, m=1000

/// Mixes a master seed with a stream index (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// n = sign(z) |z|^q for standard Gaussian z, scaled so that Var(n) = variance.
/// Exponent q is the per-variable shape of the non-Gaussian noise model.
double power_noise(double z, double q, double variance);
/// Draws an exponent q uniformly from [0.5, 0.8] U [1.2, 2.0].
double draw_power_exponent(std::mt19937_64& rng);

Dataset gen_linear(const SemSpec& spec, std::mt19937_64& rng);
Dataset gen_quadratic(const SemSpec& spec, std::mt19937_64& rng);
Dataset gen_gp(const SemSpec& spec, std::mt19937_64& rng);

/// Dispatches on spec.kind with an RNG seeded from spec.seed.
Dataset generate(const SemSpec& spec);

/// Linear SEM propagation x = W^T x + noise in topological order. weights(i, j)
/// is the coefficient of x_i in x_j; noise is m x d.
Eigen::MatrixXd propagate_linear(const AdjacencyMatrix& graph, const Eigen::MatrixXd& weights,
                                 const Eigen::MatrixXd& noise);

/// Keeps the `keep` samples with the smallest l2 norm, ordered by norm (stable).
Dataset remove_outliers(const Dataset& ds, int keep);

/// Column-wise standardization to zero mean and unit (population) variance.
Dataset normalize(const Dataset& ds);

Dataset load_csv(const std::string& path);
/// Writes samples with 17 significant digits.
void save_csv(const Dataset& ds, const std::string& path);
void save_matrix_csv(const Eigen::MatrixXd& m, const std::string& path);

}  // namespace rlcd
