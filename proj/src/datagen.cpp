#include "rlcd/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>

#include "csv_util.hpp"

namespace rlcd {

void validate(const Dataset& ds) {
  if (ds.samples.rows() < 1 || ds.samples.cols() < 1) throw std::invalid_argument("dataset is empty");
  if (!ds.samples.allFinite()) throw std::invalid_argument("dataset contains non-finite values");
  if (ds.truth && ds.truth->nodes() != ds.vars()) {
    throw std::invalid_argument("truth graph has " + std::to_string(ds.truth->nodes()) +
                                " nodes but data has " + std::to_string(ds.vars()) + " columns");
  }
}

std::string to_string(SemKind kind) {
  switch (kind) {
    case SemKind::linear_gauss: return "linear_gauss";
    case SemKind::linear_nongauss: return "linear_nongauss";
    case SemKind::quadratic: return "quadratic";
    case SemKind::gaussian_process: return "gaussian_process";
  }
  return "?";
}

SemKind sem_kind_from_string(const std::string& name) {
  if (name == "linear_gauss") return SemKind::linear_gauss;
  if (name == "linear_nongauss") return SemKind::linear_nongauss;
  if (name == "quadratic") return SemKind::quadratic;
  if (name == "gaussian_process") return SemKind::gaussian_process;
  throw std::invalid_argument("unknown SEM kind '" + name + "'");
}

void validate(const SemSpec& spec) {
  if (spec.d < 1) throw std::invalid_argument("sem.d must be >= 1");
  if (spec.m < 1) throw std::invalid_argument("sem.m must be >= 1");
  if (!(spec.edge_prob >= 0.0 && spec.edge_prob <= 1.0))
    throw std::invalid_argument("sem.edge_prob must be in [0,1]");
  if (!(spec.weight_low > 0.0 && spec.weight_high >= spec.weight_low))
    throw std::invalid_argument("sem weight range must satisfy 0 < low <= high");
  if (!(spec.noise_var_low >= 0.0 && spec.noise_var_high >= spec.noise_var_low))
    throw std::invalid_argument("sem noise variance range must satisfy 0 <= low <= high");
  const int max_edges = spec.d * (spec.d - 1) / 2;
  if (spec.target_edges < 0 || spec.target_edges > max_edges)
    throw std::invalid_argument("sem.target_edges must be in [0, d(d-1)/2]");
  if (spec.max_graph_draws < 1) throw std::invalid_argument("sem.max_graph_draws must be >= 1");
}

SemSpec linear_regime(SemKind kind, std::uint64_t seed) {
  SemSpec s;
  s.kind = kind;
  s.seed = seed;
  return s;
}

SemSpec quadratic_regime(std::uint64_t seed) {
  SemSpec s;
  s.kind = SemKind::quadratic;
  s.d = 10;
  s.m = 5000;
  s.seed = seed;
  return s;
}

SemSpec gp_regime(std::uint64_t seed) {
  SemSpec s;
  s.kind = SemKind::gaussian_process;
  s.d = 10;
  s.m = 1000;
  s.target_edges = 40;
  // P(40 of 45 slots) is about 0.19 at this rate, so redraws are cheap.
  s.edge_prob = 40.0 / 45.0;
  s.noise_var_low = 0.4;
  s.noise_var_high = 0.8;
  s.seed = seed;
  return s;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double power_noise(double z, double q, double variance) {
  // E|z|^(2q) for z ~ N(0,1)
  const double moment = std::pow(2.0, q) * std::tgamma(q + 0.5) / std::sqrt(M_PI);
  const double scale = std::sqrt(variance / moment);
  return scale * std::copysign(std::pow(std::abs(z), q), z);
}

double draw_power_exponent(std::mt19937_64& rng) {
  // Two bands of widths 0.3 and 0.8.
  std::uniform_real_distribution<double> u(0.0, 1.1);
  const double t = u(rng);
  return t < 0.3 ? 0.5 + t : 1.2 + (t - 0.3);
}

namespace {

double signed_uniform(double low, double high, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(low, high);
  std::bernoulli_distribution negative(0.5);
  const double v = mag(rng);
  return negative(rng) ? -v : v;
}

double draw_variance(const SemSpec& spec, std::mt19937_64& rng) {
  if (spec.noise_var_high == spec.noise_var_low) return spec.noise_var_low;
  std::uniform_real_distribution<double> u(spec.noise_var_low, spec.noise_var_high);
  return u(rng);
}

AdjacencyMatrix draw_graph(const SemSpec& spec, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < spec.max_graph_draws; ++attempt) {
    RandomDag g = random_dag(spec.d, spec.edge_prob, rng);
    if (spec.target_edges == 0 || g.graph.edge_count() == spec.target_edges) return g.graph;
  }
  throw std::runtime_error("no random DAG with " + std::to_string(spec.target_edges) +
                           " edges after " + std::to_string(spec.max_graph_draws) + " draws");
}

// Noise matrix (m x d). Gaussian noise per column has its own variance; the
// non-Gaussian model pushes a Gaussian through a per-column power law.
Eigen::MatrixXd draw_noise(const SemSpec& spec, bool gaussian, std::mt19937_64& rng) {
  Eigen::MatrixXd noise(spec.m, spec.d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int j = 0; j < spec.d; ++j) {
    const double variance = draw_variance(spec, rng);
    if (gaussian) {
      const double sd = std::sqrt(variance);
      for (int k = 0; k < spec.m; ++k) noise(k, j) = sd * normal(rng);
    } else {
      const double q = draw_power_exponent(rng);
      for (int k = 0; k < spec.m; ++k) noise(k, j) = power_noise(normal(rng), q, variance);
    }
  }
  return noise;
}

void require_kind(const SemSpec& spec, std::initializer_list<SemKind> allowed, const char* who) {
  validate(spec);
  if (std::find(allowed.begin(), allowed.end(), spec.kind) == allowed.end())
    throw std::invalid_argument(std::string(who) + ": unsupported SEM kind " + to_string(spec.kind));
}

}  // namespace

Eigen::MatrixXd propagate_linear(const AdjacencyMatrix& graph, const Eigen::MatrixXd& weights,
                                 const Eigen::MatrixXd& noise) {
  Eigen::MatrixXd x = noise;
  for (int j : topological_order(graph)) {
    for (int i : graph.parents(j)) x.col(j) += weights(i, j) * x.col(i);
  }
  return x;
}

Dataset gen_linear(const SemSpec& spec, std::mt19937_64& rng) {
  require_kind(spec, {SemKind::linear_gauss, SemKind::linear_nongauss}, "gen_linear");
  AdjacencyMatrix graph = draw_graph(spec, rng);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(spec.d, spec.d);
  for (int i = 0; i < spec.d; ++i)
    for (int j = 0; j < spec.d; ++j)
      if (graph.has_edge(i, j)) w(i, j) = signed_uniform(spec.weight_low, spec.weight_high, rng);

  const Eigen::MatrixXd noise = draw_noise(spec, spec.kind == SemKind::linear_gauss, rng);
  Dataset ds;
  ds.samples = propagate_linear(graph, w, noise);
  ds.truth = std::move(graph);
  ds.weights = std::move(w);
  return ds;
}

Dataset gen_quadratic(const SemSpec& spec, std::mt19937_64& rng) {
  require_kind(spec, {SemKind::quadratic}, "gen_quadratic");
  AdjacencyMatrix graph = draw_graph(spec, rng);
  std::bernoulli_distribution keep_term(0.5);
  const Eigen::MatrixXd noise = draw_noise(spec, /*gaussian=*/false, rng);
  Eigen::MatrixXd x = noise;

  for (int node : topological_order(graph)) {
    const std::vector<int> pa = graph.parents(node);
    const int p = static_cast<int>(pa.size());
    if (p == 0) continue;
    std::vector<double> linear(p);
    for (auto& c : linear) c = keep_term(rng) ? signed_uniform(0.5, 1.0, rng) : 0.0;
    std::vector<double> products;  // (a, b) with a <= b, lexicographic
    for (int a = 0; a < p; ++a)
      for (int b = a; b < p; ++b) products.push_back(keep_term(rng) ? signed_uniform(0.5, 1.0, rng) : 0.0);

    std::vector<bool> used(p, false);
    std::size_t t = 0;
    for (int a = 0; a < p; ++a) {
      if (linear[a] != 0.0) {
        used[a] = true;
        x.col(node) += linear[a] * x.col(pa[a]);
      }
    }
    for (int a = 0; a < p; ++a) {
      for (int b = a; b < p; ++b, ++t) {
        if (products[t] == 0.0) continue;
        used[a] = used[b] = true;
        x.col(node).array() += products[t] * x.col(pa[a]).array() * x.col(pa[b]).array();
      }
    }
    for (int a = 0; a < p; ++a)
      if (!used[a]) graph.set_edge(pa[a], node, false);
  }

  Dataset ds;
  ds.samples = std::move(x);
  ds.truth = std::move(graph);
  return ds;
}

namespace {

Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& points, double bandwidth) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd k(n, n);
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = std::exp(-(points.row(i) - points.row(j)).squaredNorm() * inv);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

// One joint draw of a zero-mean GP (RBF, unit bandwidth) at the rows of `inputs`.
// Identical input rows receive identical outputs.
Eigen::VectorXd sample_gp_function(const Eigen::MatrixXd& inputs, std::mt19937_64& rng) {
  const Eigen::Index m = inputs.rows();
  std::map<std::vector<double>, Eigen::Index> seen;  // row -> index into `points`, first-seen order
  std::vector<Eigen::Index> position(m);
  std::vector<Eigen::Index> firsts;
  for (Eigen::Index k = 0; k < m; ++k) {
    std::vector<double> row(inputs.cols());
    for (Eigen::Index c = 0; c < inputs.cols(); ++c) row[c] = inputs(k, c);
    auto [it, inserted] = seen.emplace(std::move(row), static_cast<Eigen::Index>(firsts.size()));
    if (inserted) firsts.push_back(k);
    position[k] = it->second;
  }
  Eigen::MatrixXd points(static_cast<Eigen::Index>(firsts.size()), inputs.cols());
  for (std::size_t r = 0; r < firsts.size(); ++r) points.row(r) = inputs.row(firsts[r]);

  Eigen::MatrixXd gram = rbf_gram(points, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(points.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);

  double jitter = 1e-8;
  for (int attempt = 0; attempt < 8; ++attempt, jitter *= 10.0) {
    Eigen::MatrixXd reg = gram;
    reg.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(reg);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::VectorXd f = llt.matrixL() * z;
    Eigen::VectorXd out(m);
    for (Eigen::Index k = 0; k < m; ++k) out(k) = f(position[k]);
    return out;
  }
  throw std::runtime_error("GP Gram matrix factorization failed after 8 jitter increases");
}

}  // namespace

Dataset gen_gp(const SemSpec& spec, std::mt19937_64& rng) {
  require_kind(spec, {SemKind::gaussian_process}, "gen_gp");
  AdjacencyMatrix graph = draw_graph(spec, rng);
  const Eigen::MatrixXd noise = draw_noise(spec, /*gaussian=*/true, rng);
  Eigen::MatrixXd x = noise;
  for (int node : topological_order(graph)) {
    const std::vector<int> pa = graph.parents(node);
    if (pa.empty()) continue;
    Eigen::MatrixXd inputs(spec.m, static_cast<Eigen::Index>(pa.size()));
    for (std::size_t c = 0; c < pa.size(); ++c) inputs.col(c) = x.col(pa[c]);
    x.col(node) += sample_gp_function(inputs, rng);
  }
  Dataset ds;
  ds.samples = std::move(x);
  ds.truth = std::move(graph);
  return ds;
}

Dataset generate(const SemSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  switch (spec.kind) {
    case SemKind::linear_gauss:
    case SemKind::linear_nongauss: return gen_linear(spec, rng);
    case SemKind::quadratic: return gen_quadratic(spec, rng);
    case SemKind::gaussian_process: return gen_gp(spec, rng);
  }
  throw std::invalid_argument("unknown SEM kind");
}

Dataset remove_outliers(const Dataset& ds, int keep) {
  if (keep <= 0) throw std::invalid_argument("remove_outliers: keep must be positive");
  if (keep > ds.rows())
    throw std::invalid_argument("remove_outliers: keep exceeds sample count " + std::to_string(ds.rows()));
  const Eigen::VectorXd norms = ds.samples.rowwise().norm();
  std::vector<int> order(ds.rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return norms(a) < norms(b); });
  Dataset out = ds;
  out.samples.resize(keep, ds.vars());
  for (int r = 0; r < keep; ++r) out.samples.row(r) = ds.samples.row(order[r]);
  return out;
}

Dataset normalize(const Dataset& ds) {
  Dataset out = ds;
  for (int j = 0; j < ds.vars(); ++j) {
    auto col = out.samples.col(j);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(col.size()));
    if (!(sd > 0.0)) throw std::invalid_argument("normalize: column " + std::to_string(j) + " has zero variance");
    col /= sd;
  }
  return out;
}

Dataset load_csv(const std::string& path) {
  const auto rows = detail::read_numeric_csv(path);
  Dataset ds;
  ds.samples.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t k = 0; k < rows.size(); ++k)
    for (std::size_t j = 0; j < rows[k].size(); ++j) ds.samples(k, j) = rows[k][j];
  validate(ds);
  return ds;
}

void save_matrix_csv(const Eigen::MatrixXd& m, const std::string& path) {
  auto out = detail::open_for_write(path);
  out << std::setprecision(17);
  for (Eigen::Index k = 0; k < m.rows(); ++k) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(k, j);
    }
    out << '\n';
  }
}

void save_csv(const Dataset& ds, const std::string& path) { save_matrix_csv(ds.samples, path); }

}  // namespace rlcd
