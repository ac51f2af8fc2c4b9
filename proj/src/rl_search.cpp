#include "rlcd/rl_search.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

#include "csv_util.hpp"

namespace rlcd {

InputBatch build_input(const Dataset& ds, int n, int b, std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("build_input: n must be >= 1");
  if (b < 1) throw std::invalid_argument("build_input: batch must be >= 1");
  const int d = ds.vars();
  InputBatch in{b, d, n, Eigen::MatrixXd(static_cast<Eigen::Index>(b) * d, n)};
  std::uniform_int_distribution<int> pick(0, ds.rows() - 1);
  for (int e = 0; e < b; ++e) {
    for (int s = 0; s < n; ++s) {
      const int row = pick(rng);
      in.data.block(static_cast<Eigen::Index>(e) * d, s, d, 1) = ds.samples.row(row).transpose();
    }
  }
  return in;
}

double assemble_reward(double raw_score, double h, bool is_dag, const ScoreBounds& bounds,
                       const PenaltyState& penalties) {
  double penalty = 0.0;
  if (!is_dag) penalty = penalties.lambda1 + penalties.lambda2 * h;
  return -(adjust_score(raw_score, bounds) + penalty);
}

const RewardRecord& RewardStore::evaluate(const AdjacencyMatrix& a, const Dataset& ds, const ScoreSpec& spec,
                                          const ScoreBounds& bounds, const PenaltyState& penalties,
                                          RssCache& rss) {
  GraphKey key = graph_key(a);
  if (auto it = records_.find(key); it != records_.end()) return it->second;
  ++misses_;
  RewardRecord rec;
  rec.key = key;
  rec.raw_score = bic_score(a, ds, spec, rss);
  rec.is_dag = is_dag(a);
  rec.h_value = rec.is_dag ? 0.0 : h_value(a);
  rec.reward = assemble_reward(rec.raw_score, rec.h_value, rec.is_dag, bounds, penalties);
  return records_.emplace(std::move(key), std::move(rec)).first->second;
}

const RewardRecord* RewardStore::find(const GraphKey& key) const {
  auto it = records_.find(key);
  return it == records_.end() ? nullptr : &it->second;
}

void RewardStore::recompute(const ScoreBounds& bounds, const PenaltyState& penalties) {
  for (auto& [key, rec] : records_)
    rec.reward = assemble_reward(rec.raw_score, rec.h_value, rec.is_dag, bounds, penalties);
}

const RewardRecord* RewardStore::max_reward() const {
  const RewardRecord* best = nullptr;
  for (const auto& [key, rec] : records_) {
    if (!best || rec.reward > best->reward || (rec.reward == best->reward && rec.key.bytes < best->key.bytes))
      best = &rec;
  }
  return best;
}

RewardRecord compute_reward(const AdjacencyMatrix& a, const Dataset& ds, const ScoreSpec& spec,
                            const ScoreBounds& bounds, const PenaltyState& penalties, SearchCaches& caches) {
  return caches.rewards.evaluate(a, ds, spec, bounds, penalties, caches.rss);
}

void update_penalties(PenaltyState& state, ScoreBounds& bounds, RewardStore& store) {
  const RewardRecord* top = store.max_reward();
  if (top && top->is_dag) {
    double lowest = std::numeric_limits<double>::infinity();
    store.for_each([&](const RewardRecord& r) {
      if (r.is_dag) lowest = std::min(lowest, r.raw_score);
    });
    if (lowest < bounds.s_upper) bounds = ScoreBounds::make(bounds.s_lower, lowest, bounds.s_scale);
  }
  state.advance(bounds.s_scale);
  store.recompute(bounds, state);
}

std::string to_string(PruneKind kind) {
  switch (kind) {
    case PruneKind::none: return "none";
    case PruneKind::threshold: return "threshold";
    case PruneKind::greedy: return "greedy";
  }
  return "?";
}

PruneKind prune_kind_from_string(const std::string& name) {
  if (name == "none") return PruneKind::none;
  if (name == "threshold") return PruneKind::threshold;
  if (name == "greedy") return PruneKind::greedy;
  throw std::invalid_argument("unknown prune method '" + name + "'");
}

AdjacencyMatrix prune_greedy(const AdjacencyMatrix& a, const Dataset& ds, const ScoreSpec& spec, double tolerance,
                             RssCache& cache) {
  if (a.nodes() != ds.vars()) throw std::invalid_argument("prune_greedy: graph and data dimensions differ");
  if (!(tolerance >= 0.0)) throw std::invalid_argument("prune_greedy: tolerance must be >= 0");
  AdjacencyMatrix out = a;
  for (int node = 0; node < a.nodes(); ++node) {
    std::uint64_t mask = out.parent_mask(node);
    double current = std::max(cache.lookup(ds, node, mask, spec), kRssFloor);
    bool removed = true;
    while (removed) {
      removed = false;
      for (int p : out.parents(node)) {
        const std::uint64_t trial = mask & ~(std::uint64_t{1} << p);
        const double rss = std::max(cache.lookup(ds, node, trial, spec), kRssFloor);
        if (rss <= current * (1.0 + tolerance)) {
          out.set_edge(p, node, false);
          mask = trial;
          current = rss;
          removed = true;
          break;
        }
      }
    }
  }
  return out;
}

AdjacencyMatrix prune_greedy(const AdjacencyMatrix& a, const Dataset& ds, const ScoreSpec& spec, double tolerance) {
  RssCache cache;
  return prune_greedy(a, ds, spec, tolerance, cache);
}

AdjacencyMatrix prune_threshold(const Dataset& ds, const AdjacencyMatrix& a, double tau, const RegressorSpec& spec) {
  if (a.nodes() != ds.vars()) throw std::invalid_argument("prune_threshold: graph and data dimensions differ");
  if (spec.kind == RegressorKind::gpr)
    throw std::invalid_argument("prune_threshold: gpr has no coefficients; use greedy pruning");
  AdjacencyMatrix out(a.nodes());
  for (int node = 0; node < a.nodes(); ++node) {
    const std::vector<int> parents = a.parents(node);
    if (parents.empty()) continue;
    const RegressionFit fit = fit_node(ds, node, parents, spec);
    const Eigen::VectorXd& c = *fit.coefficients;
    const int k = static_cast<int>(parents.size());
    std::vector<bool> keep(k, false);
    for (int i = 0; i < k; ++i)
      if (std::abs(c(i)) >= tau) keep[i] = true;
    if (spec.kind == RegressorKind::quadratic) {
      int idx = k;
      for (int i = 0; i < k; ++i) {
        for (int j = i; j < k; ++j, ++idx) {
          if (std::abs(c(idx)) >= tau) keep[i] = keep[j] = true;
        }
      }
    }
    for (int i = 0; i < k; ++i)
      if (keep[i]) out.set_edge(parents[i], node);
  }
  return out;
}

AdjacencyMatrix prune(const AdjacencyMatrix& a, const Dataset& ds, const ScoreSpec& spec, const PruneSpec& p,
                      RssCache& cache) {
  switch (p.kind) {
    case PruneKind::none: return a;
    case PruneKind::threshold: return prune_threshold(ds, a, p.threshold, spec.regressor);
    case PruneKind::greedy: return prune_greedy(a, ds, spec, p.tolerance, cache);
  }
  return a;
}

PenaltyState make_penalty_state(const PenaltyConfig& cfg, int d) {
  PenaltyState s = PenaltyState::initial(d);
  s.lambda1 = cfg.lambda1_init;
  s.delta1 = cfg.delta1;
  if (cfg.lambda2_init) s.lambda2 = *cfg.lambda2_init;
  s.delta2 = cfg.delta2;
  s.lambda2_cap = cfg.lambda2_cap;
  s.update_every = cfg.update_every;
  return s;
}

void validate(const SearchConfig& cfg) {
  if (cfg.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (cfg.input_samples < 1) throw std::invalid_argument("input_samples (n) must be >= 1");
  if (cfg.batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (cfg.penalty.update_every < 1) throw std::invalid_argument("penalty.update_every must be >= 1");
  if (cfg.penalty.delta1 < 0.0 || cfg.penalty.delta2 < 1.0 || cfg.penalty.lambda2_cap < 0.0 ||
      cfg.penalty.lambda1_init < 0.0 || (cfg.penalty.lambda2_init && *cfg.penalty.lambda2_init < 0.0))
    throw std::invalid_argument("penalty weights must be non-negative and delta2 >= 1");
  if (!(cfg.s_scale > 0.0)) throw std::invalid_argument("s_scale must be positive");
  if (cfg.prune.threshold < 0.0 || cfg.prune.tolerance < 0.0)
    throw std::invalid_argument("prune threshold and tolerance must be non-negative");
  if (cfg.prune.kind == PruneKind::threshold && cfg.score.regressor.kind == RegressorKind::gpr)
    throw std::invalid_argument("threshold pruning needs the ols or quadratic regressor");
  if (cfg.hyper.entropy_weight < 0.0 || !(cfg.hyper.actor_lr > 0.0) || !(cfg.hyper.critic_lr > 0.0) ||
      !(cfg.hyper.grad_clip > 0.0))
    throw std::invalid_argument("hyperparameters out of range");
  validate(cfg.score.regressor);
}

SearchResult train(const Dataset& ds, const SearchConfig& cfg, const ProgressFn& progress,
                   PolicyParams* final_params) {
  validate(ds);
  validate(cfg);
  const int d = ds.vars();
  if (d > 64) throw std::invalid_argument("train supports at most 64 variables");

  std::mt19937_64 init_rng(derive_seed(cfg.seed, 0));
  std::mt19937_64 input_rng(derive_seed(cfg.seed, 1));
  std::mt19937_64 sample_rng(derive_seed(cfg.seed, 2));

  PolicyShape shape = cfg.shape;
  shape.nodes = d;
  shape.input_dim = cfg.input_samples;
  PolicyParams params = init_policy(shape, cfg.sparse_prior ? -10.0 : 0.0, init_rng);
  AdamOptimizer optimizer(params);

  SearchCaches caches;
  SearchResult result;
  ScoreBounds bounds = score_bounds(ds, cfg.score, caches.rss, cfg.s_scale);
  PenaltyState penalties = make_penalty_state(cfg.penalty, d);
  result.initial_bounds = bounds;
  result.curve.reserve(static_cast<std::size_t>(cfg.iterations));

  double best_dag_score = std::numeric_limits<double>::infinity();
  double best_cyclic_reward = -std::numeric_limits<double>::infinity();
  std::vector<double> rewards(static_cast<std::size_t>(cfg.batch));

  for (int t = 1; t <= cfg.iterations; ++t) {
    const InputBatch input = build_input(ds, cfg.input_samples, cfg.batch, input_rng);
    const PolicyForward fwd = forward(params, input);
    const std::vector<GraphSample> samples = sample_graphs(fwd.logits, sample_rng);

    CurvePoint point;
    point.iter = t;
    point.max_reward = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < cfg.batch; ++b) {
      const AdjacencyMatrix& g = samples[b].adjacency;
      const RewardRecord& rec = caches.rewards.evaluate(g, ds, cfg.score, bounds, penalties, caches.rss);
      rewards[b] = rec.reward;
      point.max_reward = std::max(point.max_reward, rec.reward);
      point.mean_reward += rec.reward / cfg.batch;
      if (rec.is_dag) {
        if (rec.raw_score < best_dag_score) {
          best_dag_score = rec.raw_score;
          result.best_graph_raw = g;
          result.found_dag = true;
        }
      } else if (!result.found_dag && rec.reward > best_cyclic_reward) {
        best_cyclic_reward = rec.reward;
        result.best_cyclic = g;
        result.best_cyclic_h = rec.h_value;
      }
    }

    train_step(params, optimizer, fwd, samples, rewards, cfg.hyper);

    point.lambda1 = penalties.lambda1;
    point.lambda2 = penalties.lambda2;
    point.s_upper = bounds.s_upper;
    result.curve.push_back(point);

    if (t % penalties.update_every == 0) update_penalties(penalties, bounds, caches.rewards);
    result.graphs_seen = caches.rewards.size();
    if (progress) progress(point, result);
  }

  result.final_bounds = bounds;
  result.final_penalties = penalties;
  if (result.found_dag) {
    result.best_cyclic.reset();
    result.best_score = best_dag_score;
    result.best_graph_pruned = prune(result.best_graph_raw, ds, cfg.score, cfg.prune, caches.rss);
    result.pruned_score = bic_score(result.best_graph_pruned, ds, cfg.score, caches.rss);
  }
  if (final_params) *final_params = std::move(params);
  return result;
}

void save_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path) {
  std::ofstream out = detail::open_for_write(path);
  out << "iter,max_reward,mean_reward,lambda1,lambda2,s_upper\n";
  out << std::setprecision(17);
  for (const auto& p : curve)
    out << p.iter << ',' << p.max_reward << ',' << p.mean_reward << ',' << p.lambda1 << ',' << p.lambda2 << ','
        << p.s_upper << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace rlcd
