#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "rlcd/acyclicity.hpp"
#include "rlcd/datagen.hpp"
#include "rlcd/graph.hpp"
#include "rlcd/policy_net.hpp"
#include "rlcd/scoring.hpp"

namespace rlcd {

/// b independent resamples (with replacement) of n rows of `ds`, each
/// transposed so that node i becomes a length-n vector.
InputBatch build_input(const Dataset& ds, int n, int b, std::mt19937_64& rng);

struct RewardRecord {
  GraphKey key;
  double raw_score = 0.0;  ///< BIC before adjustment
  double h_value = 0.0;
  bool is_dag = false;
  double reward = 0.0;     ///< under the bounds and penalties last applied
};

/// -[adjusted score + lambda1 * 1[not DAG] + lambda2 * h]
double assemble_reward(double raw_score, double h, bool is_dag, const ScoreBounds& bounds,
                       const PenaltyState& penalties);

/// Every graph scored so far, keyed by its adjacency bits.
class RewardStore {
 public:
  /// Cached record for `a`; scores and stores it on a miss.
  const RewardRecord& evaluate(const AdjacencyMatrix& a, const Dataset& ds, const ScoreSpec& spec,
                               const ScoreBounds& bounds, const PenaltyState& penalties, RssCache& rss);

  const RewardRecord* find(const GraphKey& key) const;

  /// Rewrites every stored reward under new bounds and penalties.
  void recompute(const ScoreBounds& bounds, const PenaltyState& penalties);

  /// Record with the largest reward (ties go to the smaller key); null when empty.
  const RewardRecord* max_reward() const;

  std::size_t size() const { return records_.size(); }
  std::uint64_t misses() const { return misses_; }

  template <class F>
  void for_each(F&& f) const {
    for (const auto& [key, rec] : records_) f(rec);
  }

 private:
  std::unordered_map<GraphKey, RewardRecord, GraphKeyHash> records_;
  std::uint64_t misses_ = 0;
};

struct SearchCaches {
  RssCache rss;
  RewardStore rewards;
};

RewardRecord compute_reward(const AdjacencyMatrix& a, const Dataset& ds, const ScoreSpec& spec,
                            const ScoreBounds& bounds, const PenaltyState& penalties, SearchCaches& caches);

/// One schedule step. If the current best reward belongs to a DAG, s_upper
/// drops to the lowest DAG score recorded; then lambda1 and lambda2 advance,
/// lambda1 capped at s_upper measured in the adjusted frame (= s_scale).
/// Every stored reward is recomputed.
void update_penalties(PenaltyState& state, ScoreBounds& bounds, RewardStore& store);

enum class PruneKind { none, threshold, greedy };

std::string to_string(PruneKind kind);
PruneKind prune_kind_from_string(const std::string& name);

struct PruneSpec {
  PruneKind kind = PruneKind::threshold;
  double threshold = 0.3;
  double tolerance = 0.05;
};

/// Removes parents one at a time while the node's RSS grows by at most
/// `tolerance` relative to its current value. Parents are tried in ascending
/// order and the scan restarts after every removal.
AdjacencyMatrix prune_greedy(const AdjacencyMatrix& a, const Dataset& ds, const ScoreSpec& spec, double tolerance,
                             RssCache& cache);
AdjacencyMatrix prune_greedy(const AdjacencyMatrix& a, const Dataset& ds, const ScoreSpec& spec, double tolerance);

/// Refits every node on its parents and drops edges whose coefficients are
/// all below `tau` in magnitude. For quadratic fits the linear, squared, and
/// product terms involving a parent all count toward its edge.
AdjacencyMatrix prune_threshold(const Dataset& ds, const AdjacencyMatrix& a, double tau, const RegressorSpec& spec);

AdjacencyMatrix prune(const AdjacencyMatrix& a, const Dataset& ds, const ScoreSpec& spec, const PruneSpec& prune,
                      RssCache& cache);

struct PenaltyConfig {
  double lambda1_init = 0.0;
  double delta1 = 1.0;
  std::optional<double> lambda2_init;  ///< empty means 10^-ceil(d/3)
  double delta2 = 10.0;
  double lambda2_cap = 0.01;
  int update_every = 1000;
};

PenaltyState make_penalty_state(const PenaltyConfig& cfg, int d);

struct SearchConfig {
  int iterations = 20000;
  int input_samples = 64;  ///< n
  int batch = 64;          ///< B
  ScoreSpec score;
  PolicyShape shape;       ///< nodes and input_dim are filled from the data
  bool sparse_prior = false;
  TrainHyper hyper;
  PenaltyConfig penalty;
  double s_scale = 5.0;
  PruneSpec prune;
  std::uint64_t seed = 0;
};

void validate(const SearchConfig& cfg);

struct CurvePoint {
  int iter = 0;
  double max_reward = 0.0;
  double mean_reward = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double s_upper = 0.0;
};

struct SearchResult {
  bool found_dag = false;
  AdjacencyMatrix best_graph_raw;     ///< lowest-score DAG seen
  AdjacencyMatrix best_graph_pruned;
  double best_score = 0.0;            ///< raw score of best_graph_raw
  double pruned_score = 0.0;
  std::vector<CurvePoint> curve;
  std::uint64_t graphs_seen = 0;
  ScoreBounds initial_bounds;
  ScoreBounds final_bounds;
  PenaltyState final_penalties;
  // Populated when no DAG was ever sampled.
  std::optional<AdjacencyMatrix> best_cyclic;
  double best_cyclic_h = 0.0;
};

using ProgressFn = std::function<void(const CurvePoint&, const SearchResult&)>;

/// Actor-critic search over graphs. `progress` runs after each iteration.
SearchResult train(const Dataset& ds, const SearchConfig& cfg, const ProgressFn& progress = {},
                   PolicyParams* final_params = nullptr);

void save_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path);

}  // namespace rlcd
