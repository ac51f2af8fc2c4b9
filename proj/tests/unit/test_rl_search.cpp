#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "rlcd/rl_search.hpp"

namespace rlcd {
namespace {

AdjacencyMatrix edges(int d, std::initializer_list<std::pair<int, int>> list) {
  AdjacencyMatrix a(d);
  for (auto [i, j] : list) a.set_edge(i, j);
  return a;
}

Dataset chain_data(int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Dataset ds;
  ds.samples.resize(m, 3);
  for (int k = 0; k < m; ++k) {
    const double x0 = n(rng);
    const double x1 = 1.5 * x0 + n(rng);
    const double x2 = -1.0 * x1 + n(rng);
    ds.samples.row(k) << x0, x1, x2;
  }
  ds.truth = edges(3, {{0, 1}, {1, 2}});
  return ds;
}

SearchConfig tiny_config(int iterations, std::uint64_t seed) {
  SearchConfig cfg;
  cfg.iterations = iterations;
  cfg.input_samples = 16;
  cfg.batch = 8;
  cfg.shape.embed_dim = 8;
  cfg.shape.heads = 2;
  cfg.shape.layers = 1;
  cfg.shape.ff_dim = 16;
  cfg.shape.decoder_hidden = 4;
  cfg.shape.critic_hidden = 8;
  cfg.penalty.update_every = 10;
  cfg.seed = seed;
  return cfg;
}

TEST(BuildInput, ShapeAndResampling) {
  const Dataset ds = chain_data(50, 1);
  std::mt19937_64 rng(3);
  const InputBatch in = build_input(ds, 20, 4, rng);
  EXPECT_EQ(in.batch, 4);
  EXPECT_EQ(in.nodes, 3);
  EXPECT_EQ(in.dim, 20);
  ASSERT_EQ(in.data.rows(), 12);
  ASSERT_EQ(in.data.cols(), 20);
  // Column c of element b is one observation: it must be a dataset row.
  for (int b = 0; b < 4; ++b)
    for (int c = 0; c < 20; ++c) {
      const Eigen::Vector3d obs = in.data.block(b * 3, c, 3, 1);
      bool found = false;
      for (int k = 0; k < ds.rows() && !found; ++k) found = ds.samples.row(k).transpose() == obs;
      ASSERT_TRUE(found);
    }
  EXPECT_NE(in.data.middleRows(0, 3), in.data.middleRows(3, 3));

  // n = m draws with replacement: some row repeats with overwhelming probability.
  const InputBatch full = build_input(ds, 50, 1, rng);
  std::set<double> firsts;
  for (int c = 0; c < 50; ++c) firsts.insert(full.data(0, c));
  EXPECT_LT(firsts.size(), 50u);
  EXPECT_THROW(build_input(ds, 0, 1, rng), std::invalid_argument);
}

TEST(ComputeReward, DagRewardIsNegativeAdjustedScore) {
  const Dataset ds = chain_data(200, 2);
  SearchCaches caches;
  const ScoreSpec spec{};
  const ScoreBounds bounds = score_bounds(ds, spec, caches.rss);
  PenaltyState p;
  p.lambda1 = 3.0;
  p.lambda2 = 0.5;
  const AdjacencyMatrix g = edges(3, {{0, 1}, {1, 2}});
  const RewardRecord r = compute_reward(g, ds, spec, bounds, p, caches);
  EXPECT_TRUE(r.is_dag);
  EXPECT_EQ(r.h_value, 0.0);
  EXPECT_EQ(r.reward, -adjust_score(bic_score(g, ds, spec, caches.rss), bounds));
}

TEST(ComputeReward, TwoCycleCarriesBothPenalties) {
  Dataset ds;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  ds.samples.resize(100, 2);
  for (int k = 0; k < 100; ++k) {
    const double x = n(rng);
    ds.samples.row(k) << x, 0.5 * x + n(rng);
  }
  SearchCaches caches;
  const ScoreSpec spec{};
  const ScoreBounds bounds = score_bounds(ds, spec, caches.rss);
  PenaltyState p;
  p.lambda1 = 1.0;
  p.lambda2 = 0.01;
  const AdjacencyMatrix cyc = edges(2, {{0, 1}, {1, 0}});
  const double raw = bic_score(cyc, ds, spec, caches.rss);
  const double expect = -(adjust_score(raw, bounds) + 1.0 + 0.01 * (2.0 * std::cosh(1.0) - 2.0));
  const RewardRecord r = compute_reward(cyc, ds, spec, bounds, p, caches);
  EXPECT_FALSE(r.is_dag);
  EXPECT_NEAR(r.reward, expect, 1e-12);

  const auto fits = caches.rss.fits();
  const auto misses = caches.rewards.misses();
  const RewardRecord again = compute_reward(cyc, ds, spec, bounds, p, caches);
  EXPECT_EQ(again.reward, r.reward);
  EXPECT_EQ(caches.rss.fits(), fits);
  EXPECT_EQ(caches.rewards.misses(), misses);
}

TEST(UpdatePenalties, MinRules) {
  PenaltyState p = PenaltyState::initial(12);
  EXPECT_DOUBLE_EQ(p.lambda2, 1e-4);
  p.lambda2 = 1e-3;
  p.advance(100.0);
  EXPECT_DOUBLE_EQ(p.lambda2, 0.01);
  PenaltyState q;
  q.lambda1 = 0.0;
  q.delta1 = 1.0;
  q.advance(0.4);
  EXPECT_DOUBLE_EQ(q.lambda1, 0.4);
}

TEST(UpdatePenalties, CachedRewardsMatchFreshComputation) {
  SemSpec s;
  s.d = 4;
  s.m = 300;
  s.seed = 3;
  const Dataset ds = generate(s);
  const ScoreSpec spec{};
  SearchCaches caches;
  ScoreBounds bounds = score_bounds(ds, spec, caches.rss);
  PenaltyState p = PenaltyState::initial(4);

  std::mt19937_64 rng(2);
  std::bernoulli_distribution coin(0.3);
  double prev_upper = bounds.s_upper;
  for (int round = 0; round < 6; ++round) {
    for (int k = 0; k < 200; ++k) {
      AdjacencyMatrix a(4);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          if (i != j && coin(rng)) a.set_edge(i, j);
      caches.rewards.evaluate(a, ds, spec, bounds, p, caches.rss);
    }
    update_penalties(p, bounds, caches.rewards);
    EXPECT_LE(bounds.s_upper, prev_upper);
    prev_upper = bounds.s_upper;
    EXPECT_LE(p.lambda2, p.lambda2_cap);
    EXPECT_LE(p.lambda1, bounds.s_scale);
    caches.rewards.for_each([&](const RewardRecord& rec) {
      ASSERT_EQ(rec.reward, assemble_reward(rec.raw_score, rec.h_value, rec.is_dag, bounds, p));
    });
  }
  EXPECT_GT(caches.rewards.size(), 50u);
}

TEST(UpdatePenalties, UpperBoundTracksBestDagWhenItLeads) {
  RewardStore store;
  const Dataset ds = chain_data(200, 4);
  const ScoreSpec spec{};
  RssCache rss;
  ScoreBounds bounds = score_bounds(ds, spec, rss);
  PenaltyState p;
  p.lambda1 = 10.0;  // any cyclic graph trails every DAG
  const AdjacencyMatrix truth = *ds.truth;
  store.evaluate(truth, ds, spec, bounds, p, rss);
  store.evaluate(AdjacencyMatrix(3), ds, spec, bounds, p, rss);
  store.evaluate(edges(3, {{0, 1}, {1, 0}}), ds, spec, bounds, p, rss);
  const double truth_score = bic_score(truth, ds, spec, rss);
  update_penalties(p, bounds, store);
  EXPECT_EQ(bounds.s_upper, truth_score);

  // Cyclic leader: S_U must not move.
  RewardStore store2;
  ScoreBounds b2 = score_bounds(ds, spec, rss);
  PenaltyState zero;
  zero.lambda2 = 0.0;
  AdjacencyMatrix dense(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) dense.set_edge(i, j);
  store2.evaluate(dense, ds, spec, b2, zero, rss);
  store2.evaluate(AdjacencyMatrix(3), ds, spec, b2, zero, rss);
  ASSERT_FALSE(store2.max_reward()->is_dag);
  const double before = b2.s_upper;
  update_penalties(zero, b2, store2);
  EXPECT_EQ(b2.s_upper, before);
}

TEST(RewardStore, StoresEachGraphOnce) {
  const Dataset ds = chain_data(50, 1);
  const ScoreSpec spec{};
  RssCache rss;
  const ScoreBounds bounds = ScoreBounds::make(0.0, 1.0);
  PenaltyState p;
  RewardStore store;
  EXPECT_EQ(store.max_reward(), nullptr);
  store.evaluate(AdjacencyMatrix(3), ds, spec, bounds, p, rss);
  store.evaluate(AdjacencyMatrix(3), ds, spec, bounds, p, rss);
  EXPECT_EQ(store.size(), 1u);
  EXPECT_EQ(store.misses(), 1u);
}

TEST(PruneGreedy, RemovesSpuriousParent) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  Dataset ds;
  const int m = 5000;
  ds.samples.resize(m, 3);
  for (int k = 0; k < m; ++k) {
    const double x0 = n(rng), x1 = n(rng);
    ds.samples.row(k) << x0, x1, 1.2 * x0 + n(rng);
  }
  const AdjacencyMatrix est = edges(3, {{0, 2}, {1, 2}});
  const AdjacencyMatrix pruned = prune_greedy(est, ds, ScoreSpec{}, 0.05);
  EXPECT_EQ(pruned, edges(3, {{0, 2}}));
  EXPECT_EQ(prune_greedy(est, ds, ScoreSpec{}, std::numeric_limits<double>::infinity()), AdjacencyMatrix(3));
}

TEST(PruneGreedy, ZeroToleranceOnExactFitKeepsNeededParents) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  Dataset ds;
  ds.samples.resize(100, 4);
  for (int k = 0; k < 100; ++k) {
    const double x0 = n(rng), x1 = n(rng), x3 = n(rng);
    ds.samples.row(k) << x0, x1, 2.0 * x0 - x1, x3;
  }
  const AdjacencyMatrix est = edges(4, {{0, 2}, {1, 2}, {3, 2}});
  const AdjacencyMatrix pruned = prune_greedy(est, ds, ScoreSpec{}, 0.0);
  EXPECT_TRUE(pruned.has_edge(0, 2));
  EXPECT_TRUE(pruned.has_edge(1, 2));
}

TEST(PruneThreshold, LinearCoefficients) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  Dataset ds;
  ds.samples.resize(20000, 3);
  for (int k = 0; k < 20000; ++k) {
    const double x0 = n(rng), x1 = n(rng);
    ds.samples.row(k) << x0, x1, 0.2 * x0 + 0.31 * x1 + 1e-3 * n(rng);
  }
  const AdjacencyMatrix est = edges(3, {{0, 2}, {1, 2}});
  EXPECT_EQ(prune_threshold(ds, est, 0.3, RegressorSpec{}), edges(3, {{1, 2}}));
}

TEST(PruneThreshold, ProductTermKeepsBothParents) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n;
  Dataset ds;
  ds.samples.resize(2000, 4);
  for (int k = 0; k < 2000; ++k) {
    const double x0 = n(rng), x1 = n(rng), x3 = n(rng);
    ds.samples.row(k) << x0, x1, 0.8 * x0 * x1 + 0.1 * n(rng), x3;
  }
  RegressorSpec quad;
  quad.kind = RegressorKind::quadratic;
  const AdjacencyMatrix est = edges(4, {{0, 2}, {1, 2}, {3, 2}});
  EXPECT_EQ(prune_threshold(ds, est, 0.3, quad), edges(4, {{0, 2}, {1, 2}}));
  RegressorSpec gpr;
  gpr.kind = RegressorKind::gpr;
  EXPECT_THROW(prune_threshold(ds, est, 0.3, gpr), std::invalid_argument);
}

TEST(Prune, NeverAddsEdgesAndKeepsDags) {
  SemSpec s;
  s.d = 6;
  s.m = 500;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    s.seed = seed;
    const Dataset ds = generate(s);
    std::mt19937_64 rng(seed);
    const AdjacencyMatrix dense = random_dag(6, 0.8, rng).graph;
    for (PruneKind kind : {PruneKind::none, PruneKind::threshold, PruneKind::greedy}) {
      PruneSpec ps;
      ps.kind = kind;
      RssCache cache;
      const AdjacencyMatrix out = prune(dense, ds, ScoreSpec{}, ps, cache);
      EXPECT_TRUE(is_dag(out));
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
          if (out.has_edge(i, j)) {
            EXPECT_TRUE(dense.has_edge(i, j));
          }
      if (kind == PruneKind::none) {
        EXPECT_EQ(out, dense);
      }
    }
  }
  EXPECT_EQ(prune_kind_from_string("greedy"), PruneKind::greedy);
  EXPECT_THROW(prune_kind_from_string("magic"), std::invalid_argument);
}

TEST(SearchConfig, Validation) {
  SearchConfig cfg;
  EXPECT_NO_THROW(validate(cfg));
  cfg.batch = 0;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg = SearchConfig{};
  cfg.input_samples = 0;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg = SearchConfig{};
  cfg.penalty.update_every = 0;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
}

TEST(Train, SmallRunInvariantsAndDeterminism) {
  const Dataset ds = chain_data(300, 11);
  const SearchConfig cfg = tiny_config(60, 5);
  std::vector<double> uppers;
  const SearchResult a = train(ds, cfg, [&](const CurvePoint& p, const SearchResult&) { uppers.push_back(p.s_upper); });
  const SearchResult b = train(ds, cfg);

  ASSERT_EQ(a.curve.size(), 60u);
  for (std::size_t k = 1; k < uppers.size(); ++k) EXPECT_LE(uppers[k], uppers[k - 1]);
  // The initial 10^-ceil(d/3) may sit above the cap; the cap binds from the first update on.
  for (const auto& p : a.curve)
    if (p.iter > cfg.penalty.update_every) {
      EXPECT_LE(p.lambda2, cfg.penalty.lambda2_cap);
    }
  ASSERT_TRUE(a.found_dag);
  EXPECT_TRUE(is_dag(a.best_graph_raw));
  EXPECT_TRUE(is_dag(a.best_graph_pruned));
  RssCache cache;
  EXPECT_EQ(a.best_score, bic_score(a.best_graph_raw, ds, cfg.score, cache));
  EXPECT_EQ(a.pruned_score, bic_score(a.best_graph_pruned, ds, cfg.score, cache));
  EXPECT_GT(a.graphs_seen, 0u);

  EXPECT_EQ(a.best_graph_raw, b.best_graph_raw);
  EXPECT_EQ(a.best_score, b.best_score);
  EXPECT_EQ(a.graphs_seen, b.graphs_seen);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t k = 0; k < a.curve.size(); ++k) {
    EXPECT_EQ(a.curve[k].max_reward, b.curve[k].max_reward);
    EXPECT_EQ(a.curve[k].mean_reward, b.curve[k].mean_reward);
  }
  const SearchResult c = train(ds, tiny_config(60, 6));
  EXPECT_NE(a.curve.back().mean_reward, c.curve.back().mean_reward);
}

TEST(Train, CurveCsvHeader) {
  const Dataset ds = chain_data(100, 12);
  const SearchResult r = train(ds, tiny_config(5, 1));
  const auto path = (std::filesystem::temp_directory_path() / "rlcd_curve.csv").string();
  save_curve_csv(r.curve, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "iter,max_reward,mean_reward,lambda1,lambda2,s_upper");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace rlcd
