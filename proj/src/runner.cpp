#include "rlcd/runner.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>

namespace rlcd {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir);
  return fs::path(dir);
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

json to_json(const MetricsReport& m) {
  return json{{"fdr", m.fdr}, {"tpr", m.tpr}, {"shd", m.shd}, {"n_edges_est", m.n_edges_est},
              {"n_edges_true", m.n_edges_true}};
}

json to_json(const AdjacencyMatrix& a) {
  json rows = json::array();
  for (int i = 0; i < a.nodes(); ++i) {
    json row = json::array();
    for (int j = 0; j < a.nodes(); ++j) row.push_back(a.has_edge(i, j) ? 1 : 0);
    rows.push_back(row);
  }
  return rows;
}

Dataset prepare_dataset(RunConfig& config, Dataset* raw) {
  Dataset ds;
  if (config.data.sem) {
    ds = generate(*config.data.sem);
  } else {
    ds = load_csv(*config.data.path);
    if (config.data.truth_path) {
      ds.truth = load_adjacency_csv(*config.data.truth_path);
      if (ds.truth->nodes() != ds.vars())
        throw ConfigError("data.truth: graph has " + std::to_string(ds.truth->nodes()) + " nodes but data has " +
                          std::to_string(ds.vars()) + " columns");
    }
  }
  if (raw) *raw = ds;
  if (config.preprocess.outlier_keep > 0) {
    if (config.preprocess.outlier_keep > ds.rows())
      throw ConfigError("preprocess.outlier_keep: exceeds the number of samples");
    ds = remove_outliers(ds, config.preprocess.outlier_keep);
  }
  if (config.preprocess.normalize) ds = normalize(ds);
  if (!config.search.penalty.lambda2_init)
    config.search.penalty.lambda2_init = PenaltyState::initial(ds.vars()).lambda2;
  return ds;
}

void run_generate(RunConfig config) {
  if (!config.data.sem) throw ConfigError("generate needs data.sem");
  Dataset raw;
  prepare_dataset(config, &raw);
  const fs::path out = ensure_out_dir(config.out_dir);
  write_json(to_json(config), out / "config.json");
  save_csv(raw, (out / "dataset.csv").string());
  if (raw.truth) save_adjacency_csv(*raw.truth, (out / "truth.csv").string());
  if (raw.weights) save_matrix_csv(*raw.weights, (out / "weights.csv").string());
}

TrainOutcome run_train(RunConfig config, std::ostream* log) {
  const auto start = std::chrono::steady_clock::now();
  Dataset raw;
  const Dataset ds = prepare_dataset(config, &raw);
  const fs::path out = ensure_out_dir(config.out_dir);
  write_json(to_json(config), out / "config.json");
  if (config.data.sem) save_csv(raw, (out / "dataset.csv").string());
  if (ds.truth) save_adjacency_csv(*ds.truth, (out / "truth.csv").string());

  ProgressFn progress;
  if (log) {
    const int every = std::max(1, config.search.iterations / 20);
    progress = [log, every, total = config.search.iterations](const CurvePoint& p, const SearchResult& r) {
      if (p.iter % every != 0 && p.iter != total) return;
      *log << "iter " << p.iter << "/" << total << "  max_reward " << p.max_reward << "  mean_reward "
           << p.mean_reward << "  lambda1 " << p.lambda1 << "  lambda2 " << p.lambda2 << "  graphs "
           << r.graphs_seen << std::endl;
    };
  }
  PolicyParams params;
  TrainOutcome outcome;
  outcome.result = train(ds, config.search, progress, config.save_checkpoint ? &params : nullptr);
  const SearchResult& r = outcome.result;

  save_curve_csv(r.curve, (out / "curve.csv").string());
  if (config.save_checkpoint) save_checkpoint(params, (out / "policy.ckpt").string());

  json metrics{{"schema_version", kMetricsSchemaVersion},
               {"found_dag", r.found_dag},
               {"iterations", static_cast<int>(r.curve.size())},
               {"graphs_seen", r.graphs_seen},
               {"score_lower", r.initial_bounds.s_lower},
               {"score_upper_initial", r.initial_bounds.s_upper},
               {"score_upper_final", r.final_bounds.s_upper}};
  if (r.found_dag) {
    save_adjacency_csv(r.best_graph_raw, (out / "estimated_raw.csv").string());
    save_adjacency_csv(r.best_graph_pruned, (out / "estimated_pruned.csv").string());
    metrics["best_score"] = r.best_score;
    metrics["pruned_score"] = r.pruned_score;
    if (ds.truth) {
      metrics["raw"] = to_json(evaluate_graph(r.best_graph_raw, *ds.truth));
      const MetricsReport pruned = evaluate_graph(r.best_graph_pruned, *ds.truth);
      metrics["fdr"] = pruned.fdr;
      metrics["tpr"] = pruned.tpr;
      metrics["shd"] = pruned.shd;
      metrics["n_edges_est"] = pruned.n_edges_est;
      metrics["n_edges_true"] = pruned.n_edges_true;
    }
  } else {
    metrics["failure"] = "no DAG was sampled during training";
    if (r.best_cyclic) {
      metrics["best_cyclic_graph"] = to_json(*r.best_cyclic);
      metrics["best_cyclic_h"] = r.best_cyclic_h;
    }
  }
  metrics["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(metrics, out / "metrics.json");
  outcome.metrics = std::move(metrics);
  return outcome;
}

AdjacencyMatrix run_prune(RunConfig config, const AdjacencyMatrix& graph) {
  const Dataset ds = prepare_dataset(config, nullptr);
  if (graph.nodes() != ds.vars())
    throw ConfigError("graph has " + std::to_string(graph.nodes()) + " nodes but data has " +
                      std::to_string(ds.vars()) + " columns");
  if (!is_dag(graph)) throw std::invalid_argument("pruning needs an acyclic graph");
  RssCache cache;
  return prune(graph, ds, config.search.score, config.search.prune, cache);
}

OracleResult run_oracle(const Dataset& ds, const ScoreSpec& spec, RssCache& cache) {
  if (ds.vars() > 5) throw std::invalid_argument("oracle supports at most 5 variables");
  OracleResult best;
  best.score = std::numeric_limits<double>::infinity();
  for_each_dag(ds.vars(), [&](const AdjacencyMatrix& g) {
    ++best.dags;
    const double s = bic_score(g, ds, spec, cache);
    if (s < best.score) {
      best.score = s;
      best.graph = g;
    }
  });
  return best;
}

OracleResult run_oracle(RunConfig config) {
  const Dataset ds = prepare_dataset(config, nullptr);
  RssCache cache;
  return run_oracle(ds, config.search.score, cache);
}

}  // namespace rlcd
