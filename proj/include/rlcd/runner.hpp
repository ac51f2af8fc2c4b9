#pragma once

#include <iosfwd>
#include <string>

#include "json.hpp"

#include "rlcd/run_config.hpp"

namespace rlcd {

inline constexpr int kMetricsSchemaVersion = 1;

/// Generates or loads the data, applies preprocessing, and fills defaults
/// that depend on the variable count. `raw` receives the data before
/// preprocessing when non-null.
Dataset prepare_dataset(RunConfig& config, Dataset* raw = nullptr);

/// Writes config.json, dataset.csv and truth.csv (when known) to out_dir.
void run_generate(RunConfig config);

struct TrainOutcome {
  SearchResult result;
  nlohmann::json metrics;
};

/// Full pipeline: data, search, pruning, evaluation. Writes config.json,
/// dataset.csv, truth.csv, estimated_raw.csv, estimated_pruned.csv,
/// curve.csv, and metrics.json to out_dir. Progress goes to `log` if given.
TrainOutcome run_train(RunConfig config, std::ostream* log = nullptr);

/// Prunes a user-supplied graph against the configured data.
AdjacencyMatrix run_prune(RunConfig config, const AdjacencyMatrix& graph);

struct OracleResult {
  AdjacencyMatrix graph;
  double score = 0.0;
  std::size_t dags = 0;
};

/// Exhaustive search over every DAG on d <= 5 nodes. Ties keep the first DAG
/// in enumeration order.
OracleResult run_oracle(const Dataset& ds, const ScoreSpec& spec, RssCache& cache);
OracleResult run_oracle(RunConfig config);

nlohmann::json to_json(const MetricsReport& m);
nlohmann::json to_json(const AdjacencyMatrix& a);

}  // namespace rlcd
