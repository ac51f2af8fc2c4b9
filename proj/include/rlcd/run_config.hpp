#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "rlcd/datagen.hpp"
#include "rlcd/rl_search.hpp"

namespace rlcd {

/// Invalid or inconsistent configuration. The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSource {
  std::optional<std::string> path;        ///< CSV of samples
  std::optional<std::string> truth_path;  ///< optional CSV adjacency for `path`
  std::optional<SemSpec> sem;             ///< synthetic generator
};

struct PreprocessSpec {
  bool normalize = false;
  int outlier_keep = 0;  ///< 0 keeps every sample
};

struct RunConfig {
  DataSource data;
  PreprocessSpec preprocess;
  SearchConfig search;  ///< score, decoder, sparse prior, hyperparameters, penalties, pruning, seed
  std::string out_dir = "out";
  bool save_checkpoint = false;
};

/// Strict parse: unknown keys, wrong types, and missing required fields throw
/// ConfigError. Defaults that depend on the data kind are resolved here.
RunConfig parse_run_config(const nlohmann::json& j);

/// Fully resolved form; parse_run_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& c);

/// Applies `dotted.key=value`; the value is parsed as JSON and otherwise taken
/// as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

nlohmann::json read_json_file(const std::string& path);

}  // namespace rlcd
