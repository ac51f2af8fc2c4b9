#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "rlcd/runner.hpp"

namespace {

using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct ConfigArgs {
  std::string config_path;
  std::string out;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON run configuration");
  cmd->add_option("--seed", args.seed, "Master seed (overrides the config)");
  cmd->add_option("--out", args.out, "Output directory (overrides the config)");
  cmd->add_option("--set", args.overrides, "Override a config field: dotted.key=value")->take_all();
}

rlcd::RunConfig load_config(const ConfigArgs& args) {
  json j = args.config_path.empty() ? json::object() : rlcd::read_json_file(args.config_path);
  for (const auto& o : args.overrides) rlcd::apply_override(j, o);
  if (args.seed) j["seed"] = *args.seed;
  if (!args.out.empty()) j["out_dir"] = args.out;
  return rlcd::parse_run_config(j);
}

void report_error(const char* kind, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Score-based causal discovery with an actor-critic graph generator"};
  app.require_subcommand(1);

  ConfigArgs gen_args, train_args, prune_args, oracle_args;
  std::string prune_graph, est_path, truth_path;
  bool quiet = false;

  auto* gen = app.add_subcommand("generate", "Sample a synthetic dataset and its ground truth");
  add_config_flags(gen, gen_args);

  auto* train = app.add_subcommand("train", "Run the search, prune, and evaluate");
  add_config_flags(train, train_args);
  train->add_flag("--quiet", quiet, "No progress output");

  auto* prune = app.add_subcommand("prune", "Prune a given DAG against the configured data");
  add_config_flags(prune, prune_args);
  prune->add_option("--graph", prune_graph, "Adjacency CSV to prune")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Compare an estimated graph against the truth");
  evaluate->add_option("--est", est_path, "Estimated adjacency CSV")->required();
  evaluate->add_option("--truth", truth_path, "True adjacency CSV")->required();

  auto* oracle = app.add_subcommand("oracle", "Exhaustive DAG search (d <= 5)");
  add_config_flags(oracle, oracle_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      rlcd::RunConfig cfg = load_config(gen_args);
      rlcd::run_generate(cfg);
      std::cout << json{{"out_dir", cfg.out_dir}}.dump() << '\n';
    } else if (train->parsed()) {
      const rlcd::RunConfig cfg = load_config(train_args);
      const auto outcome = rlcd::run_train(cfg, quiet ? nullptr : &std::cerr);
      std::cout << outcome.metrics.dump(2) << '\n';
      if (!outcome.result.found_dag) return kExitRuntime;
    } else if (prune->parsed()) {
      rlcd::RunConfig cfg = load_config(prune_args);
      const rlcd::AdjacencyMatrix pruned = rlcd::run_prune(cfg, rlcd::load_adjacency_csv(prune_graph));
      if (!prune_args.out.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        rlcd::save_adjacency_csv(pruned, (std::filesystem::path(cfg.out_dir) / "estimated_pruned.csv").string());
      }
      std::cout << json{{"graph", rlcd::to_json(pruned)}, {"edges", pruned.edge_count()}}.dump() << '\n';
    } else if (evaluate->parsed()) {
      const auto est = rlcd::load_adjacency_csv(est_path);
      const auto truth = rlcd::load_adjacency_csv(truth_path);
      std::cout << rlcd::to_json(rlcd::evaluate_graph(est, truth)).dump() << '\n';
    } else if (oracle->parsed()) {
      const auto best = rlcd::run_oracle(load_config(oracle_args));
      std::cout << json{{"score", best.score}, {"dags", best.dags}, {"graph", rlcd::to_json(best.graph)}}.dump()
                << '\n';
    }
  } catch (const rlcd::ConfigError& e) {
    report_error("config", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    report_error("runtime", e.what());
    return kExitRuntime;
  }
  return 0;
}
