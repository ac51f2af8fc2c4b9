#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "rlcd/runner.hpp"

namespace rlcd {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rlcd_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json tiny_train_config(const fs::path& out, int d, std::uint64_t seed) {
  return json{{"seed", seed},
              {"out_dir", out.string()},
              {"data", {{"sem", {{"kind", "linear_gauss"}, {"d", d}, {"m", 300}}}}},
              {"hyper",
               {{"iterations", 40}, {"n", 16}, {"batch", 8}, {"d_e", 8}, {"heads", 2}, {"layers", 1}, {"ff_dim", 16},
                {"d_h", 4}, {"critic_hidden", 8}}},
              {"penalty", {{"update_every", 10}}}};
}

int run_cli(const std::string& args, std::string* out = nullptr) {
  const fs::path log = fs::temp_directory_path() / "rlcd_cli_stdout.txt";
  const std::string cmd = std::string(RLCD_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (out) *out = slurp(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(RunConfig, DefaultsAndRoundTrip) {
  const json j{{"seed", 7}, {"data", {{"sem", {{"kind", "linear_gauss"}}}}}};
  const RunConfig c = parse_run_config(j);
  EXPECT_EQ(c.search.seed, 7u);
  ASSERT_TRUE(c.data.sem);
  EXPECT_EQ(c.data.sem->seed, 7u);
  EXPECT_EQ(c.data.sem->d, 12);
  EXPECT_EQ(c.search.iterations, 20000);
  EXPECT_EQ(c.search.batch, 64);
  EXPECT_EQ(c.search.input_samples, 64);
  EXPECT_EQ(c.search.score.variant, BicVariant::equal);
  EXPECT_EQ(c.search.prune.kind, PruneKind::threshold);
  EXPECT_DOUBLE_EQ(c.search.prune.threshold, 0.3);
  EXPECT_FALSE(c.preprocess.normalize);

  const json resolved = to_json(c);
  const RunConfig again = parse_run_config(resolved);
  EXPECT_EQ(to_json(again), resolved);
  // Every default is echoed.
  for (const char* key : {"seed", "out_dir", "data", "preprocess", "score", "hyper", "penalty", "prune",
                          "decoder_variant", "sparse_prior"})
    EXPECT_TRUE(resolved.contains(key)) << key;
}

TEST(RunConfig, KindDependentDefaults) {
  const RunConfig q = parse_run_config(json{{"seed", 1}, {"data", {{"sem", {{"kind", "quadratic"}}}}}});
  EXPECT_EQ(q.preprocess.outlier_keep, 3000);
  EXPECT_EQ(q.search.score.regressor.kind, RegressorKind::quadratic);
  const RunConfig g = parse_run_config(json{{"seed", 1}, {"data", {{"sem", {{"kind", "gaussian_process"}}}}}});
  EXPECT_TRUE(g.preprocess.normalize);
  EXPECT_EQ(g.search.score.regressor.kind, RegressorKind::gpr);
  EXPECT_EQ(g.search.prune.kind, PruneKind::greedy);
}

TEST(RunConfig, StrictParsing) {
  const json base{{"seed", 1}, {"data", {{"sem", {{"kind", "linear_gauss"}}}}}};
  json j = base;
  j.erase("seed");
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = base;
  j["hyper"] = {{"iteratons", 5}};
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = base;
  j["hyper"] = {{"iterations", "many"}};
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = base;
  j["data"]["path"] = "x.csv";
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = base;
  j["score"] = {{"variant", "bge"}};
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = base;
  j["hyper"] = {{"batch", 0}};
  EXPECT_THROW(parse_run_config(j), ConfigError);
}

TEST(RunConfig, Overrides) {
  json j{{"seed", 1}};
  apply_override(j, "hyper.iterations=12");
  apply_override(j, "score.variant=bic_separate");
  apply_override(j, R"(data.sem={"kind":"linear_gauss","d":3})");
  EXPECT_EQ(j["hyper"]["iterations"], 12);
  EXPECT_EQ(j["score"]["variant"], "bic_separate");
  EXPECT_EQ(j["data"]["sem"]["d"], 3);
  EXPECT_THROW(apply_override(j, "novalue"), ConfigError);
}

TEST(Runner, TrainWritesArtifactsAndIsReproducible) {
  const fs::path a = scratch("train_a"), b = scratch("train_b");
  const auto oa = run_train(parse_run_config(tiny_train_config(a, 3, 4)));
  const auto ob = run_train(parse_run_config(tiny_train_config(b, 3, 4)));
  for (const char* f : {"config.json", "dataset.csv", "truth.csv", "estimated_raw.csv", "estimated_pruned.csv",
                        "curve.csv", "metrics.json"})
    EXPECT_TRUE(fs::exists(a / f)) << f;
  for (const char* f : {"dataset.csv", "truth.csv", "estimated_raw.csv", "estimated_pruned.csv", "curve.csv"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  json ma = json::parse(slurp(a / "metrics.json")), mb = json::parse(slurp(b / "metrics.json"));
  EXPECT_EQ(ma["schema_version"], 1);
  for (const char* k : {"fdr", "tpr", "shd", "best_score", "graphs_seen", "wall_time_seconds"})
    EXPECT_TRUE(ma.contains(k)) << k;
  ma.erase("wall_time_seconds");
  mb.erase("wall_time_seconds");
  EXPECT_EQ(ma, mb);

  // The artifacts alone reproduce the run.
  json cfg = json::parse(slurp(a / "config.json"));
  cfg["data"] = {{"path", (a / "dataset.csv").string()}, {"truth", (a / "truth.csv").string()}};
  const fs::path c = scratch("train_c");
  cfg["out_dir"] = c.string();
  run_train(parse_run_config(cfg));
  EXPECT_EQ(slurp(a / "estimated_raw.csv"), slurp(c / "estimated_raw.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}

TEST(Runner, OracleIsMinimalAndMatchesEnumeration) {
  RunConfig cfg = parse_run_config(json{{"seed", 2}, {"data", {{"sem", {{"kind", "linear_gauss"}, {"d", 4}, {"m", 500}}}}}});
  const OracleResult best = run_oracle(cfg);
  EXPECT_EQ(best.dags, 543u);
  const Dataset ds = prepare_dataset(cfg);
  RssCache cache;
  for (const auto& g : enumerate_dags(4)) EXPECT_LE(best.score, bic_score(g, ds, cfg.search.score, cache));
  EXPECT_EQ(best.score, bic_score(best.graph, ds, cfg.search.score, cache));

  Dataset one;
  one.samples = Eigen::MatrixXd::Random(20, 1);
  RssCache c1;
  EXPECT_EQ(run_oracle(one, ScoreSpec{}, c1).graph, AdjacencyMatrix(1));
}

TEST(Runner, OracleFindsTheSingleEdgeOnZeroNoisePair) {
  Dataset ds;
  ds.samples.resize(50, 2);
  for (int k = 0; k < 50; ++k) ds.samples.row(k) << 0.1 * k - 2.0, 3.0 * (0.1 * k - 2.0);
  RssCache cache;
  const OracleResult r = run_oracle(ds, ScoreSpec{BicVariant::separate, {}}, cache);
  EXPECT_EQ(r.graph.edge_count(), 1);
  // Both orientations fit exactly; the clamped RSS makes them tie far below the empty graph.
  const double empty = bic_score(AdjacencyMatrix(2), ds, ScoreSpec{BicVariant::separate, {}}, cache);
  EXPECT_LT(r.score, empty - 1000.0);
}

TEST(Cli, ExitCodes) {
  std::string out;
  EXPECT_EQ(run_cli("", &out), 2);
  EXPECT_EQ(run_cli("frobnicate", &out), 2);
  EXPECT_EQ(run_cli("train --config /nonexistent/config.json", &out), 2);
  EXPECT_NE(out.find("\"kind\":\"config\""), std::string::npos) << out;
  EXPECT_EQ(run_cli("train --seed 1 --set hyper.iteratons=3 --set data.sem={\\\"kind\\\":\\\"linear_gauss\\\"}", &out), 2);
  EXPECT_NE(out.find("iteratons"), std::string::npos) << out;
  EXPECT_EQ(run_cli("--help", &out), 0);
}

TEST(Cli, GenerateOracleEvaluatePrune) {
  const fs::path dir = scratch("pipeline");
  const std::string sem = "--set 'data.sem={\"kind\":\"linear_gauss\",\"d\":4,\"m\":400}'";
  std::string out;
  ASSERT_EQ(run_cli("generate --seed 3 --out " + dir.string() + " " + sem, &out), 0) << out;
  EXPECT_TRUE(fs::exists(dir / "dataset.csv"));
  EXPECT_TRUE(fs::exists(dir / "truth.csv"));

  ASSERT_EQ(run_cli("evaluate --est " + (dir / "truth.csv").string() + " --truth " + (dir / "truth.csv").string(), &out),
            0);
  EXPECT_EQ(json::parse(out)["shd"], 0);

  {
    std::ofstream small(dir / "small.csv");
    small << "0,1\n0,0\n";
  }
  EXPECT_EQ(run_cli("evaluate --est " + (dir / "small.csv").string() + " --truth " + (dir / "truth.csv").string(), &out),
            3);

  ASSERT_EQ(run_cli("oracle --seed 3 " + sem, &out), 0) << out;
  const json oracle = json::parse(out);
  EXPECT_EQ(oracle["dags"], 543);

  const std::string data = "--set data.path=" + (dir / "dataset.csv").string();
  ASSERT_EQ(run_cli("prune --seed 3 " + data + " --graph " + (dir / "truth.csv").string(), &out), 0) << out;
  EXPECT_LE(json::parse(out)["edges"].get<int>(), load_adjacency_csv((dir / "truth.csv").string()).edge_count());

  // A cyclic graph cannot be pruned.
  {
    std::ofstream cyc(dir / "cyclic.csv");
    cyc << "0,1,0,0\n1,0,0,0\n0,0,0,0\n0,0,0,0\n";
  }
  EXPECT_EQ(run_cli("prune --seed 3 " + data + " --graph " + (dir / "cyclic.csv").string(), &out), 3);
  fs::remove_all(dir);
}

TEST(Cli, TrainMatchesOracleCrossCheckFields) {
  const fs::path dir = scratch("train_cli");
  std::ofstream(dir.string() + ".json") << tiny_train_config(dir, 3, 9).dump();
  std::string out;
  ASSERT_EQ(run_cli("train --quiet --config " + dir.string() + ".json", &out), 0) << out;
  const json metrics = json::parse(slurp(dir / "metrics.json"));
  EXPECT_TRUE(metrics["found_dag"].get<bool>());
  ASSERT_EQ(run_cli("oracle --config " + dir.string() + ".json", &out), 0) << out;
  EXPECT_LE(json::parse(out)["score"].get<double>(), metrics["best_score"].get<double>());
  fs::remove_all(dir);
  fs::remove(dir.string() + ".json");
}

}  // namespace
}  // namespace rlcd
