#include "rlcd/run_config.hpp"

#include <fstream>
#include <set>

namespace rlcd {

using nlohmann::json;

namespace {

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    return convert<T>(j_.at(key), key);
  }

  template <class T>
  std::optional<T> maybe(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) return std::nullopt;
    return convert<T>(j_.at(key), key);
  }

  template <class T>
  T require(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) throw ConfigError(path(key) + ": required field missing");
    return convert<T>(j_.at(key), key);
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    return has(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError(path(key) + ": unknown field");
  }

 private:
  template <class T>
  T convert(const json& v, const std::string& key) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path(key) + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw ConfigError(path(key) + ": expected a non-negative integer");
      return v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
      return v.get<T>();
    } else {
      if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
      return v.get<T>();
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <class F>
auto config_check(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// Missing sections read as empty objects.
const json& section(ObjectReader& top, const std::string& key) {
  static const json empty = json::object();
  const json* j = top.child(key);
  return j ? *j : empty;
}

SemSpec parse_sem(const json& j, std::uint64_t default_seed) {
  ObjectReader r(j, "data.sem");
  const SemKind kind = config_check([&] { return sem_kind_from_string(r.require<std::string>("kind")); });
  SemSpec s;
  switch (kind) {
    case SemKind::quadratic: s = quadratic_regime(default_seed); break;
    case SemKind::gaussian_process: s = gp_regime(default_seed); break;
    default: s = linear_regime(kind, default_seed); break;
  }
  s.d = r.get("d", s.d);
  s.m = r.get("m", s.m);
  s.edge_prob = r.get("edge_prob", s.edge_prob);
  s.weight_low = r.get("weight_low", s.weight_low);
  s.weight_high = r.get("weight_high", s.weight_high);
  s.noise_var_low = r.get("noise_var_low", s.noise_var_low);
  s.noise_var_high = r.get("noise_var_high", s.noise_var_high);
  s.target_edges = r.get("target_edges", s.target_edges);
  s.max_graph_draws = r.get("max_graph_draws", s.max_graph_draws);
  s.seed = r.get("seed", s.seed);
  r.finish();
  config_check([&] {
    validate(s);
    return 0;
  });
  return s;
}

json sem_to_json(const SemSpec& s) {
  return json{{"kind", to_string(s.kind)},
              {"d", s.d},
              {"m", s.m},
              {"edge_prob", s.edge_prob},
              {"weight_low", s.weight_low},
              {"weight_high", s.weight_high},
              {"noise_var_low", s.noise_var_low},
              {"noise_var_high", s.noise_var_high},
              {"target_edges", s.target_edges},
              {"max_graph_draws", s.max_graph_draws},
              {"seed", s.seed}};
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  ObjectReader top(j, "");
  RunConfig c;
  SearchConfig& s = c.search;
  s.seed = top.require<std::uint64_t>("seed");
  c.out_dir = top.get<std::string>("out_dir", c.out_dir);
  c.save_checkpoint = top.get("checkpoint", c.save_checkpoint);

  const json* data = top.child("data");
  if (!data) throw ConfigError("data: required field missing");
  {
    ObjectReader r(*data, "data");
    c.data.path = r.maybe<std::string>("path");
    c.data.truth_path = r.maybe<std::string>("truth");
    if (const json* sem = r.child("sem")) c.data.sem = parse_sem(*sem, s.seed);
    r.finish();
    if (c.data.path.has_value() == c.data.sem.has_value())
      throw ConfigError("data: exactly one of data.path and data.sem must be given");
    if (c.data.truth_path && !c.data.path) throw ConfigError("data.truth: only valid together with data.path");
  }
  const SemKind kind = c.data.sem ? c.data.sem->kind : SemKind::linear_gauss;

  {
    ObjectReader r(section(top, "preprocess"), "preprocess");
    c.preprocess.normalize = r.get("normalize", kind == SemKind::gaussian_process && c.data.sem.has_value());
    c.preprocess.outlier_keep = r.get("outlier_keep", kind == SemKind::quadratic && c.data.sem ? 3000 : 0);
    r.finish();
    if (c.preprocess.outlier_keep < 0) throw ConfigError("preprocess.outlier_keep: must be >= 0");
  }
  {
    ObjectReader r(section(top, "score"), "score");
    s.score.variant = config_check([&] { return bic_variant_from_string(r.get<std::string>("variant", "bic_equal")); });
    std::string reg = "ols";
    if (kind == SemKind::quadratic) reg = "quadratic";
    if (kind == SemKind::gaussian_process) reg = "gpr";
    s.score.regressor.kind = config_check([&] { return regressor_kind_from_string(r.get("regressor", reg)); });
    s.score.regressor.gpr_bandwidth = r.maybe<double>("gpr_bandwidth");
    s.score.regressor.gpr_jitter = r.get("gpr_jitter", s.score.regressor.gpr_jitter);
    r.finish();
  }
  s.shape.decoder =
      config_check([&] { return decoder_kind_from_string(top.get<std::string>("decoder_variant", "single_layer")); });
  s.sparse_prior = top.get("sparse_prior", s.sparse_prior);
  {
    ObjectReader r(section(top, "hyper"), "hyper");
    s.iterations = r.get("iterations", s.iterations);
    s.input_samples = r.get("n", s.input_samples);
    s.batch = r.get("batch", s.batch);
    s.shape.embed_dim = r.get("d_e", s.shape.embed_dim);
    s.shape.heads = r.get("heads", s.shape.heads);
    s.shape.layers = r.get("layers", s.shape.layers);
    s.shape.ff_dim = r.get("ff_dim", s.shape.ff_dim);
    s.shape.decoder_hidden = r.get("d_h", s.shape.decoder_hidden);
    s.shape.ntn_slices = r.get("ntn_slices", s.shape.ntn_slices);
    s.shape.critic_hidden = r.get("critic_hidden", s.shape.critic_hidden);
    s.hyper.entropy_weight = r.get("entropy_weight", s.hyper.entropy_weight);
    s.hyper.actor_lr = r.get("actor_lr", s.hyper.actor_lr);
    s.hyper.critic_lr = r.get("critic_lr", s.hyper.critic_lr);
    s.hyper.grad_clip = r.get("grad_clip", s.hyper.grad_clip);
    s.s_scale = r.get("s_scale", s.s_scale);
    r.finish();
  }
  {
    ObjectReader r(section(top, "penalty"), "penalty");
    s.penalty.lambda1_init = r.get("lambda1_init", s.penalty.lambda1_init);
    s.penalty.delta1 = r.get("delta1", s.penalty.delta1);
    s.penalty.lambda2_init = r.maybe<double>("lambda2_init");
    s.penalty.delta2 = r.get("delta2", s.penalty.delta2);
    s.penalty.lambda2_cap = r.get("lambda2_cap", s.penalty.lambda2_cap);
    s.penalty.update_every = r.get("update_every", s.penalty.update_every);
    r.finish();
    if (!s.penalty.lambda2_init && c.data.sem) s.penalty.lambda2_init = PenaltyState::initial(c.data.sem->d).lambda2;
  }
  {
    ObjectReader r(section(top, "prune"), "prune");
    const std::string fallback = s.score.regressor.kind == RegressorKind::gpr ? "greedy" : "threshold";
    s.prune.kind = config_check([&] { return prune_kind_from_string(r.get("method", fallback)); });
    s.prune.threshold = r.get("threshold", s.prune.threshold);
    s.prune.tolerance = r.get("tolerance", s.prune.tolerance);
    r.finish();
  }
  top.finish();

  config_check([&] {
    validate(s);
    PolicyShape shape = s.shape;
    shape.nodes = 1;
    shape.input_dim = s.input_samples;
    validate(shape);
    return 0;
  });
  if (c.data.sem && c.preprocess.outlier_keep > c.data.sem->m)
    throw ConfigError("preprocess.outlier_keep: exceeds data.sem.m");
  if (c.out_dir.empty()) throw ConfigError("out_dir: must not be empty");
  return c;
}

json to_json(const RunConfig& c) {
  const SearchConfig& s = c.search;
  json data = json::object();
  if (c.data.path) data["path"] = *c.data.path;
  if (c.data.truth_path) data["truth"] = *c.data.truth_path;
  if (c.data.sem) data["sem"] = sem_to_json(*c.data.sem);
  json score{{"variant", to_string(s.score.variant)},
             {"regressor", to_string(s.score.regressor.kind)},
             {"gpr_bandwidth", nullptr},
             {"gpr_jitter", s.score.regressor.gpr_jitter}};
  if (s.score.regressor.gpr_bandwidth) score["gpr_bandwidth"] = *s.score.regressor.gpr_bandwidth;
  json penalty{{"lambda1_init", s.penalty.lambda1_init},
               {"delta1", s.penalty.delta1},
               {"lambda2_init", nullptr},
               {"delta2", s.penalty.delta2},
               {"lambda2_cap", s.penalty.lambda2_cap},
               {"update_every", s.penalty.update_every}};
  if (s.penalty.lambda2_init) penalty["lambda2_init"] = *s.penalty.lambda2_init;
  return json{{"seed", s.seed},
              {"out_dir", c.out_dir},
              {"checkpoint", c.save_checkpoint},
              {"data", data},
              {"preprocess", {{"normalize", c.preprocess.normalize}, {"outlier_keep", c.preprocess.outlier_keep}}},
              {"score", score},
              {"decoder_variant", to_string(s.shape.decoder)},
              {"sparse_prior", s.sparse_prior},
              {"hyper",
               {{"iterations", s.iterations},
                {"n", s.input_samples},
                {"batch", s.batch},
                {"d_e", s.shape.embed_dim},
                {"heads", s.shape.heads},
                {"layers", s.shape.layers},
                {"ff_dim", s.shape.ff_dim},
                {"d_h", s.shape.decoder_hidden},
                {"ntn_slices", s.shape.ntn_slices},
                {"critic_hidden", s.shape.critic_hidden},
                {"entropy_weight", s.hyper.entropy_weight},
                {"actor_lr", s.hyper.actor_lr},
                {"critic_lr", s.hyper.critic_lr},
                {"grad_clip", s.hyper.grad_clip},
                {"s_scale", s.s_scale}}},
              {"penalty", penalty},
              {"prune",
               {{"method", to_string(s.prune.kind)},
                {"threshold", s.prune.threshold},
                {"tolerance", s.prune.tolerance}}}};
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;

  if (!j.is_object()) j = json::object();
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set: empty path component in '" + key + "'");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    json& next = (*node)[part];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("--set: '" + key.substr(0, dot) + "' is not an object");
    node = &next;
    start = dot + 1;
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false, /*ignore_comments=*/true);
  if (j.is_discarded()) throw ConfigError(path + ": not valid JSON");
  return j;
}

}  // namespace rlcd
