#include "chartrl/experiments.hpp"

#include <cmath>
#include <future>
#include <set>

#include "chartrl/errors.hpp"

namespace chartrl {

namespace {

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) throw UsageError(where + " config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw UsageError(where + " config: unknown key '" + key + "'");
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

RewardScheme read_scheme(const nlohmann::json& j, RewardScheme fallback) {
  if (!j.contains("scheme")) return fallback;
  const auto name = j.at("scheme").get<std::string>();
  auto scheme = reward_scheme_from_string(name);
  if (!scheme) throw UsageError("unknown reward scheme '" + name + "'");
  return *scheme;
}

}  // namespace

SchemeOutcome run_numeric_experiment(const NumericExperimentConfig& config) {
  Env env = make_numeric_env(config.gold_range, config.sigma, config.scheme, config.grpo.seed,
                             config.num_prompts);
  Policy policy = env.initial_policy(config.start_mean());
  const Policy reference = policy;
  SchemeOutcome out;
  out.scheme = config.scheme;
  out.trace = train_loop(policy, reference, env, config.grpo);
  double err = 0.0;
  for (const auto& p : env.prompts()) err += std::fabs(policy.mean(p) - p.gold) / std::fabs(p.gold);
  out.final_relative_error = err / static_cast<double>(env.prompts().size());
  out.degenerate_fraction =
      static_cast<double>(out.trace.degenerate_groups) / static_cast<double>(out.trace.steps);
  out.surrogate_nonzero_steps = out.trace.surrogate_nonzero_steps;
  out.max_surrogate_grad_norm = out.trace.max_surrogate_grad_norm;
  out.final_kl = mean_kl(policy, reference, env);
  return out;
}

ComparisonReport compare_reward_schemes(const NumericExperimentConfig& config) {
  NumericExperimentConfig dense = config;
  dense.scheme = RewardScheme::cerm;
  NumericExperimentConfig sparse = config;
  sparse.scheme = RewardScheme::binary_exact;
  auto sparse_run = std::async(std::launch::async, run_numeric_experiment, sparse);
  ComparisonReport report;
  report.seed = config.grpo.seed;
  report.dense = run_numeric_experiment(dense);
  report.sparse = sparse_run.get();
  return report;
}

CategoricalOutcome run_categorical_experiment(const CategoricalExperimentConfig& config) {
  Env env = make_categorical_env(config.num_options, config.scheme, config.grpo.seed,
                                 config.num_prompts);
  Policy policy = env.initial_policy();
  const Policy reference = policy;
  CategoricalOutcome out;
  out.trace = train_loop(policy, reference, env, config.grpo);
  for (const auto& p : env.prompts()) {
    out.correct_probability.push_back(policy.probabilities(p)[p.correct_option]);
  }
  out.final_kl = mean_kl(policy, reference, env);
  return out;
}

std::vector<KlSweepPoint> kl_anchoring_sweep(const NumericExperimentConfig& base,
                                             std::span<const double> betas,
                                             std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw UsageError("kl sweep needs at least one seed");
  std::vector<std::vector<std::future<SchemeOutcome>>> runs(betas.size());
  for (std::size_t b = 0; b < betas.size(); ++b) {
    for (auto seed : seeds) {
      NumericExperimentConfig c = base;
      c.grpo.kl_beta = betas[b];
      c.grpo.seed = seed;
      runs[b].push_back(std::async(std::launch::async, run_numeric_experiment, c));
    }
  }
  std::vector<KlSweepPoint> points;
  for (std::size_t b = 0; b < betas.size(); ++b) {
    KlSweepPoint point;
    point.beta = betas[b];
    for (auto& f : runs[b]) point.per_seed.push_back(f.get().final_kl);
    double acc = 0.0;
    for (double kl : point.per_seed) acc += kl;
    point.mean_final_kl = acc / static_cast<double>(point.per_seed.size());
    points.push_back(std::move(point));
  }
  return points;
}

std::string ComparisonReport::curves_csv() const {
  std::string out = "scheme,step,mean_reward,mean_kl,policy_summary\n";
  for (const SchemeOutcome* o : {&dense, &sparse}) {
    for (const auto& r : o->trace.records) {
      out += std::string(to_string(o->scheme)) + ',' + std::to_string(r.step) + ',' +
             format_double(r.mean_reward) + ',' + format_double(r.mean_kl) + ',' +
             r.policy_summary + '\n';
    }
  }
  return out;
}

nlohmann::ordered_json to_json(const SchemeOutcome& o) {
  nlohmann::ordered_json j;
  j["scheme"] = to_string(o.scheme);
  j["final_relative_error"] = o.final_relative_error;
  j["degenerate_fraction"] = o.degenerate_fraction;
  j["surrogate_nonzero_steps"] = o.surrogate_nonzero_steps;
  j["max_surrogate_grad_norm"] = o.max_surrogate_grad_norm;
  j["final_kl"] = o.final_kl;
  j["steps"] = o.trace.steps;
  return j;
}

nlohmann::ordered_json ComparisonReport::summary() const {
  nlohmann::ordered_json j;
  j["experiment"] = "dense_vs_sparse_reward";
  j["seed"] = seed;
  j["dense"] = to_json(dense);
  j["sparse"] = to_json(sparse);
  return j;
}

GrpoConfig grpo_config_from_json(const nlohmann::json& j, GrpoConfig c) {
  reject_unknown_keys(j,
                      {"group_size", "learning_rate", "kl_beta", "clip_epsilon", "steps", "seed",
                       "degenerate_std_epsilon", "eval_interval"},
                      "grpo");
  read(j, "group_size", c.group_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "kl_beta", c.kl_beta);
  read(j, "clip_epsilon", c.clip_epsilon);
  read(j, "steps", c.steps);
  read(j, "seed", c.seed);
  read(j, "degenerate_std_epsilon", c.degenerate_std_epsilon);
  read(j, "eval_interval", c.eval_interval);
  c.validate();
  return c;
}

NumericExperimentConfig numeric_config_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"gold_range", "sigma", "init_mean", "num_prompts", "scheme", "grpo"},
                      "numeric");
  NumericExperimentConfig c;
  if (j.contains("gold_range")) {
    const auto& r = j.at("gold_range");
    if (!r.is_array() || r.size() != 2) throw UsageError("gold_range must be [lo, hi]");
    c.gold_range = {r[0].get<double>(), r[1].get<double>()};
  }
  read(j, "sigma", c.sigma);
  if (j.contains("init_mean")) c.init_mean = j.at("init_mean").get<double>();
  read(j, "num_prompts", c.num_prompts);
  c.scheme = read_scheme(j, c.scheme);
  if (j.contains("grpo")) c.grpo = grpo_config_from_json(j.at("grpo"), c.grpo);
  return c;
}

CategoricalExperimentConfig categorical_config_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"num_options", "num_prompts", "scheme", "grpo"}, "categorical");
  CategoricalExperimentConfig c;
  read(j, "num_options", c.num_options);
  read(j, "num_prompts", c.num_prompts);
  c.scheme = read_scheme(j, c.scheme);
  if (j.contains("grpo")) c.grpo = grpo_config_from_json(j.at("grpo"), c.grpo);
  return c;
}

}  // namespace chartrl
