#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "chartrl/env.hpp"
#include "chartrl/grpo.hpp"

namespace chartrl {

struct NumericExperimentConfig {
  Interval gold_range{50.0, 150.0};
  double sigma = 10.0;
  std::optional<double> init_mean;  // defaults to the midpoint of gold_range
  std::size_t num_prompts = 1;
  RewardScheme scheme = RewardScheme::cerm;
  GrpoConfig grpo{.group_size = 8, .learning_rate = 4.0, .steps = 2000};

  double start_mean() const { return init_mean.value_or(0.5 * (gold_range.lo + gold_range.hi)); }
};

struct CategoricalExperimentConfig {
  std::size_t num_options = 4;
  std::size_t num_prompts = 1;
  RewardScheme scheme = RewardScheme::cerm;
  GrpoConfig grpo{.group_size = 8, .learning_rate = 0.5, .steps = 300};
};

struct SchemeOutcome {
  RewardScheme scheme = RewardScheme::cerm;
  double final_relative_error = 0.0;  // mean over prompts of |mu - y| / |y|
  double degenerate_fraction = 0.0;
  std::size_t surrogate_nonzero_steps = 0;
  double max_surrogate_grad_norm = 0.0;
  double final_kl = 0.0;
  TrainingTrace trace;
};

// Dense (CERM) vs sparse (binary exact-match) rewards on the numeric env.
// This is a proxy experiment for the dense-reward argument, not a
// reproduction of an SFT-vs-RL comparison.
struct ComparisonReport {
  std::uint64_t seed = 0;
  SchemeOutcome dense;
  SchemeOutcome sparse;

  // scheme,step,mean_reward,mean_kl,policy_summary
  std::string curves_csv() const;
  nlohmann::ordered_json summary() const;
};

struct CategoricalOutcome {
  std::vector<double> correct_probability;  // per prompt
  double final_kl = 0.0;
  TrainingTrace trace;
};

struct KlSweepPoint {
  double beta = 0.0;
  double mean_final_kl = 0.0;
  std::vector<double> per_seed;
};

SchemeOutcome run_numeric_experiment(const NumericExperimentConfig& config);
ComparisonReport compare_reward_schemes(const NumericExperimentConfig& config);
CategoricalOutcome run_categorical_experiment(const CategoricalExperimentConfig& config);

// Final mean KL for each beta, averaged over seeds. Runs execute in parallel.
std::vector<KlSweepPoint> kl_anchoring_sweep(const NumericExperimentConfig& base,
                                             std::span<const double> betas,
                                             std::span<const std::uint64_t> seeds);

// Declarative configs. Unknown keys are rejected.
GrpoConfig grpo_config_from_json(const nlohmann::json& j, GrpoConfig defaults = {});
NumericExperimentConfig numeric_config_from_json(const nlohmann::json& j);
CategoricalExperimentConfig categorical_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const SchemeOutcome& outcome);

}  // namespace chartrl
