#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chartrl/answers.hpp"
#include "chartrl/policy.hpp"
#include "chartrl/rng.hpp"

namespace chartrl {

enum class RewardScheme { cerm, binary_exact, cerm_plus_format };
enum class OutcomeSpace { continuous, categorical };

std::string_view to_string(RewardScheme scheme);
std::optional<RewardScheme> reward_scheme_from_string(std::string_view name);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Desk-scale environment. Prompts are drawn once at construction; the prompt
// stream and the gold answers are deterministic in the seed.
class Env {
 public:
  OutcomeSpace outcome_space() const { return space_; }
  RewardScheme scheme() const { return scheme_; }
  std::size_t num_options() const { return num_options_; }
  double policy_sigma() const { return sigma_; }
  const std::vector<PromptContext>& prompts() const { return prompts_; }

  PromptContext next_prompt();

  Answer gold_answer(const PromptContext& prompt) const;
  // Text a toy policy "emits" for an outcome under this env's scheme.
  std::string render_response(double outcome) const;
  // Scores one outcome through the reward functions.
  double reward(const PromptContext& prompt, double outcome) const;

  // Fresh policy over this env's prompts (gaussian_mean or categorical_logits).
  Policy initial_policy(double init_mean = 0.0) const;

 private:
  friend Env make_numeric_env(Interval, double, RewardScheme, std::uint64_t, std::size_t);
  friend Env make_categorical_env(std::size_t, RewardScheme, std::uint64_t, std::size_t);

  Env(OutcomeSpace space, RewardScheme scheme, std::uint64_t seed)
      : space_(space), scheme_(scheme), stream_(CounterRng(seed).fork(1)) {}

  OutcomeSpace space_;
  RewardScheme scheme_;
  std::size_t num_options_ = 0;
  double sigma_ = 1.0;
  std::vector<PromptContext> prompts_;
  CounterRng stream_;
};

Env make_numeric_env(Interval gold_range, double sigma, RewardScheme scheme, std::uint64_t seed,
                     std::size_t num_prompts = 1);
Env make_categorical_env(std::size_t num_options, RewardScheme scheme, std::uint64_t seed,
                         std::size_t num_prompts = 1);

}  // namespace chartrl
