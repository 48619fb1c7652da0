#include "chartrl/env.hpp"

#include <cmath>

#include "chartrl/errors.hpp"
#include "chartrl/rewards.hpp"

namespace chartrl {

std::string_view to_string(RewardScheme scheme) {
  switch (scheme) {
    case RewardScheme::cerm: return "cerm";
    case RewardScheme::binary_exact: return "binary_exact";
    case RewardScheme::cerm_plus_format: return "cerm_plus_format";
  }
  return "?";
}

std::optional<RewardScheme> reward_scheme_from_string(std::string_view name) {
  for (auto s : {RewardScheme::cerm, RewardScheme::binary_exact, RewardScheme::cerm_plus_format}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

PromptContext Env::next_prompt() {
  return prompts_[static_cast<std::size_t>(stream_.below(prompts_.size()))];
}

Answer Env::gold_answer(const PromptContext& prompt) const {
  if (space_ == OutcomeSpace::continuous) return Answer::numeric(prompt.gold);
  return Answer::option_label(std::string(1, static_cast<char>('a' + prompt.correct_option)));
}

std::string Env::render_response(double outcome) const {
  std::string answer;
  if (space_ == OutcomeSpace::continuous) {
    answer = Answer::numeric(outcome).canonical();
  } else {
    answer = std::string(1, static_cast<char>('a' + static_cast<int>(outcome)));
  }
  if (scheme_ == RewardScheme::cerm_plus_format) {
    return "<thinking>read the chart</thinking> <answer>" + answer + "</answer>";
  }
  return answer;
}

double Env::reward(const PromptContext& prompt, double outcome) const {
  const Answer gold = gold_answer(prompt);
  const std::string response = render_response(outcome);
  switch (scheme_) {
    case RewardScheme::cerm:
      return total_reward(response, gold).cerm;
    case RewardScheme::cerm_plus_format:
      return total_reward(response, gold).total;
    case RewardScheme::binary_exact:
      return answers_match(parse_answer(extract_answer_span(response)), gold, MatchPolicy::strict())
                 ? 1.0
                 : 0.0;
  }
  return 0.0;
}

Policy Env::initial_policy(double init_mean) const {
  if (space_ == OutcomeSpace::continuous) return Policy::gaussian(prompts_.size(), init_mean, sigma_);
  return Policy::categorical(prompts_.size(), num_options_);
}

Env make_numeric_env(Interval gold_range, double sigma, RewardScheme scheme, std::uint64_t seed,
                     std::size_t num_prompts) {
  if (!(gold_range.lo <= gold_range.hi) || !std::isfinite(gold_range.lo) ||
      !std::isfinite(gold_range.hi)) {
    throw UsageError("gold range is empty");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw UsageError("sigma must be positive");
  if (num_prompts == 0) throw UsageError("env needs at least one prompt");
  Env env(OutcomeSpace::continuous, scheme, seed);
  env.sigma_ = sigma;
  CounterRng gold_rng = CounterRng(seed).fork(0);
  for (std::size_t i = 0; i < num_prompts; ++i) {
    PromptContext p;
    p.index = i;
    p.gold = gold_range.lo + (gold_range.hi - gold_range.lo) * gold_rng.uniform();
    env.prompts_.push_back(p);
  }
  return env;
}

Env make_categorical_env(std::size_t num_options, RewardScheme scheme, std::uint64_t seed,
                         std::size_t num_prompts) {
  if (num_options < 2) throw UsageError("categorical env needs K >= 2");
  if (num_options > 26) throw UsageError("categorical env supports at most 26 options");
  if (num_prompts == 0) throw UsageError("env needs at least one prompt");
  Env env(OutcomeSpace::categorical, scheme, seed);
  env.num_options_ = num_options;
  CounterRng gold_rng = CounterRng(seed).fork(0);
  for (std::size_t i = 0; i < num_prompts; ++i) {
    PromptContext p;
    p.index = i;
    p.correct_option = static_cast<std::size_t>(gold_rng.below(num_options));
    env.prompts_.push_back(p);
  }
  return env;
}

}  // namespace chartrl
