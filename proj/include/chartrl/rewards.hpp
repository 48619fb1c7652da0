#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chartrl/answers.hpp"

namespace chartrl {

struct RewardBreakdown {
  double cerm = 0.0;
  double format = 0.0;
  double total = 0.0;
  std::optional<double> error_rate;  // numeric branch only
};

struct EvalFailure {
  std::size_t index;
  std::string reason;
};

struct EvalReport {
  std::size_t n = 0;
  double exact_accuracy = 0.0;
  double relaxed_accuracy = 0.0;
  std::map<AnswerType, double> per_type_accuracy;  // relaxed, keyed by gold type
  std::vector<EvalFailure> failures;
};

// |pred - gold| / |gold|. Throws std::domain_error when gold is zero.
double error_rate(double pred, double gold);

// Dense reward: 1 / (1 + ER) on numeric pairs, exact-match indicator
// otherwise. Zero gold falls back to absolute error.
double cerm_reward(const Answer& pred, const Answer& gold, const MatchPolicy& policy = {});

// 1 iff the trimmed response is exactly one <thinking> block followed by one
// non-empty <answer> block with no other tags.
double format_reward(std::string_view response);

// Content of the <answer> block when the structure is valid, otherwise the
// whole trimmed response.
std::string extract_answer_span(std::string_view response);

RewardBreakdown total_reward(std::string_view response, const Answer& gold,
                             const MatchPolicy& policy = {});

EvalReport evaluate(const std::vector<std::string>& preds, const std::vector<Answer>& golds,
                    const MatchPolicy& policy);

}  // namespace chartrl
