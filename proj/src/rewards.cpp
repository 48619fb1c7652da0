#include "chartrl/rewards.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "chartrl/errors.hpp"

namespace chartrl {

namespace {

constexpr std::string_view kThinkOpen = "<thinking>";
constexpr std::string_view kThinkClose = "</thinking>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

bool contains_tag(std::string_view s) {
  for (auto tag : std::array{kThinkOpen, kThinkClose, kAnswerOpen, kAnswerClose}) {
    if (s.find(tag) != std::string_view::npos) return true;
  }
  return false;
}

bool consume(std::string_view& s, std::string_view token) {
  if (s.substr(0, token.size()) != token) return false;
  s.remove_prefix(token.size());
  return true;
}

// Returns the <answer> content when the response has the required structure.
std::optional<std::string_view> structured_answer(std::string_view response) {
  std::string_view s = trim(response);
  if (!consume(s, kThinkOpen)) return std::nullopt;
  const auto think_end = s.find(kThinkClose);
  if (think_end == std::string_view::npos) return std::nullopt;
  if (contains_tag(s.substr(0, think_end))) return std::nullopt;
  s.remove_prefix(think_end + kThinkClose.size());
  s = trim(s);
  if (!consume(s, kAnswerOpen)) return std::nullopt;
  const auto answer_end = s.find(kAnswerClose);
  if (answer_end == std::string_view::npos) return std::nullopt;
  const std::string_view content = s.substr(0, answer_end);
  if (contains_tag(content) || trim(content).empty()) return std::nullopt;
  s.remove_prefix(answer_end + kAnswerClose.size());
  if (!trim(s).empty()) return std::nullopt;
  return trim(content);
}

}  // namespace

double error_rate(double pred, double gold) {
  if (gold == 0.0) throw std::domain_error("error rate is undefined for a zero gold value");
  return std::fabs(pred - gold) / std::fabs(gold);
}

double cerm_reward(const Answer& pred, const Answer& gold, const MatchPolicy& policy) {
  const auto p = numeric_view(pred);
  const auto g = numeric_view(gold);
  if (p && g) {
    if (*g == 0.0) {
      const double abs_err = std::fabs(*p);
      return abs_err <= policy.absolute_epsilon ? 1.0 : 1.0 / (1.0 + abs_err);
    }
    return 1.0 / (1.0 + error_rate(*p, *g));
  }
  MatchPolicy exact = policy;
  exact.numeric_tolerance = 0.0;
  return answers_match(pred, gold, exact) ? 1.0 : 0.0;
}

double format_reward(std::string_view response) {
  return structured_answer(response) ? 1.0 : 0.0;
}

std::string extract_answer_span(std::string_view response) {
  if (auto content = structured_answer(response)) return std::string(*content);
  return std::string(trim(response));
}

RewardBreakdown total_reward(std::string_view response, const Answer& gold,
                             const MatchPolicy& policy) {
  const Answer pred = parse_answer(extract_answer_span(response));
  RewardBreakdown out;
  out.cerm = cerm_reward(pred, gold, policy);
  out.format = format_reward(response);
  out.total = out.cerm + out.format;
  const auto p = numeric_view(pred);
  const auto g = numeric_view(gold);
  if (p && g && *g != 0.0) out.error_rate = error_rate(*p, *g);
  return out;
}

EvalReport evaluate(const std::vector<std::string>& preds, const std::vector<Answer>& golds,
                    const MatchPolicy& policy) {
  if (preds.size() != golds.size()) {
    throw UsageError("evaluate: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(golds.size()) + " gold answers");
  }
  if (preds.empty()) throw UsageError("evaluate: no predictions");
  policy.validate();
  MatchPolicy strict = policy;
  strict.numeric_tolerance = 0.0;

  EvalReport report;
  report.n = preds.size();
  std::size_t exact_hits = 0;
  std::size_t relaxed_hits = 0;
  std::map<AnswerType, std::pair<std::size_t, std::size_t>> per_type;  // hits, total
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Answer pred = parse_answer(extract_answer_span(preds[i]));
    const Answer& gold = golds[i];
    const bool exact = answers_match(pred, gold, strict);
    const bool relaxed = answers_match(pred, gold, policy);
    exact_hits += exact;
    relaxed_hits += relaxed;
    auto& bucket = per_type[classify_answer_type(gold)];
    bucket.first += relaxed;
    bucket.second += 1;
    if (!relaxed) {
      std::string reason = pred.kind() == gold.kind()
                               ? "mismatch"
                               : "kind " + std::string(to_string(pred.kind())) + " vs " +
                                     std::string(to_string(gold.kind()));
      report.failures.push_back({i, std::move(reason)});
    }
  }
  const double n = static_cast<double>(report.n);
  report.exact_accuracy = static_cast<double>(exact_hits) / n;
  report.relaxed_accuracy = static_cast<double>(relaxed_hits) / n;
  for (const auto& [type, counts] : per_type) {
    report.per_type_accuracy[type] =
        static_cast<double>(counts.first) / static_cast<double>(counts.second);
  }
  return report;
}

}  // namespace chartrl
