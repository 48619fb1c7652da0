#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chartrl {

enum class AnswerKind { Numeric, Text, YesNo, List, OptionLabel, Unanswerable };

// Coarse category used for per-type accuracy and dataset histograms.
enum class AnswerType { numeric, textual, yes_no, list, option, unanswerable };

std::string_view to_string(AnswerKind kind);
std::string_view to_string(AnswerType type);
std::optional<AnswerType> answer_type_from_string(std::string_view name);

// A parsed final answer. Exactly one payload is populated, selected by kind().
// Construct through the named factories or parse_answer().
class Answer {
 public:
  static Answer numeric(double value, std::string raw = {});
  static Answer text(std::string_view value, std::string raw = {});
  static Answer yes_no(std::string_view value, std::string raw = {});
  static Answer option_label(std::string_view label, std::string raw = {});
  static Answer list(std::vector<Answer> elements, std::string raw = {});
  static Answer unanswerable(std::string raw = {});

  AnswerKind kind() const { return kind_; }
  bool is_numeric() const { return kind_ == AnswerKind::Numeric; }

  // Valid only for Numeric.
  double numeric_value() const;
  // Lowercased, trimmed, whitespace-collapsed. Valid for Text/YesNo/OptionLabel.
  const std::string& text_value() const;
  // Valid only for List.
  const std::vector<Answer>& elements() const;
  const std::string& raw() const { return raw_; }

  // Canonical rendering: shortest round-trip decimal for numbers,
  // "[a, b]" for lists, "Unanswerable" for the sentinel.
  std::string canonical() const;

  // Structural equality of kind and payload; raw is ignored.
  bool same_value(const Answer& other) const;

 private:
  Answer() = default;

  AnswerKind kind_ = AnswerKind::Text;
  double number_ = 0.0;
  std::string text_;
  std::vector<Answer> elements_;
  std::string raw_;
};

struct MatchPolicy {
  double numeric_tolerance = 0.05;  // relative, in [0, 1)
  bool case_sensitive = false;
  double absolute_epsilon = 1e-6;  // used when the gold value is zero

  static MatchPolicy strict() { return MatchPolicy{0.0, false, 1e-6}; }
  void validate() const;
};

Answer parse_answer(std::string_view raw);

// Numeric value of a numeric answer, or of a Text answer whose content is a
// number once internal whitespace is removed ("1 234"). Empty otherwise.
std::optional<double> numeric_view(const Answer& answer);

// Directional: `gold` is always the reference value.
bool answers_match(const Answer& pred, const Answer& gold, const MatchPolicy& policy);

AnswerType classify_answer_type(const Answer& gold);

// True iff |pred - gold| <= tolerance * |gold|, evaluated exactly on the
// binary values of the arguments (no rounding in the difference or product).
bool within_relative_tolerance(double pred, double gold, double tolerance);

// Lowercase, trim, collapse internal whitespace runs to one space.
std::string normalize_text(std::string_view s);
std::string_view trim(std::string_view s);

}  // namespace chartrl
