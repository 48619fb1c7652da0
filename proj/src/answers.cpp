#include "chartrl/answers.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "chartrl/errors.hpp"

namespace chartrl {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string collapse_whitespace(std::string_view s, bool fold_case) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(fold_case ? lower(c) : c);
  }
  return out;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}
bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

constexpr std::array<std::string_view, 3> kCurrency = {"$", "\xE2\x82\xAC", "\xC2\xA3"};  // $ € £

bool strip_currency_prefix(std::string_view& s) {
  for (auto sym : kCurrency) {
    if (starts_with(s, sym)) {
      s.remove_prefix(sym.size());
      return true;
    }
  }
  return false;
}

bool strip_currency_suffix(std::string_view& s) {
  for (auto sym : kCurrency) {
    if (ends_with(s, sym)) {
      s.remove_suffix(sym.size());
      return true;
    }
  }
  return false;
}

// [sign] [currency] digits-with-commas [%|currency]
std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  std::string body;
  if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
    if (s.front() == '-') body.push_back('-');
    s.remove_prefix(1);
  }
  const bool had_prefix = strip_currency_prefix(s);
  s = trim(s);
  if (ends_with(s, "%")) {
    s.remove_suffix(1);
  } else if (!had_prefix) {
    strip_currency_suffix(s);
  }
  s = trim(s);
  if (s.empty() || s.front() == '+' || s.front() == '-') return std::nullopt;
  for (char c : s) {
    if (c == ',') continue;
    body.push_back(c);
  }
  if (body.empty() || body == "-") return std::nullopt;
  double value = 0.0;
  const char* first = body.data();
  const char* last = body.data() + body.size();
  auto [ptr, ec] = std::from_chars(first, last, value, std::chars_format::general);
  if (ec != std::errc{} || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

bool is_roman_label(std::string_view normalized) {
  static constexpr std::array<std::string_view, 10> kRoman = {
      "i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix", "x"};
  for (auto r : kRoman) {
    if (normalized == r) return true;
  }
  return false;
}

Answer parse_scalar(std::string_view trimmed, std::string raw) {
  if (auto number = parse_number(trimmed)) return Answer::numeric(*number, std::move(raw));
  const std::string norm = normalize_text(trimmed);
  if (norm == "yes" || norm == "no") return Answer::yes_no(norm, std::move(raw));
  if ((norm.size() == 1 && norm[0] >= 'a' && norm[0] <= 'z') || is_roman_label(norm)) {
    return Answer::option_label(norm, std::move(raw));
  }
  return Answer::text(trimmed, std::move(raw));
}

std::optional<Answer> parse_list(std::string_view trimmed, const std::string& raw) {
  if (trimmed.size() < 2 || trimmed.front() != '[' || trimmed.back() != ']') return std::nullopt;
  std::string_view inner = trimmed.substr(1, trimmed.size() - 2);
  if (inner.find_first_of("[]") != std::string_view::npos) return std::nullopt;
  std::vector<Answer> elements;
  if (trim(inner).empty()) return Answer::list(std::move(elements), raw);
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = inner.find(',', start);
    const std::string_view part =
        trim(inner.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                  : comma - start));
    if (part.empty()) return std::nullopt;
    elements.push_back(parse_scalar(part, std::string(part)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return Answer::list(std::move(elements), raw);
}

// Error-free transforms for the exact tolerance comparison.
struct Pair {
  double hi;
  double lo;
};

Pair two_sum(double a, double b) {
  const double s = a + b;
  const double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}

Pair two_prod(double a, double b) {
  const double p = a * b;
  return {p, std::fma(a, b, -p)};
}

// Sign of an exact sum, via Shewchuk's grow-expansion.
int exact_sign(std::initializer_list<double> terms) {
  std::vector<double> expansion;
  for (double v : terms) {
    double q = v;
    for (double& h : expansion) {
      const Pair p = two_sum(q, h);
      q = p.hi;
      h = p.lo;
    }
    expansion.push_back(q);
  }
  for (auto it = expansion.rbegin(); it != expansion.rend(); ++it) {
    if (*it > 0) return 1;
    if (*it < 0) return -1;
  }
  return 0;
}

bool textual_kind(AnswerKind k) {
  return k == AnswerKind::Text || k == AnswerKind::YesNo || k == AnswerKind::OptionLabel;
}

bool numbers_match(double pred, double gold, const MatchPolicy& policy) {
  if (gold == 0.0) return std::fabs(pred) <= policy.absolute_epsilon;
  return within_relative_tolerance(pred, gold, policy.numeric_tolerance);
}

bool strings_match(const Answer& pred, const Answer& gold, const MatchPolicy& policy) {
  if (!policy.case_sensitive) return pred.text_value() == gold.text_value();
  return collapse_whitespace(pred.raw(), false) == collapse_whitespace(gold.raw(), false);
}

}  // namespace

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string normalize_text(std::string_view s) { return collapse_whitespace(s, true); }

std::string_view to_string(AnswerKind kind) {
  switch (kind) {
    case AnswerKind::Numeric: return "Numeric";
    case AnswerKind::Text: return "Text";
    case AnswerKind::YesNo: return "YesNo";
    case AnswerKind::List: return "List";
    case AnswerKind::OptionLabel: return "OptionLabel";
    case AnswerKind::Unanswerable: return "Unanswerable";
  }
  return "?";
}

std::string_view to_string(AnswerType type) {
  switch (type) {
    case AnswerType::numeric: return "numeric";
    case AnswerType::textual: return "textual";
    case AnswerType::yes_no: return "yes_no";
    case AnswerType::list: return "list";
    case AnswerType::option: return "option";
    case AnswerType::unanswerable: return "unanswerable";
  }
  return "?";
}

std::optional<AnswerType> answer_type_from_string(std::string_view name) {
  for (auto t : {AnswerType::numeric, AnswerType::textual, AnswerType::yes_no, AnswerType::list,
                 AnswerType::option, AnswerType::unanswerable}) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

Answer Answer::numeric(double value, std::string raw) {
  if (!std::isfinite(value)) throw UsageError("numeric answer must be finite");
  Answer a;
  a.kind_ = AnswerKind::Numeric;
  a.number_ = value;
  a.raw_ = std::move(raw);
  if (a.raw_.empty()) a.raw_ = a.canonical();
  return a;
}

Answer Answer::text(std::string_view value, std::string raw) {
  Answer a;
  a.kind_ = AnswerKind::Text;
  a.text_ = normalize_text(value);
  a.raw_ = raw.empty() ? std::string(value) : std::move(raw);
  return a;
}

Answer Answer::yes_no(std::string_view value, std::string raw) {
  Answer a = text(value, std::move(raw));
  if (a.text_ != "yes" && a.text_ != "no") throw UsageError("yes/no answer must be yes or no");
  a.kind_ = AnswerKind::YesNo;
  return a;
}

Answer Answer::option_label(std::string_view label, std::string raw) {
  Answer a = text(label, std::move(raw));
  if (a.text_.empty()) throw UsageError("option label must be non-empty");
  a.kind_ = AnswerKind::OptionLabel;
  return a;
}

Answer Answer::list(std::vector<Answer> elements, std::string raw) {
  for (const auto& e : elements) {
    if (e.kind_ == AnswerKind::List) throw UsageError("list answers nest one level only");
  }
  Answer a;
  a.kind_ = AnswerKind::List;
  a.elements_ = std::move(elements);
  a.raw_ = std::move(raw);
  if (a.raw_.empty()) a.raw_ = a.canonical();
  return a;
}

Answer Answer::unanswerable(std::string raw) {
  Answer a;
  a.kind_ = AnswerKind::Unanswerable;
  a.raw_ = raw.empty() ? std::string("Unanswerable") : std::move(raw);
  return a;
}

double Answer::numeric_value() const {
  if (kind_ != AnswerKind::Numeric) throw std::logic_error("answer is not numeric");
  return number_;
}

const std::string& Answer::text_value() const {
  if (!textual_kind(kind_)) throw std::logic_error("answer has no text payload");
  return text_;
}

const std::vector<Answer>& Answer::elements() const {
  if (kind_ != AnswerKind::List) throw std::logic_error("answer is not a list");
  return elements_;
}

std::string Answer::canonical() const {
  switch (kind_) {
    case AnswerKind::Numeric: {
      if (number_ == 0.0) return "0";
      std::array<char, 64> buf{};
      auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), number_);
      return std::string(buf.data(), ptr);
    }
    case AnswerKind::List: {
      std::string out = "[";
      for (std::size_t i = 0; i < elements_.size(); ++i) {
        if (i) out += ", ";
        out += elements_[i].canonical();
      }
      return out + "]";
    }
    case AnswerKind::Unanswerable:
      return "Unanswerable";
    default:
      return text_;
  }
}

bool Answer::same_value(const Answer& other) const {
  if (kind_ != other.kind_) return false;
  switch (kind_) {
    case AnswerKind::Numeric: return number_ == other.number_;
    case AnswerKind::Unanswerable: return true;
    case AnswerKind::List:
      if (elements_.size() != other.elements_.size()) return false;
      for (std::size_t i = 0; i < elements_.size(); ++i) {
        if (!elements_[i].same_value(other.elements_[i])) return false;
      }
      return true;
    default: return text_ == other.text_;
  }
}

void MatchPolicy::validate() const {
  if (!(numeric_tolerance >= 0.0 && numeric_tolerance < 1.0)) {
    throw UsageError("numeric_tolerance must lie in [0, 1)");
  }
  if (!(absolute_epsilon > 0.0)) throw UsageError("absolute_epsilon must be positive");
}

Answer parse_answer(std::string_view raw) {
  std::string raw_copy(raw);
  const std::string_view trimmed = trim(raw);
  const std::string norm = normalize_text(trimmed);
  if (norm == "unanswerable" || norm == "not applicable") return Answer::unanswerable(raw_copy);
  if (auto list = parse_list(trimmed, raw_copy)) return *std::move(list);
  if (trimmed.empty()) return Answer::text("", raw_copy);
  return parse_scalar(trimmed, std::move(raw_copy));
}

std::optional<double> numeric_view(const Answer& answer) {
  if (answer.kind() == AnswerKind::Numeric) return answer.numeric_value();
  if (answer.kind() != AnswerKind::Text) return std::nullopt;
  std::string compact;
  for (char c : answer.text_value()) {
    if (c != ' ') compact.push_back(c);
  }
  if (compact.empty()) return std::nullopt;
  return parse_number(compact);
}

bool within_relative_tolerance(double pred, double gold, double tolerance) {
  // |pred - gold| - tolerance * |gold| <= 0, with both sides kept as exact
  // two-term expansions.
  const Pair diff = two_sum(pred, -gold);
  const double sign = diff.hi < 0 ? -1.0 : 1.0;
  const Pair bound = two_prod(tolerance, std::fabs(gold));
  return exact_sign({sign * diff.lo, sign * diff.hi, -bound.lo, -bound.hi}) <= 0;
}

bool answers_match(const Answer& pred, const Answer& gold, const MatchPolicy& policy) {
  const AnswerKind gk = gold.kind();
  const AnswerKind pk = pred.kind();
  if (gk == AnswerKind::Unanswerable || pk == AnswerKind::Unanswerable) return gk == pk;
  if (gk == AnswerKind::List || pk == AnswerKind::List) {
    if (gk != pk) return false;
    const auto& pe = pred.elements();
    const auto& ge = gold.elements();
    if (pe.size() != ge.size()) return false;
    for (std::size_t i = 0; i < pe.size(); ++i) {
      if (!answers_match(pe[i], ge[i], policy)) return false;
    }
    return true;
  }
  if (gk == AnswerKind::Numeric || pk == AnswerKind::Numeric) {
    const auto p = numeric_view(pred);
    const auto g = numeric_view(gold);
    if (!p || !g) return false;
    return numbers_match(*p, *g, policy);
  }
  return strings_match(pred, gold, policy);
}

AnswerType classify_answer_type(const Answer& gold) {
  switch (gold.kind()) {
    case AnswerKind::Numeric: return AnswerType::numeric;
    case AnswerKind::Text: return AnswerType::textual;
    case AnswerKind::YesNo: return AnswerType::yes_no;
    case AnswerKind::List: return AnswerType::list;
    case AnswerKind::OptionLabel: return AnswerType::option;
    case AnswerKind::Unanswerable: return AnswerType::unanswerable;
  }
  return AnswerType::textual;
}

}  // namespace chartrl
