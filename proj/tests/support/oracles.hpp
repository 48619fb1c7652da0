#pragma once

// Independent reference computations for the test suites. Nothing here calls
// into the code under test except to build inputs.

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <unistd.h>

#include "chartrl/answers.hpp"
#include "chartrl/datasets.hpp"
#include "chartrl/grpo.hpp"
#include "chartrl/policy.hpp"
#include "chartrl/rng.hpp"

namespace oracle {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;
using Wide = boost::multiprecision::cpp_bin_float_100;

// A finite double as the exact dyadic rational it denotes.
inline Rational exact(double x) {
  if (x == 0.0) return Rational(0);
  int e = 0;
  const double m = std::frexp(x, &e);
  const auto mant = static_cast<std::int64_t>(std::ldexp(m, 53));
  e -= 53;
  Rational r{BigInt(mant)};
  if (e > 0) r *= Rational(BigInt(1) << e);
  if (e < 0) r /= Rational(BigInt(1) << -e);
  return r;
}

inline Rational abs(const Rational& r) { return r < 0 ? Rational(-r) : r; }

// |pred - gold| <= tol * |gold|, or |pred| <= abs_eps for a zero gold.
inline bool numeric_match(double pred, double gold, double tol, double abs_eps = 1e-6) {
  if (gold == 0.0) return abs(exact(pred)) <= exact(abs_eps);
  return abs(exact(pred) - exact(gold)) <= exact(tol) * abs(exact(gold));
}

// 1 / (1 + |p - g| / |g|) in 100-digit arithmetic; absolute error for g = 0.
inline Wide cerm(double pred, double gold, double abs_eps = 1e-6) {
  const Wide p(pred), g(gold);
  if (gold == 0.0) {
    const Wide err = boost::multiprecision::abs(p);
    return err <= Wide(abs_eps) ? Wide(1) : Wide(1) / (Wide(1) + err);
  }
  return Wide(1) / (Wide(1) + boost::multiprecision::abs(p - g) / boost::multiprecision::abs(g));
}

inline std::string lower_collapsed(const std::string& s) {
  std::istringstream in(s);
  std::string out, word;
  while (in >> word) {
    if (!out.empty()) out += ' ';
    for (char c : word) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

// --- metric oracle --------------------------------------------------------

struct EvalCase {
  std::string pred;          // raw prediction line
  chartrl::Answer gold = chartrl::Answer::unanswerable();
  bool numeric = false;
  double pred_value = 0.0;   // numeric cases only
  double gold_value = 0.0;
  std::string pred_text;     // categorical cases only
  std::string gold_text;
};

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::string with_separators(long long v) {
  std::string digits = std::to_string(v < 0 ? -v : v);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return (v < 0 ? "-" : "") + out;
}

// A pair where |p - g| lands between 0.05 * |g| computed exactly and computed
// in floating point, so a naive comparison gets the wrong answer.
inline std::pair<double, double> rounding_edge(chartrl::CounterRng& rng) {
  for (;;) {
    const double g = std::round(rng.uniform() * 1e6) / 100.0 + 1.0;
    const double d = 0.05 * g;
    for (double p : {g + d, std::nextafter(g + d, 0.0), std::nextafter(g + d, 1e300), g - d}) {
      const bool naive = std::fabs(p - g) <= 0.05 * std::fabs(g);
      if (naive != numeric_match(p, g, 0.05) && std::fabs(p) >= 1e-3) return {g, p};
    }
  }
}

// Random prediction/gold pairs with a heavy share of values sitting on or
// one ulp either side of the tolerance boundary.
inline std::vector<EvalCase> random_eval_cases(std::size_t n, std::uint64_t seed) {
  chartrl::CounterRng rng(seed);
  const std::vector<std::string> words = {"North", "South", "Blue bars", "Revenue"};
  std::vector<EvalCase> cases;
  for (std::size_t i = 0; i < n; ++i) {
    EvalCase c;
    const auto kind = rng.below(10);
    if (kind < 7) {
      c.numeric = true;
      double g = 0.0;
      switch (rng.below(4)) {
        case 0: g = static_cast<double>(rng.below(100000)); break;
        case 1: g = std::round((rng.uniform() * 2.0 - 1.0) * 1e6) / 100.0; break;
        case 2: g = rng.uniform() * 10.0; break;
        default: g = rng.below(5) == 0 ? 0.0 : static_cast<double>(rng.below(50)) + 0.5; break;
      }
      double p = g;
      switch (rng.below(7)) {
        case 0: break;
        case 1: p = g * 1.05; break;
        case 2: p = std::nextafter(g * 0.95, 0.0); break;
        case 3: p = std::nextafter(g * 1.05, g > 0 ? 1e300 : -1e300); break;
        case 4: p = g * (1.0 + (rng.uniform() - 0.5) * 0.3); break;
        case 5: p = g == 0.0 ? (rng.uniform() - 0.5) * 4e-6 : std::nextafter(g, 1e300); break;
        default: std::tie(g, p) = rounding_edge(rng); break;
      }
      if (std::fabs(p) < 1e-3) {
        c.pred = fmt("%.12f", p);
      } else if (p == std::round(p) && std::fabs(p) >= 1000 && rng.below(2) == 0) {
        c.pred = with_separators(static_cast<long long>(p));
      } else {
        c.pred = fmt("%.17g", p);
        if (rng.below(5) == 0) c.pred += "%";
      }
      // The value the prediction string denotes, read independently.
      std::string digits;
      for (char ch : c.pred) {
        if (ch != ',' && ch != '%') digits += ch;
      }
      c.pred_value = std::strtod(digits.c_str(), nullptr);
      c.gold_value = g;
      c.gold = chartrl::Answer::numeric(g);
      if (rng.below(3) == 0) c.pred = "<thinking>read the axis</thinking> <answer>" + c.pred + "</answer>";
    } else if (kind < 9) {
      const std::vector<std::string> preds = {"yes", "No", "YES ", " no", "maybe"};
      c.gold_text = rng.below(2) ? "Yes" : "No";
      c.pred_text = preds[rng.below(preds.size())];
      c.pred = c.pred_text;
      c.gold = chartrl::parse_answer(c.gold_text);
    } else {
      c.gold_text = words[rng.below(words.size())];
      std::string p = words[rng.below(words.size())];
      if (rng.below(2)) {
        for (char& ch : p) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      }
      c.pred_text = p;
      c.pred = p;
      c.gold = chartrl::parse_answer(c.gold_text);
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

inline bool case_matches(const EvalCase& c, double tol) {
  if (c.numeric) return numeric_match(c.pred_value, c.gold_value, tol);
  return lower_collapsed(c.pred_text) == lower_collapsed(c.gold_text);
}

struct Accuracy {
  Rational exact;
  Rational relaxed;
};

inline Accuracy brute_force_accuracy(const std::vector<EvalCase>& cases, double tol) {
  std::size_t e = 0, r = 0;
  for (const auto& c : cases) {
    e += case_matches(c, 0.0);
    r += case_matches(c, tol);
  }
  return {Rational(e, cases.size()), Rational(r, cases.size())};
}

// --- statistics oracle ----------------------------------------------------

struct TokenSummary {
  std::size_t min = 0, max = 0;
  double median = 0.0, mean = 0.0;
};

inline std::size_t whitespace_tokens(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

inline TokenSummary sort_based_summary(const std::vector<std::string>& texts) {
  std::vector<std::size_t> counts;
  for (const auto& t : texts) counts.push_back(whitespace_tokens(t));
  std::sort(counts.begin(), counts.end());
  TokenSummary s;
  const std::size_t n = counts.size();
  s.min = counts.front();
  s.max = counts.back();
  s.median = n % 2 ? static_cast<double>(counts[n / 2])
                   : (static_cast<double>(counts[n / 2 - 1]) + static_cast<double>(counts[n / 2])) / 2.0;
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  s.mean = static_cast<double>(total) / static_cast<double>(n);
  return s;
}

inline std::string random_cot(chartrl::CounterRng& rng) {
  static const char* seps[] = {" ", "  ", "\t", "\n", " \n "};
  const std::size_t words = rng.below(120);
  std::string s = "<thinking>";
  for (std::size_t i = 0; i < words; ++i) {
    s += seps[rng.below(5)];
    s += "w" + std::to_string(rng.below(1000));
  }
  return s + "</thinking> <answer>" + std::to_string(rng.below(100)) + "</answer>";
}

// --- dataset fixtures -----------------------------------------------------

inline chartrl::QARecord make_record(const std::string& id, chartrl::QuestionType type,
                                     const std::string& answer, const std::string& source = "chartqa") {
  chartrl::QARecord r;
  r.id = id;
  r.image_ref = "images/" + id + ".png";
  r.input = "Question " + id + "?";
  r.chain_of_thought = "<thinking>look at " + id + "</thinking> <answer>" + answer + "</answer>";
  r.final_answer = answer;
  r.question_type = type;
  r.source = source;
  return r;
}

// 100 records in four question-type strata of 50/30/10/10, interleaved so
// strata first appear in that order.
inline std::vector<chartrl::QARecord> strata_fixture() {
  using chartrl::QuestionType;
  const std::vector<std::pair<QuestionType, std::size_t>> spec = {
      {QuestionType::numerical, 50}, {QuestionType::data_retrieval, 30},
      {QuestionType::yes_no, 10}, {QuestionType::counting, 10}};
  std::vector<std::size_t> left;
  for (const auto& [t, n] : spec) left.push_back(n);
  std::vector<chartrl::QARecord> out;
  std::size_t id = 0;
  while (out.size() < 100) {
    for (std::size_t s = 0; s < spec.size(); ++s) {
      if (!left[s]) continue;
      --left[s];
      const std::string answer = spec[s].first == QuestionType::yes_no ? "Yes" : std::to_string(id % 17);
      char name[16];
      std::snprintf(name, sizeof name, "r%03zu", id++);
      out.push_back(make_record(name, spec[s].first, answer));
    }
  }
  return out;
}

// --- gradient check -------------------------------------------------------

struct GradientCase {
  double relative_error = 0.0;
  bool categorical = false;
};

inline double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Compares surrogate_gradient + beta * kl_gradient with central differences
// of clipped_surrogate + beta * kl_divergence on a random toy policy.
inline GradientCase gradient_check(std::uint64_t seed) {
  using namespace chartrl;
  CounterRng rng(seed);
  const bool categorical = seed % 2 == 1;
  const std::size_t prompts = 1 + rng.below(3);
  const double clip = 0.2;

  for (;;) {
    Policy policy = categorical ? Policy::categorical(prompts, 2 + rng.below(5))
                                : Policy::gaussian(prompts, 0.0, 0.5 + 2.5 * rng.uniform());
    for (double& p : policy.params()) p = categorical ? rng.normal() : (rng.uniform() - 0.5) * 10.0;
    Policy reference = policy;
    for (double& p : reference.params()) p += rng.normal() * 0.5;
    Policy old = policy;
    for (double& p : old.params()) p += rng.normal() * 0.15;

    PromptContext prompt;
    prompt.index = rng.below(prompts);
    const std::size_t g = 2 + rng.below(7);
    ResponseGroup group;
    for (std::size_t i = 0; i < g; ++i) {
      const double o = old.sample(prompt, rng);
      group.responses.push_back(o);
      group.old_logprobs.push_back(old.logprob(prompt, o));
      group.advantages.push_back(rng.normal());
    }
    const double beta = rng.uniform();

    // Stay away from the clip kinks, where the objective is not differentiable.
    bool near_kink = false;
    for (std::size_t i = 0; i < g; ++i) {
      const double rho = std::exp(policy.logprob(prompt, group.responses[i]) - group.old_logprobs[i]);
      near_kink |= std::fabs(rho - (1.0 - clip)) < 1e-3 || std::fabs(rho - (1.0 + clip)) < 1e-3;
    }
    if (near_kink) continue;

    auto objective = [&](const Policy& p) {
      std::vector<double> lp;
      for (double o : group.responses) lp.push_back(p.logprob(prompt, o));
      return clipped_surrogate(group.old_logprobs, lp, group.advantages, clip) +
             beta * kl_divergence(p, reference, prompt);
    };

    std::vector<double> analytic = surrogate_gradient(policy, prompt, group, clip);
    const auto klg = kl_gradient(policy, reference, prompt);
    for (std::size_t k = 0; k < analytic.size(); ++k) analytic[k] += beta * klg[k];

    std::vector<double> numeric(analytic.size());
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      const double h = 1e-5 * std::max(1.0, std::fabs(policy.params()[k]));
      Policy plus = policy, minus = policy;
      plus.params()[k] += h;
      minus.params()[k] -= h;
      numeric[k] = (objective(plus) - objective(minus)) / (2.0 * h);
    }
    std::vector<double> diff(analytic.size());
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = analytic[k] - numeric[k];
    const double scale = std::max({l2(analytic), l2(numeric), 1e-8});
    return {l2(diff) / scale, categorical};
  }
}

// --- misc -----------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.c_str(), "rb");
  if (!f) return {};
  std::string s;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, f)) > 0;) s.append(buf, n);
  std::fclose(f);
  return s;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("chartrl-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
