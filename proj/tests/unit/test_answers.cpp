#include <doctest.h>

#include <cmath>
#include <limits>

#include "chartrl/answers.hpp"
#include "chartrl/errors.hpp"
#include "support/oracles.hpp"

using namespace chartrl;

TEST_SUITE("answers") {

TEST_CASE("parse_answer examples") {
  auto a = parse_answer("0.25");
  CHECK(a.kind() == AnswerKind::Numeric);
  CHECK(a.numeric_value() == 0.25);

  CHECK(parse_answer("17%").numeric_value() == 17.0);
  CHECK(parse_answer("0.17%").numeric_value() == 0.17);
  CHECK(parse_answer("1,234").numeric_value() == 1234.0);
  CHECK(parse_answer("$1,234.50").numeric_value() == 1234.5);
  CHECK(parse_answer("-€12").numeric_value() == -12.0);
  CHECK(parse_answer("  42  ").numeric_value() == 42.0);

  const auto list = parse_answer("[1, 2]");
  REQUIRE(list.kind() == AnswerKind::List);
  REQUIRE(list.elements().size() == 2);
  CHECK(list.elements()[0].numeric_value() == 1.0);
  CHECK(list.elements()[1].numeric_value() == 2.0);

  CHECK(parse_answer("Not Applicable").kind() == AnswerKind::Unanswerable);
  CHECK(parse_answer("Unanswerable").kind() == AnswerKind::Unanswerable);
  CHECK(parse_answer("unanswerable").kind() == AnswerKind::Unanswerable);

  const auto empty = parse_answer("");
  CHECK(empty.kind() == AnswerKind::Text);
  CHECK(empty.text_value().empty());
}

TEST_CASE("classification priority") {
  CHECK(parse_answer("Yes").kind() == AnswerKind::YesNo);
  CHECK(parse_answer(" no ").kind() == AnswerKind::YesNo);
  CHECK(parse_answer("b").kind() == AnswerKind::OptionLabel);
  CHECK(parse_answer("iv").kind() == AnswerKind::OptionLabel);
  CHECK(parse_answer("Blue bars").kind() == AnswerKind::Text);
  CHECK(parse_answer("1e3").kind() == AnswerKind::Numeric);
  // No unit inference beyond the listed symbols.
  CHECK(parse_answer("12 kg").kind() == AnswerKind::Text);
  CHECK(parse_answer("nan").kind() == AnswerKind::Text);
  CHECK(parse_answer("inf").kind() == AnswerKind::Text);
  // Nested brackets are not a list.
  CHECK(parse_answer("[[1], 2]").kind() != AnswerKind::List);
}

TEST_CASE("classify_answer_type examples") {
  CHECK(classify_answer_type(Answer::numeric(39)) == AnswerType::numeric);
  CHECK(classify_answer_type(Answer::yes_no("No")) == AnswerType::yes_no);
  CHECK(classify_answer_type(Answer::unanswerable()) == AnswerType::unanswerable);
  CHECK(classify_answer_type(parse_answer("[a, b]")) == AnswerType::list);
  CHECK(classify_answer_type(parse_answer("c")) == AnswerType::option);
  CHECK(classify_answer_type(parse_answer("Asia")) == AnswerType::textual);
}

TEST_CASE("answers_match examples") {
  MatchPolicy p;
  CHECK(answers_match(Answer::numeric(104), Answer::numeric(100), p));
  CHECK_FALSE(answers_match(Answer::numeric(106), Answer::numeric(100), p));
  CHECK(answers_match(Answer::text("yes"), Answer::yes_no("Yes"), p));
  CHECK(answers_match(Answer::numeric(0), Answer::numeric(0), p));
  CHECK(answers_match(Answer::numeric(5e-7), Answer::numeric(0), p));
  CHECK_FALSE(answers_match(Answer::numeric(2e-6), Answer::numeric(0), p));
}

TEST_CASE("tolerance boundary is inclusive") {
  MatchPolicy p;
  // 105 - 100 == 0.05 * 100 evaluated exactly, so the edge counts as a match.
  CHECK(answers_match(Answer::numeric(105), Answer::numeric(100), p));
  CHECK_FALSE(answers_match(Answer::numeric(std::nextafter(105.0, 200.0)), Answer::numeric(100), p));
  CHECK(answers_match(Answer::numeric(95), Answer::numeric(100), p));
  CHECK(answers_match(Answer::numeric(-104), Answer::numeric(-100), p));
  CHECK_FALSE(answers_match(Answer::numeric(100), Answer::numeric(-100), p));
}

TEST_CASE("case policy") {
  MatchPolicy insensitive;
  MatchPolicy sensitive;
  sensitive.case_sensitive = true;
  CHECK(answers_match(parse_answer("asia"), parse_answer("Asia"), insensitive));
  CHECK_FALSE(answers_match(parse_answer("asia"), parse_answer("Asia"), sensitive));
  CHECK(answers_match(parse_answer("North  America"), parse_answer("north america"), insensitive));
}

TEST_CASE("lists compare element-wise and in order") {
  MatchPolicy p;
  CHECK(answers_match(parse_answer("[1, 2]"), parse_answer("[1.04, 2]"), p));
  CHECK_FALSE(answers_match(parse_answer("[2, 1]"), parse_answer("[1, 2]"), p));
  CHECK_FALSE(answers_match(parse_answer("[1, 2]"), parse_answer("[1, 2, 3]"), p));
  CHECK_FALSE(answers_match(parse_answer("1"), parse_answer("[1]"), p));
}

TEST_CASE("unanswerable only matches itself") {
  MatchPolicy p;
  CHECK(answers_match(parse_answer("Not Applicable"), parse_answer("Unanswerable"), p));
  CHECK_FALSE(answers_match(parse_answer("0"), parse_answer("Unanswerable"), p));
  CHECK_FALSE(answers_match(parse_answer("Unanswerable"), parse_answer("Yes"), p));
}

TEST_CASE("text that reads as a number is coerced against numeric gold") {
  MatchPolicy p;
  CHECK(answers_match(Answer::text("1 000"), Answer::numeric(1000), p));
  CHECK_FALSE(answers_match(Answer::text("about 1000"), Answer::numeric(1000), p));
}

TEST_CASE("match policy validation") {
  MatchPolicy bad;
  bad.numeric_tolerance = 1.0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad.numeric_tolerance = -0.1;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  CHECK_NOTHROW(MatchPolicy::strict().validate());
}

TEST_CASE("canonical form is idempotent under parsing") {
  for (const char* raw : {"0.25", "17%", "[1, 2]", "Not Applicable", "1,234", "Yes", "b", "Blue  bars",
                          "-0", "$3.50", "[a, b]", "1e-7", ""}) {
    const Answer once = parse_answer(raw);
    const Answer twice = parse_answer(once.canonical());
    CAPTURE(raw);
    CHECK(once.same_value(twice));
    CHECK(once.canonical() == twice.canonical());
  }
}

TEST_CASE("matching is reflexive") {
  chartrl::CounterRng rng(11);
  MatchPolicy strict = MatchPolicy::strict();
  for (int i = 0; i < 500; ++i) {
    const double v = (rng.uniform() - 0.5) * std::pow(10.0, static_cast<double>(rng.below(12)) - 4.0);
    const Answer a = Answer::numeric(v);
    CHECK(answers_match(a, a, strict));
  }
  for (const char* raw : {"Yes", "b", "Asia", "[1, 2]", "Unanswerable"}) {
    CHECK(answers_match(parse_answer(raw), parse_answer(raw), strict));
  }
}

TEST_CASE("matching is monotone in tolerance") {
  chartrl::CounterRng rng(12);
  const double tols[] = {0.0, 0.01, 0.05, 0.1, 0.5};
  for (int i = 0; i < 500; ++i) {
    const double g = 1.0 + rng.uniform() * 1000.0;
    const double p = g * (0.5 + rng.uniform());
    bool prev = false;
    for (double t : tols) {
      MatchPolicy pol;
      pol.numeric_tolerance = t;
      const bool m = answers_match(Answer::numeric(p), Answer::numeric(g), pol);
      CHECK((!prev || m));
      prev = m;
    }
  }
}

TEST_CASE("relative tolerance agrees with exact rational arithmetic") {
  const auto cases = oracle::random_eval_cases(1000, 2024);
  std::size_t numeric = 0;
  for (const auto& c : cases) {
    if (!c.numeric) continue;
    ++numeric;
    for (double tol : {0.0, 0.05}) {
      MatchPolicy pol;
      pol.numeric_tolerance = tol;
      CAPTURE(c.pred);
      CAPTURE(c.gold_value);
      CHECK(answers_match(Answer::numeric(c.pred_value), c.gold, pol) ==
            oracle::numeric_match(c.pred_value, c.gold_value, tol));
    }
  }
  CHECK(numeric > 600);
}

TEST_CASE("within_relative_tolerance on hard edges") {
  // 0.1 is not representable, so 0.3 vs 0.1 * 3 lands on either side of the edge
  // depending on rounding; compare against rationals rather than intuition.
  const double pairs[][2] = {{0.3, 0.1 * 3}, {1.05, 1.0}, {2.1, 2.0}, {1e300, 1.05e300}, {1e-300, 1.05e-300}};
  for (const auto& pr : pairs) {
    CHECK(within_relative_tolerance(pr[0], pr[1], 0.05) == oracle::numeric_match(pr[0], pr[1], 0.05));
    CHECK(within_relative_tolerance(pr[1], pr[0], 0.05) == oracle::numeric_match(pr[1], pr[0], 0.05));
  }
}

}  // TEST_SUITE
