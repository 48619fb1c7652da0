#include <doctest.h>

#include <cmath>
#include <vector>

#include "chartrl/env.hpp"
#include "chartrl/errors.hpp"
#include "chartrl/grpo.hpp"
#include "support/oracles.hpp"

using namespace chartrl;

namespace {

double mean_of(const std::vector<double>& v) {
  oracle::Wide s = 0;
  for (double x : v) s += x;
  return static_cast<double>(s / v.size());
}

double population_std(const std::vector<double>& v) {
  const oracle::Wide m = mean_of(v);
  oracle::Wide s = 0;
  for (double x : v) s += (oracle::Wide(x) - m) * (oracle::Wide(x) - m);
  return static_cast<double>(boost::multiprecision::sqrt(s / v.size()));
}

}  // namespace

TEST_SUITE("grpo") {

TEST_CASE("group_advantages examples") {
  const auto a = group_advantages(std::vector<double>{1, 0, 0, 0});
  REQUIRE(a.size() == 4);
  CHECK(a[0] == doctest::Approx(1.732051).epsilon(1e-6));
  for (int i = 1; i < 4; ++i) CHECK(a[i] == doctest::Approx(-0.577350).epsilon(1e-6));

  const auto b = group_advantages(std::vector<double>{2, 1});
  CHECK(b[0] == 1.0);
  CHECK(b[1] == -1.0);

  for (double x : group_advantages(std::vector<double>{1, 1, 1, 1})) CHECK(x == 0.0);
}

TEST_CASE("group_advantages errors") {
  CHECK_THROWS_AS(group_advantages(std::vector<double>{1.0}), UsageError);
  CHECK_THROWS_AS(group_advantages(std::vector<double>{}), UsageError);
}

TEST_CASE("advantages are standardized with the population std") {
  CounterRng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t g = std::size_t{2} << rng.below(3);
    std::vector<double> r(g);
    for (double& x : r) x = rng.uniform();
    const auto a = group_advantages(r);
    CHECK(std::fabs(mean_of(a)) < 1e-9);
    CHECK(std::fabs(population_std(a) - 1.0) < 1e-6);

    // Shifting or positively rescaling the rewards leaves the advantages alone.
    std::vector<double> shifted = r, scaled = r;
    for (double& x : shifted) x += 3.25;
    for (double& x : scaled) x *= 7.5;
    const auto as = group_advantages(shifted);
    const auto ak = group_advantages(scaled);
    for (std::size_t i = 0; i < g; ++i) {
      CHECK(std::fabs(as[i] - a[i]) < 1e-9);
      CHECK(std::fabs(ak[i] - a[i]) < 1e-9);
    }
  }
}

TEST_CASE("near-constant groups are degenerate") {
  const auto a = group_advantages(std::vector<double>{0.5, 0.5 + 1e-10, 0.5});
  for (double x : a) CHECK(x == 0.0);
}

TEST_CASE("kl_divergence examples") {
  PromptContext prompt;
  auto p = Policy::gaussian(1, 3.0, 2.0);
  auto q = p;
  CHECK(kl_divergence(p, q, prompt) == 0.0);
  p.params()[0] = 5.0;  // one sigma away
  CHECK(kl_divergence(p, q, prompt) == doctest::Approx(0.5).epsilon(1e-15));

  auto c = Policy::categorical(1, 4);
  auto d = c;
  CHECK(kl_divergence(c, d, prompt) == 0.0);
  c.params()[2] = 1.0;
  // KL(p || uniform) = log K - H(p)
  const auto probs = c.probabilities(prompt);
  double h = 0.0;
  for (double x : probs) h -= x * std::log(x);
  CHECK(kl_divergence(c, d, prompt) == doctest::Approx(std::log(4.0) - h).epsilon(1e-12));
}

TEST_CASE("kl_divergence rejects mismatched spaces") {
  PromptContext prompt;
  CHECK_THROWS_AS(kl_divergence(Policy::gaussian(1, 0, 1), Policy::categorical(1, 3), prompt), UsageError);
  CHECK_THROWS_AS(kl_divergence(Policy::categorical(1, 4), Policy::categorical(1, 3), prompt), UsageError);
}

TEST_CASE("clipped_surrogate examples") {
  const double lp0 = -1.0;
  CHECK(clipped_surrogate(std::vector<double>{lp0}, std::vector<double>{lp0}, std::vector<double>{2.0}, 0.2) ==
        -2.0);
  CHECK(clipped_surrogate(std::vector<double>{0.0}, std::vector<double>{std::log(1.5)}, std::vector<double>{1.0},
                          0.2) == doctest::Approx(-1.2).epsilon(1e-15));
  CHECK(clipped_surrogate(std::vector<double>{0.0}, std::vector<double>{std::log(0.5)},
                          std::vector<double>{-1.0}, 0.2) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK_THROWS_AS(clipped_surrogate(std::vector<double>{0.0}, std::vector<double>{0.0, 0.0},
                                    std::vector<double>{1.0}, 0.2),
                  UsageError);
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto c = oracle::gradient_check(seed);
    CAPTURE(seed);
    CHECK(c.relative_error < 1e-5);
  }
}

TEST_CASE("beta 0 with equal rewards leaves parameters bitwise unchanged") {
  Env env = make_categorical_env(3, RewardScheme::cerm, 1);
  // A policy that always picks a wrong option gets all-zero rewards.
  Policy policy = env.initial_policy();
  const std::size_t wrong = (env.prompts()[0].correct_option + 1) % 3;
  policy.params()[wrong] = 60.0;
  const Policy reference = policy;
  GrpoConfig cfg;
  cfg.kl_beta = 0.0;
  cfg.learning_rate = 10.0;
  CounterRng rng(3);
  const std::vector<double> before(policy.params().begin(), policy.params().end());
  const auto report = grpo_update_step(policy, reference, env, cfg, rng);
  CHECK(report.degenerate);
  CHECK(report.surrogate_grad_norm == 0.0);
  const std::vector<double> after(policy.params().begin(), policy.params().end());
  CHECK(before == after);
}

TEST_CASE("large beta pulls parameters toward the reference") {
  Env env = make_numeric_env({50, 150}, 10.0, RewardScheme::binary_exact, 2);
  Policy reference = env.initial_policy(100.0);
  Policy policy = reference;
  policy.params()[0] = 130.0;
  GrpoConfig cfg;
  cfg.kl_beta = 5.0;
  cfg.learning_rate = 2.0;
  CounterRng rng(4);
  double kl = kl_divergence(policy, reference, env.prompts()[0]);
  for (int i = 0; i < 5; ++i) {
    grpo_update_step(policy, reference, env, cfg, rng);
    const double next = kl_divergence(policy, reference, env.prompts()[0]);
    CHECK(next < kl);
    kl = next;
  }
  CHECK(std::fabs(policy.params()[0] - 100.0) < 30.0);
}

TEST_CASE("seeded steps are reproducible") {
  auto run = [] {
    Env env = make_numeric_env({50, 150}, 10.0, RewardScheme::cerm, 9, 3);
    Policy policy = env.initial_policy(100.0);
    const Policy reference = policy;
    GrpoConfig cfg;
    cfg.learning_rate = 4.0;
    CounterRng rng(21);
    std::vector<StepReport> out;
    for (int i = 0; i < 20; ++i) out.push_back(grpo_update_step(policy, reference, env, cfg, rng));
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("train_loop") {
  Env env = make_numeric_env({50, 150}, 10.0, RewardScheme::cerm, 0);
  Policy policy = env.initial_policy(100.0);
  const Policy reference = policy;
  GrpoConfig cfg;
  cfg.steps = 0;
  CHECK_THROWS_AS(train_loop(policy, reference, env, cfg), UsageError);

  auto trace_csv = [] {
    Env e = make_numeric_env({50, 150}, 10.0, RewardScheme::cerm, 0);
    Policy p = e.initial_policy(100.0);
    const Policy ref = p;
    GrpoConfig c;
    c.learning_rate = 4.0;
    c.steps = 250;
    c.eval_interval = 50;
    return train_loop(p, ref, e, c).to_csv();
  };
  const auto a = trace_csv();
  CHECK(a == trace_csv());
  CHECK(a.rfind("step,mean_reward,mean_kl,policy_summary\n", 0) == 0);
  CHECK(std::count(a.begin(), a.end(), '\n') == 6);
}

TEST_CASE("config validation") {
  GrpoConfig cfg;
  cfg.group_size = 1;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = {};
  cfg.clip_epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = {};
  cfg.kl_beta = -1.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}

}  // TEST_SUITE
