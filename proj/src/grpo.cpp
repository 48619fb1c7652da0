#include "chartrl/grpo.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>

#include "chartrl/errors.hpp"

namespace chartrl {

namespace {

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void check_lengths(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || b != c) throw UsageError("surrogate inputs have mismatched lengths");
  if (a == 0) throw UsageError("surrogate needs at least one sample");
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

void GrpoConfig::validate() const {
  if (group_size < 2) throw UsageError("group_size must be at least 2");
  if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
  if (!(kl_beta >= 0.0)) throw UsageError("kl_beta must be nonnegative");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw UsageError("clip_epsilon must lie in (0, 1)");
  if (!(degenerate_std_epsilon > 0.0)) throw UsageError("degenerate_std_epsilon must be positive");
  if (eval_interval == 0) throw UsageError("eval_interval must be positive");
}

std::vector<double> group_advantages(std::span<const double> rewards,
                                     double degenerate_std_epsilon) {
  if (rewards.size() < 2) throw UsageError("a group needs at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) {
    if (!std::isfinite(r)) throw UsageError("rewards must be finite");
    mean += r;
  }
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std = std::sqrt(var / n);
  std::vector<double> adv(rewards.size(), 0.0);
  if (std < degenerate_std_epsilon) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / std;
  return adv;
}

double clipped_surrogate(std::span<const double> old_logprobs,
                         std::span<const double> new_logprobs,
                         std::span<const double> advantages, double clip_epsilon) {
  check_lengths(old_logprobs.size(), new_logprobs.size(), advantages.size());
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw UsageError("clip_epsilon must lie in (0, 1)");
  double acc = 0.0;
  for (std::size_t i = 0; i < advantages.size(); ++i) {
    const double rho = std::exp(new_logprobs[i] - old_logprobs[i]);
    const double clipped = std::clamp(rho, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    acc += std::min(rho * advantages[i], clipped * advantages[i]);
  }
  return -acc / static_cast<double>(advantages.size());
}

ResponseGroup sample_group(const Policy& policy, const PromptContext& prompt, std::size_t group_size,
                           CounterRng& rng) {
  if (group_size < 2) throw UsageError("group size must be at least 2");
  ResponseGroup group;
  group.prompt_id = prompt.index;
  group.responses.reserve(group_size);
  group.old_logprobs.reserve(group_size);
  for (std::size_t i = 0; i < group_size; ++i) {
    const double o = policy.sample(prompt, rng);
    group.responses.push_back(o);
    group.old_logprobs.push_back(policy.logprob(prompt, o));
  }
  return group;
}

std::vector<double> surrogate_gradient(const Policy& policy, const PromptContext& prompt,
                                       const ResponseGroup& group, double clip_epsilon) {
  const std::size_t g = group.responses.size();
  check_lengths(g, group.old_logprobs.size(), group.advantages.size());
  std::vector<double> grad(policy.params().size(), 0.0);
  const double lo = 1.0 - clip_epsilon;
  const double hi = 1.0 + clip_epsilon;
  for (std::size_t i = 0; i < g; ++i) {
    const double a = group.advantages[i];
    if (a == 0.0) continue;
    const double rho = std::exp(policy.logprob(prompt, group.responses[i]) - group.old_logprobs[i]);
    const double clipped = std::clamp(rho, lo, hi);
    // The clipped branch is constant in the parameters.
    const bool unclipped_active = (rho >= lo && rho <= hi) || rho * a < clipped * a;
    if (!unclipped_active) continue;
    const auto glp = policy.grad_logprob(prompt, group.responses[i]);
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] -= a * rho * glp[k];
  }
  for (double& v : grad) v /= static_cast<double>(g);
  return grad;
}

StepReport grpo_update_step(Policy& policy, const Policy& reference, Env& env,
                            const GrpoConfig& config, CounterRng& rng) {
  check_compatible(policy, reference);
  const PromptContext prompt = env.next_prompt();
  ResponseGroup group = sample_group(policy, prompt, config.group_size, rng);
  group.rewards.reserve(group.responses.size());
  for (double o : group.responses) group.rewards.push_back(env.reward(prompt, o));
  group.advantages = group_advantages(group.rewards, config.degenerate_std_epsilon);

  StepReport report;
  report.prompt_index = prompt.index;
  double reward_sum = 0.0;
  for (double r : group.rewards) reward_sum += r;
  report.mean_reward = reward_sum / static_cast<double>(group.rewards.size());
  report.degenerate = std::all_of(group.advantages.begin(), group.advantages.end(),
                                  [](double a) { return a == 0.0; });
  report.kl = kl_divergence(policy, reference, prompt);

  std::vector<double> new_logprobs;
  new_logprobs.reserve(group.responses.size());
  for (double o : group.responses) new_logprobs.push_back(policy.logprob(prompt, o));
  report.surrogate_loss =
      clipped_surrogate(group.old_logprobs, new_logprobs, group.advantages, config.clip_epsilon);

  std::vector<double> grad = surrogate_gradient(policy, prompt, group, config.clip_epsilon);
  report.surrogate_grad_norm = l2_norm(grad);
  if (config.kl_beta > 0.0) {
    const auto kl_grad = kl_gradient(policy, reference, prompt);
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += config.kl_beta * kl_grad[k];
  }
  report.grad_norm = l2_norm(grad);

  auto params = policy.params();
  for (std::size_t k = 0; k < grad.size(); ++k) params[k] -= config.learning_rate * grad[k];
  for (double p : params) {
    if (!std::isfinite(p)) throw std::runtime_error("policy parameters diverged");
  }
  return report;
}

double mean_kl(const Policy& policy, const Policy& reference, const Env& env) {
  double acc = 0.0;
  for (const auto& p : env.prompts()) acc += kl_divergence(policy, reference, p);
  return acc / static_cast<double>(env.prompts().size());
}

TrainingTrace train_loop(Policy& policy, const Policy& reference, Env& env,
                         const GrpoConfig& config) {
  if (config.steps < 1) throw UsageError("train_loop needs steps >= 1");
  config.validate();
  check_compatible(policy, reference);
  CounterRng rng = CounterRng(config.seed).fork(2);
  TrainingTrace trace;
  double window_reward = 0.0;
  std::size_t window_steps = 0;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    StepReport report;
    try {
      report = grpo_update_step(policy, reference, env, config, rng);
    } catch (const std::exception& e) {
      throw StepError(step, e.what());
    }
    report.step = step;
    ++trace.steps;
    trace.degenerate_groups += report.degenerate;
    if (report.surrogate_grad_norm != 0.0) ++trace.surrogate_nonzero_steps;
    trace.max_surrogate_grad_norm = std::max(trace.max_surrogate_grad_norm, report.surrogate_grad_norm);
    window_reward += report.mean_reward;
    ++window_steps;
    if (step % config.eval_interval == 0 || step == config.steps) {
      TraceRecord rec;
      rec.step = step;
      rec.mean_reward = window_reward / static_cast<double>(window_steps);
      rec.mean_kl = mean_kl(policy, reference, env);
      rec.policy_summary = policy.summary();
      trace.records.push_back(std::move(rec));
      window_reward = 0.0;
      window_steps = 0;
    }
  }
  return trace;
}

std::string TrainingTrace::to_csv() const {
  std::string out = "step,mean_reward,mean_kl,policy_summary\n";
  for (const auto& r : records) {
    out += std::to_string(r.step) + ',' + format_double(r.mean_reward) + ',' +
           format_double(r.mean_kl) + ',' + r.policy_summary + '\n';
  }
  return out;
}

}  // namespace chartrl
