#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "chartrl/env.hpp"
#include "chartrl/policy.hpp"
#include "chartrl/rng.hpp"

namespace chartrl {

struct ResponseGroup {
  std::size_t prompt_id = 0;
  std::vector<double> responses;
  std::vector<double> rewards;
  std::vector<double> old_logprobs;
  std::vector<double> advantages;
};

struct GrpoConfig {
  std::size_t group_size = 8;
  double learning_rate = 1e-6;
  double kl_beta = 0.04;
  double clip_epsilon = 0.2;
  std::size_t steps = 1;
  std::uint64_t seed = 0;
  double degenerate_std_epsilon = 1e-8;
  std::size_t eval_interval = 100;

  void validate() const;
};

struct StepReport {
  std::size_t step = 0;
  std::size_t prompt_index = 0;
  double mean_reward = 0.0;
  double kl = 0.0;  // at the sampled prompt, before the update
  double surrogate_loss = 0.0;
  double grad_norm = 0.0;
  double surrogate_grad_norm = 0.0;
  bool degenerate = false;

  bool operator==(const StepReport&) const = default;
};

struct TraceRecord {
  std::size_t step = 0;
  double mean_reward = 0.0;  // averaged over the steps since the previous record
  double mean_kl = 0.0;      // averaged over all env prompts
  std::string policy_summary;
};

struct TrainingTrace {
  std::vector<TraceRecord> records;
  std::size_t steps = 0;
  std::size_t degenerate_groups = 0;
  std::size_t surrogate_nonzero_steps = 0;
  double max_surrogate_grad_norm = 0.0;

  // step,mean_reward,mean_kl,policy_summary
  std::string to_csv() const;
};

// Raised by train_loop; carries the 1-based index of the failing step.
class StepError : public std::runtime_error {
 public:
  StepError(std::size_t step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// (r_i - mean) / population std; all zeros when std < degenerate_std_epsilon.
std::vector<double> group_advantages(std::span<const double> rewards,
                                     double degenerate_std_epsilon = 1e-8);

// -mean_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i), rho_i = exp(new_i - old_i).
double clipped_surrogate(std::span<const double> old_logprobs,
                         std::span<const double> new_logprobs,
                         std::span<const double> advantages, double clip_epsilon);

// Draws G i.i.d. outcomes and records their log-probabilities.
ResponseGroup sample_group(const Policy& policy, const PromptContext& prompt, std::size_t group_size,
                           CounterRng& rng);

// Gradient of clipped_surrogate with respect to the policy parameters, for a
// scored group evaluated at the policy's current parameters.
std::vector<double> surrogate_gradient(const Policy& policy, const PromptContext& prompt,
                                       const ResponseGroup& group, double clip_epsilon);

StepReport grpo_update_step(Policy& policy, const Policy& reference, Env& env,
                            const GrpoConfig& config, CounterRng& rng);

TrainingTrace train_loop(Policy& policy, const Policy& reference, Env& env,
                         const GrpoConfig& config);

// Mean KL(policy || reference) over the env's prompts.
double mean_kl(const Policy& policy, const Policy& reference, const Env& env);

std::string format_double(double v);

}  // namespace chartrl
