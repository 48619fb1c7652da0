#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "chartrl/rng.hpp"

namespace chartrl {

// One prompt of a toy environment. Numeric prompts carry a gold real;
// categorical prompts carry the index of the correct option.
struct PromptContext {
  std::size_t index = 0;
  double gold = 0.0;
  std::size_t correct_option = 0;
};

enum class PolicyFamily { gaussian_mean, categorical_logits };

// Tabular toy policy: one parameter block per prompt.
//   gaussian_mean:      block = {mu}, sigma fixed; outcome is a real.
//   categorical_logits: block = K logits; outcome is an option index.
class Policy {
 public:
  static Policy gaussian(std::size_t num_prompts, double init_mean, double sigma);
  static Policy categorical(std::size_t num_prompts, std::size_t num_options);

  PolicyFamily family() const { return family_; }
  std::size_t num_prompts() const { return num_prompts_; }
  std::size_t block_size() const { return block_; }
  std::size_t num_options() const { return block_; }  // categorical only
  double sigma() const { return sigma_; }

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  std::span<const double> block(std::size_t prompt) const;

  double sample(const PromptContext& prompt, CounterRng& rng) const;
  double logprob(const PromptContext& prompt, double outcome) const;
  // Gradient of logprob with respect to all parameters (zero outside the
  // prompt's block).
  std::vector<double> grad_logprob(const PromptContext& prompt, double outcome) const;

  double mean(const PromptContext& prompt) const;                         // gaussian
  std::vector<double> probabilities(const PromptContext& prompt) const;  // categorical

  std::string summary() const;

 private:
  Policy(PolicyFamily family, std::size_t num_prompts, std::size_t block, double sigma);
  void check_prompt(const PromptContext& prompt) const;

  PolicyFamily family_;
  std::size_t num_prompts_;
  std::size_t block_;
  double sigma_;
  std::vector<double> params_;
};

void check_compatible(const Policy& policy, const Policy& reference);

// KL(policy || reference) at one prompt, exact closed form.
double kl_divergence(const Policy& policy, const Policy& reference, const PromptContext& prompt);
// Gradient of kl_divergence with respect to the parameters of `policy`.
std::vector<double> kl_gradient(const Policy& policy, const Policy& reference,
                                const PromptContext& prompt);

}  // namespace chartrl
