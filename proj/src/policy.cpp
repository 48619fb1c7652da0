#include "chartrl/policy.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <numbers>

#include "chartrl/errors.hpp"

namespace chartrl {

namespace {

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

double log_sum_exp(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - top);
  return top + std::log(z);
}

std::string fmt(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::size_t option_index(double outcome, std::size_t k) {
  if (!(outcome >= 0.0) || outcome != std::floor(outcome) || outcome >= static_cast<double>(k)) {
    throw UsageError("categorical outcome out of range");
  }
  return static_cast<std::size_t>(outcome);
}

}  // namespace

Policy::Policy(PolicyFamily family, std::size_t num_prompts, std::size_t block, double sigma)
    : family_(family),
      num_prompts_(num_prompts),
      block_(block),
      sigma_(sigma),
      params_(num_prompts * block, 0.0) {}

Policy Policy::gaussian(std::size_t num_prompts, double init_mean, double sigma) {
  if (num_prompts == 0) throw UsageError("policy needs at least one prompt");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw UsageError("sigma must be positive");
  if (!std::isfinite(init_mean)) throw UsageError("initial mean must be finite");
  Policy p(PolicyFamily::gaussian_mean, num_prompts, 1, sigma);
  std::fill(p.params_.begin(), p.params_.end(), init_mean);
  return p;
}

Policy Policy::categorical(std::size_t num_prompts, std::size_t num_options) {
  if (num_prompts == 0) throw UsageError("policy needs at least one prompt");
  if (num_options < 2) throw UsageError("categorical policy needs K >= 2");
  return Policy(PolicyFamily::categorical_logits, num_prompts, num_options, 0.0);
}

void Policy::check_prompt(const PromptContext& prompt) const {
  if (prompt.index >= num_prompts_) throw UsageError("prompt index outside policy table");
}

std::span<const double> Policy::block(std::size_t prompt) const {
  if (prompt >= num_prompts_) throw UsageError("prompt index outside policy table");
  return std::span<const double>(params_).subspan(prompt * block_, block_);
}

double Policy::sample(const PromptContext& prompt, CounterRng& rng) const {
  check_prompt(prompt);
  if (family_ == PolicyFamily::gaussian_mean) return mean(prompt) + sigma_ * rng.normal();
  const auto p = probabilities(prompt);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<double>(i);
  }
  return static_cast<double>(p.size() - 1);
}

double Policy::logprob(const PromptContext& prompt, double outcome) const {
  check_prompt(prompt);
  if (family_ == PolicyFamily::gaussian_mean) {
    const double z = (outcome - mean(prompt)) / sigma_;
    return -0.5 * z * z - std::log(sigma_) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  const auto logits = block(prompt.index);
  return logits[option_index(outcome, block_)] - log_sum_exp(logits);
}

std::vector<double> Policy::grad_logprob(const PromptContext& prompt, double outcome) const {
  check_prompt(prompt);
  std::vector<double> g(params_.size(), 0.0);
  const std::size_t base = prompt.index * block_;
  if (family_ == PolicyFamily::gaussian_mean) {
    g[base] = (outcome - mean(prompt)) / (sigma_ * sigma_);
    return g;
  }
  const std::size_t chosen = option_index(outcome, block_);
  const auto p = probabilities(prompt);
  for (std::size_t j = 0; j < block_; ++j) g[base + j] = (j == chosen ? 1.0 : 0.0) - p[j];
  return g;
}

double Policy::mean(const PromptContext& prompt) const {
  if (family_ != PolicyFamily::gaussian_mean) throw UsageError("mean() needs a gaussian policy");
  return block(prompt.index)[0];
}

std::vector<double> Policy::probabilities(const PromptContext& prompt) const {
  if (family_ != PolicyFamily::categorical_logits) {
    throw UsageError("probabilities() needs a categorical policy");
  }
  return softmax(block(prompt.index));
}

std::string Policy::summary() const {
  std::string out;
  for (std::size_t i = 0; i < num_prompts_; ++i) {
    if (i) out += ';';
    if (family_ == PolicyFamily::gaussian_mean) {
      out += "mu=" + fmt(params_[i]);
    } else {
      const auto p = softmax(block(i));
      out += "p=";
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (j) out += '|';
        out += fmt(p[j]);
      }
    }
  }
  return out;
}

void check_compatible(const Policy& policy, const Policy& reference) {
  if (policy.family() != reference.family() || policy.num_prompts() != reference.num_prompts() ||
      policy.block_size() != reference.block_size()) {
    throw UsageError("policy and reference are defined on different outcome spaces");
  }
}

double kl_divergence(const Policy& policy, const Policy& reference, const PromptContext& prompt) {
  check_compatible(policy, reference);
  if (policy.family() == PolicyFamily::gaussian_mean) {
    const double s1 = policy.sigma();
    const double s2 = reference.sigma();
    const double d = policy.mean(prompt) - reference.mean(prompt);
    if (s1 == s2) return d * d / (2.0 * s1 * s1);
    return std::log(s2 / s1) + (s1 * s1 + d * d) / (2.0 * s2 * s2) - 0.5;
  }
  const auto p = policy.probabilities(prompt);
  const auto lp = policy.block(prompt.index);
  const auto lq = reference.block(prompt.index);
  const double lzp = log_sum_exp(lp);
  const double lzq = log_sum_exp(lq);
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    kl += p[j] * ((lp[j] - lzp) - (lq[j] - lzq));
  }
  return std::max(kl, 0.0);
}

std::vector<double> kl_gradient(const Policy& policy, const Policy& reference,
                                const PromptContext& prompt) {
  check_compatible(policy, reference);
  std::vector<double> g(policy.params().size(), 0.0);
  const std::size_t base = prompt.index * policy.block_size();
  if (policy.family() == PolicyFamily::gaussian_mean) {
    const double s2 = reference.sigma();
    g[base] = (policy.mean(prompt) - reference.mean(prompt)) / (s2 * s2);
    return g;
  }
  const auto p = policy.probabilities(prompt);
  const auto lp = policy.block(prompt.index);
  const auto lq = reference.block(prompt.index);
  const double lzp = log_sum_exp(lp);
  const double lzq = log_sum_exp(lq);
  std::vector<double> log_ratio(p.size());
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    log_ratio[j] = (lp[j] - lzp) - (lq[j] - lzq);
    kl += p[j] * log_ratio[j];
  }
  for (std::size_t j = 0; j < p.size(); ++j) g[base + j] = p[j] * (log_ratio[j] - kl);
  return g;
}

}  // namespace chartrl
