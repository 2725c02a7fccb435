#include "deskrl/advantage.hpp"

#include <cmath>
#include <string>

#include "deskrl/error.hpp"
#include "deskrl/numerics.hpp"

namespace deskrl {

namespace {

constexpr double kLeafBudget = 1e6;

void check_rollout(const RolloutSpec& rollout, int vocab_size) {
  if (rollout.horizon < 1) throw InvalidInputError("rollout horizon must be >= 1");
  if (rollout.stop_token >= vocab_size) {
    throw InvalidInputError("stop token outside the vocabulary");
  }
}

// Depth-first accumulation of prob * reward over the continuation tree.
double enumerate(const PolicyModel& policy, std::vector<int>& tokens, int depth,
                 double prob, const SequenceReward& reward_fn, const RolloutSpec& rollout) {
  ProbVector dist = next_token_dist(policy, tokens);
  double acc = 0.0;
  for (int v = 0; v < static_cast<int>(dist.size()); ++v) {
    double p = dist[static_cast<std::size_t>(v)];
    if (p == 0.0) continue;
    tokens.push_back(v);
    if (depth + 1 == rollout.horizon || v == rollout.stop_token) {
      acc += prob * p * reward_fn(tokens);
    } else {
      acc += enumerate(policy, tokens, depth + 1, prob * p, reward_fn, rollout);
    }
    tokens.pop_back();
  }
  return acc;
}

}  // namespace

double exact_value(const PolicyModel& policy, std::span<const int> prefix,
                   const SequenceReward& reward_fn, const RolloutSpec& rollout) {
  check_rollout(rollout, policy.spec.vocab_size);
  double leaves = std::pow(static_cast<double>(policy.spec.vocab_size), rollout.horizon);
  if (leaves > kLeafBudget) {
    throw BudgetError("exact_value needs " + std::to_string(leaves) +
                      " leaves, budget is " + std::to_string(kLeafBudget));
  }
  std::vector<int> tokens(prefix.begin(), prefix.end());
  return enumerate(policy, tokens, 0, 1.0, reward_fn, rollout);
}

McEstimate mc_value(const PolicyModel& policy, std::span<const int> prefix,
                    const SequenceReward& reward_fn, int n, RngState& rng,
                    const RolloutSpec& rollout) {
  check_rollout(rollout, policy.spec.vocab_size);
  if (n < 2) throw InvalidInputError("mc_value needs n >= 2 samples");

  std::vector<double> rewards(static_cast<std::size_t>(n));
  std::vector<int> tokens;
  for (int i = 0; i < n; ++i) {
    RngState stream = rng.derive(static_cast<std::uint64_t>(i));
    tokens.assign(prefix.begin(), prefix.end());
    for (int d = 0; d < rollout.horizon; ++d) {
      int tok = categorical_sample(next_token_dist(policy, tokens), stream);
      tokens.push_back(tok);
      if (tok == rollout.stop_token) break;
    }
    rewards[static_cast<std::size_t>(i)] = reward_fn(tokens);
  }

  McEstimate est;
  for (double r : rewards) est.mean += r;
  est.mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double r : rewards) ss += (r - est.mean) * (r - est.mean);
  est.std_error = std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
  return est;
}

double basic_advantage(double sequence_reward, double value_estimate) {
  return sequence_reward - value_estimate;
}

double kl_penalized_reward(double base_reward, double logp_current, double logp_reference,
                           double beta) {
  if (beta < 0.0 || !std::isfinite(beta)) {
    throw InvalidInputError("KL penalty coefficient must be finite and >= 0");
  }
  return base_reward - beta * (logp_current - logp_reference);
}

void validate_kl_penalty(const KlPenaltyConfig& cfg) {
  if (cfg.beta < 0.0 || !std::isfinite(cfg.beta)) {
    throw InvalidInputError("KL penalty coefficient must be finite and >= 0");
  }
  if (cfg.reference_fingerprint.empty() || cfg.sampler_fingerprint.empty()) {
    throw InvalidInputError("KL penalty config must name both model fingerprints");
  }
}

std::vector<double> grpo_advantage(std::span<const double> rewards) {
  if (rewards.empty()) throw InvalidInputError("grpo_advantage: empty group");
  if (!all_finite(rewards)) throw InvalidInputError("grpo_advantage: non-finite reward");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
  return adv;
}

}  // namespace deskrl
