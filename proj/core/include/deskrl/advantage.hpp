#pragma once

#include <functional>
#include <string>
#include <vector>

#include "deskrl/model.hpp"

namespace deskrl {

// Reward over a complete token sequence (prefix plus continuation).
using SequenceReward = std::function<double(std::span<const int>)>;

// How continuations unroll: up to `horizon` new tokens, stopping early if
// stop_token (>= 0) is produced. The stop token itself is appended before
// the reward is taken, mirroring sample_completion.
struct RolloutSpec {
  int horizon = 1;
  int stop_token = -1;  // -1: run the full horizon
};

// Exact expected reward from `prefix` by enumerating every continuation.
// Refuses when V^horizon exceeds 1e6 leaves.
double exact_value(const PolicyModel& policy, std::span<const int> prefix,
                   const SequenceReward& reward_fn, const RolloutSpec& rollout);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo estimate of the same expectation from n >= 2 rollouts; the
// std_error uses the n-1 sample variance. Per-sample streams are derived
// from (rng, sample index), so the estimate is order-independent.
McEstimate mc_value(const PolicyModel& policy, std::span<const int> prefix,
                    const SequenceReward& reward_fn, int n, RngState& rng,
                    const RolloutSpec& rollout);

// A = R - V(s). The baseline enters as a constant: no gradient flows to it
// through policy losses.
double basic_advantage(double sequence_reward, double value_estimate);

// R' = R - beta * (logp_current - logp_reference), the per-token penalty
// that folds a KL estimate into the reward.
double kl_penalized_reward(double base_reward, double logp_current, double logp_reference,
                           double beta);

// Names the two model identities a KL penalty mixes, so configs cannot
// silently swap the anchor: the reference is the round-zero model, while
// ratios elsewhere use the latest sampler.
struct KlPenaltyConfig {
  double beta = 0.0;
  std::string reference_fingerprint;
  std::string sampler_fingerprint;
};

void validate_kl_penalty(const KlPenaltyConfig& cfg);

// Group-relative advantages: rewards minus their group mean. Sums to zero
// by construction.
std::vector<double> grpo_advantage(std::span<const double> rewards);

// Per-scored-token advantages for one sequence, either distinct per token
// (value-baseline style) or one broadcast sequence-level value.
struct AdvantageTable {
  std::vector<double> values;

  static AdvantageTable broadcast(double v, std::size_t n) {
    return AdvantageTable{std::vector<double>(n, v)};
  }
};

}  // namespace deskrl
