#pragma once

#include <string>
#include <vector>

#include "deskrl/advantage.hpp"
#include "deskrl/loss_report.hpp"
#include "deskrl/model.hpp"
#include "deskrl/task.hpp"

namespace deskrl {

// One sampled completion with everything a ratio loss needs later: the
// sampler's per-token log-probs are cached at collection time and tied to
// the sampler's fingerprint, because recomputing them from a checkpoint
// that has drifted silently corrupts every ratio downstream.
struct RolloutSample {
  Text text;
  int score_from = 1;                    // first scored position, 1-based
  std::vector<double> sampler_logprobs;  // one per scored token
  double reward = 0.0;
  AdvantageTable advantages;             // filled by the trainer before ratio losses
};

struct RolloutBatch {
  std::string sampler_fingerprint;
  std::vector<RolloutSample> samples;
};

// Samples `per_prompt` completions per prompt and caches sampler log-probs
// plus rewards. Advantages are left empty.
RolloutBatch make_rollout_batch(const PolicyModel& sampler,
                                const std::vector<std::vector<int>>& prompts, int per_prompt,
                                double temperature, int max_new_tokens, bool answer_only,
                                int stop_token, RngState& rng, const SequenceReward& reward_fn);

// Plain policy gradient with a frozen value baseline:
//   loss = -(1/S) sum_i sum_t (R_i - V(s_it)) log pi(a_it | s_it).
// The baseline is a constant in this loss; its own fit is a separate
// regression.
LossReport reinforce_loss(const PolicyModel& policy, const RolloutBatch& batch,
                          const ValueModel& baseline);

// Unclipped importance-weighted objective:
//   loss = -(1/S) sum_i sum_t exp(lp_new - lp_sampler) * A_it.
// Log-ratios above 30 produce a sentinel report instead of an overflowing
// step. Requires batch advantages to be filled.
LossReport ratio_loss(const PolicyModel& policy_new, const RolloutBatch& batch);

// ratio_loss plus beta times the mean per-token KL(pi_old || pi_new),
// the KL taken exactly over the whole vocabulary at each scored position.
LossReport trpo_loss(const PolicyModel& policy_new, const PolicyModel& policy_old,
                     const RolloutBatch& batch, double beta);

// Trust-region diagnostics for a proposed update. The binding criterion is
// the batch mean (the relaxation actually enforced by the trainer); the
// per-token max is reported alongside since max-satisfied implies
// mean-satisfied.
struct TrustRegionReport {
  double mean_kl = 0.0;
  double max_kl = 0.0;
  double delta = 0.0;
  bool mean_satisfied = false;
  bool max_satisfied = false;
};

TrustRegionReport trpo_constraint_report(const PolicyModel& policy_new,
                                         const PolicyModel& policy_old,
                                         const RolloutBatch& batch, double delta);

// Clipped surrogate: per token min(r*A, clamp(r, 1-eps, 1+eps)*A). Tokens
// where the clipped branch strictly wins contribute exactly zero gradient.
// policy_sampler must match the batch fingerprint.
LossReport ppo_loss(const PolicyModel& policy_new, const PolicyModel& policy_sampler,
                    const RolloutBatch& batch, double epsilon);

// Group-relative clipped loss over same-question groups: advantages are the
// group-mean-centered rewards broadcast to every token, the normalizer is
// the total number of sequences (never the per-sequence length), and the
// sampler's log-probs are recomputed from the passed sampler model.
LossReport grpo_loss(const PolicyModel& policy_new, const PolicyModel& policy_sampler,
                     const std::vector<SampleGroup>& groups, double epsilon,
                     bool answer_only = true);

// Direct preference loss between a winner and a loser of the same prompt:
//   -log sigmoid(beta * (seq log-ratio of winner - seq log-ratio of loser))
// with sequence log-probs over answer tokens and a frozen reference model.
LossReport dpo_loss(const PolicyModel& policy_new, const PolicyModel& policy_ref,
                    const PreferencePair& pair, double beta);

// Sequence-level clipped variant: one ratio per response (product over its
// answer tokens via summed log-probs), clipped like a single PPO token.
// Sequence log-ratio magnitudes above 30 produce a sentinel report.
LossReport alt_grape_loss(const PolicyModel& policy_new, const PolicyModel& policy_sampler,
                          const std::vector<SampleGroup>& groups, double epsilon,
                          bool answer_only = true);

}  // namespace deskrl
