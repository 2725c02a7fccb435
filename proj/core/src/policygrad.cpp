#include "deskrl/policygrad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "deskrl/error.hpp"
#include "deskrl/numerics.hpp"

namespace deskrl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogRatioCap = 30.0;

void require_filled_batch(const RolloutBatch& batch, bool need_advantages) {
  if (batch.samples.empty()) throw InvalidInputError("empty rollout batch");
  for (const RolloutSample& s : batch.samples) {
    std::size_t scored = static_cast<std::size_t>(s.text.length() - s.score_from + 1);
    if (s.score_from < 1 || s.score_from > s.text.length()) {
      throw InvalidInputError("rollout sample score_from out of range");
    }
    if (s.sampler_logprobs.size() != scored) {
      throw InvalidInputError("rollout sample is missing cached sampler log-probs");
    }
    if (need_advantages && s.advantages.values.size() != scored) {
      throw InvalidInputError("rollout sample advantages not filled");
    }
    if (!std::isfinite(s.reward)) throw InvalidInputError("rollout sample reward non-finite");
  }
}

void require_sampler_match(const RolloutBatch& batch, const PolicyModel& sampler,
                           const char* loss_name) {
  std::string fp = model_fingerprint(sampler.spec, sampler.params);
  if (fp != batch.sampler_fingerprint) {
    throw InvalidInputError(std::string(loss_name) +
                            ": sampler model does not match the checkpoint that produced "
                            "this batch (cached log-probs would be stale)");
  }
}

LossReport sentinel_report(std::size_t nparams, std::string message) {
  LossReport r;
  r.loss = kInf;
  r.grad.assign(nparams, 0.0);
  r.diagnostic = std::move(message);
  return r;
}

// Shared body of the clipped-surrogate family. epsilon = +inf disables
// clipping (plain importance-weighted objective). Returns false and writes
// a sentinel through `out` if a log-ratio exceeds the cap.
struct ClipAccumulator {
  double term_sum = 0.0;
  std::size_t tokens = 0;
  std::size_t clipped_tokens = 0;
};

bool accumulate_clipped_token(const PolicyModel& policy_new, std::span<const int> prefix,
                              int token, double lp_new, double lp_sampler, double advantage,
                              double epsilon, double grad_scale, ClipAccumulator& acc,
                              std::span<double> grad, LossReport* sentinel_out,
                              std::size_t sample_idx) {
  double log_ratio = lp_new - lp_sampler;
  if (log_ratio > kLogRatioCap) {
    *sentinel_out = sentinel_report(
        grad.size(), "log-ratio " + std::to_string(log_ratio) + " exceeds " +
                         std::to_string(kLogRatioCap) + " at sample " +
                         std::to_string(sample_idx) + "; refusing to exponentiate");
    return false;
  }
  double ratio = std::exp(log_ratio);
  double unclipped = ratio * advantage;
  double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage;
  ++acc.tokens;
  if (clipped < unclipped) {
    // The pessimistic branch is a constant in the new policy's parameters,
    // so the token contributes value but zero gradient.
    acc.term_sum += clipped;
    ++acc.clipped_tokens;
  } else {
    acc.term_sum += unclipped;
    accumulate_logprob_grad(policy_new, prefix, token, grad_scale * ratio * advantage, grad);
  }
  return true;
}

}  // namespace

RolloutBatch make_rollout_batch(const PolicyModel& sampler,
                                const std::vector<std::vector<int>>& prompts, int per_prompt,
                                double temperature, int max_new_tokens, bool answer_only,
                                int stop_token, RngState& rng, const SequenceReward& reward_fn) {
  if (prompts.empty()) throw InvalidInputError("make_rollout_batch: no prompts");
  if (per_prompt < 1) throw InvalidInputError("make_rollout_batch: per_prompt must be >= 1");
  RolloutBatch batch;
  batch.sampler_fingerprint = model_fingerprint(sampler.spec, sampler.params);
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    for (int g = 0; g < per_prompt; ++g) {
      RngState stream =
          rng.derive(static_cast<std::uint64_t>(p) * 0x10001ULL + static_cast<std::uint64_t>(g));
      RolloutSample s;
      s.text = sample_completion(sampler, prompts[p], temperature, max_new_tokens, stream,
                                 stop_token);
      s.score_from = answer_only ? s.text.answer_start : 1;
      s.sampler_logprobs = sequence_token_logprobs(sampler, s.text, s.score_from);
      s.reward = reward_fn(s.text.tokens);
      batch.samples.push_back(std::move(s));
    }
  }
  return batch;
}

LossReport reinforce_loss(const PolicyModel& policy, const RolloutBatch& batch,
                          const ValueModel& baseline) {
  require_filled_batch(batch, /*need_advantages=*/false);
  LossReport report;
  report.grad.assign(policy.params.size(), 0.0);
  report.per_token.emplace();

  double scale = 1.0 / static_cast<double>(batch.samples.size());
  double total = 0.0;
  std::span<const int> all;
  for (const RolloutSample& s : batch.samples) {
    all = s.text.tokens;
    std::vector<double> lps = sequence_token_logprobs(policy, s.text, s.score_from);
    for (int t = s.score_from; t <= s.text.length(); ++t) {
      std::size_t i = static_cast<std::size_t>(t - s.score_from);
      std::span<const int> prefix = all.first(static_cast<std::size_t>(t - 1));
      double adv = basic_advantage(s.reward, value_estimate(baseline, prefix));
      total -= adv * lps[i];
      accumulate_logprob_grad(policy, prefix, s.text.tokens[t - 1], -scale * adv, report.grad);
      report.per_token->logprobs.push_back(lps[i]);
      report.per_token->advantages.push_back(adv);
    }
  }
  report.loss = total * scale;
  if (!std::isfinite(report.loss) || !all_finite(report.grad)) {
    throw NumericalError("reinforce_loss produced non-finite values");
  }
  return report;
}

LossReport ratio_loss(const PolicyModel& policy_new, const RolloutBatch& batch) {
  require_filled_batch(batch, /*need_advantages=*/true);
  LossReport report;
  report.grad.assign(policy_new.params.size(), 0.0);
  report.per_token.emplace();

  double scale = 1.0 / static_cast<double>(batch.samples.size());
  double total = 0.0;
  for (std::size_t si = 0; si < batch.samples.size(); ++si) {
    const RolloutSample& s = batch.samples[si];
    std::span<const int> all = s.text.tokens;
    std::vector<double> lps = sequence_token_logprobs(policy_new, s.text, s.score_from);
    for (int t = s.score_from; t <= s.text.length(); ++t) {
      std::size_t i = static_cast<std::size_t>(t - s.score_from);
      double log_ratio = lps[i] - s.sampler_logprobs[i];
      if (log_ratio > kLogRatioCap) {
        return sentinel_report(policy_new.params.size(),
                               "log-ratio " + std::to_string(log_ratio) + " exceeds " +
                                   std::to_string(kLogRatioCap) + " at sample " +
                                   std::to_string(si) + "; refusing to exponentiate");
      }
      double ratio = std::exp(log_ratio);
      double adv = s.advantages.values[i];
      total -= ratio * adv;
      accumulate_logprob_grad(policy_new, all.first(static_cast<std::size_t>(t - 1)),
                              s.text.tokens[t - 1], -scale * ratio * adv, report.grad);
      report.per_token->logprobs.push_back(lps[i]);
      report.per_token->ratios.push_back(ratio);
      report.per_token->advantages.push_back(adv);
    }
  }
  report.loss = total * scale;
  if (!std::isfinite(report.loss) || !all_finite(report.grad)) {
    throw NumericalError("ratio_loss produced non-finite values");
  }
  return report;
}

LossReport trpo_loss(const PolicyModel& policy_new, const PolicyModel& policy_old,
                     const RolloutBatch& batch, double beta) {
  if (beta < 0.0 || !std::isfinite(beta)) {
    throw InvalidInputError("trpo_loss: beta must be finite and >= 0");
  }
  require_sampler_match(batch, policy_old, "trpo_loss");
  LossReport report = ratio_loss(policy_new, batch);
  if (report.is_sentinel() || beta == 0.0) return report;

  // Exact forward KL(pi_old || pi_new) averaged over scored positions.
  std::size_t positions = 0;
  double kl_sum = 0.0;
  for (const RolloutSample& s : batch.samples) {
    positions += static_cast<std::size_t>(s.text.length() - s.score_from + 1);
  }
  double kl_grad_scale = beta / static_cast<double>(positions);
  std::vector<double> dlogits(static_cast<std::size_t>(policy_new.spec.output_dim));
  for (const RolloutSample& s : batch.samples) {
    std::span<const int> all = s.text.tokens;
    for (int t = s.score_from; t <= s.text.length(); ++t) {
      std::span<const int> prefix = all.first(static_cast<std::size_t>(t - 1));
      ProbVector p_old = next_token_dist(policy_old, prefix);
      ProbVector p_new = next_token_dist(policy_new, prefix);
      kl_sum += kl_divergence(p_old, p_new);
      // d KL / d new-logit_j = p_new_j - p_old_j
      for (std::size_t j = 0; j < dlogits.size(); ++j) {
        dlogits[j] = kl_grad_scale * (p_new[j] - p_old[j]);
      }
      accumulate_logits_grad(policy_new, prefix, dlogits, report.grad);
    }
  }
  report.loss += beta * (kl_sum / static_cast<double>(positions));
  if (!std::isfinite(report.loss) || !all_finite(report.grad)) {
    throw NumericalError("trpo_loss produced non-finite values");
  }
  return report;
}

TrustRegionReport trpo_constraint_report(const PolicyModel& policy_new,
                                         const PolicyModel& policy_old,
                                         const RolloutBatch& batch, double delta) {
  if (delta < 0.0 || !std::isfinite(delta)) {
    throw InvalidInputError("trust-region delta must be finite and >= 0");
  }
  require_filled_batch(batch, /*need_advantages=*/false);
  TrustRegionReport rep;
  rep.delta = delta;
  std::size_t positions = 0;
  for (const RolloutSample& s : batch.samples) {
    std::span<const int> all = s.text.tokens;
    for (int t = s.score_from; t <= s.text.length(); ++t) {
      std::span<const int> prefix = all.first(static_cast<std::size_t>(t - 1));
      double kl = kl_divergence(next_token_dist(policy_old, prefix),
                                next_token_dist(policy_new, prefix));
      rep.mean_kl += kl;
      rep.max_kl = std::max(rep.max_kl, kl);
      ++positions;
    }
  }
  rep.mean_kl /= static_cast<double>(positions);
  rep.mean_satisfied = rep.mean_kl <= delta;
  rep.max_satisfied = rep.max_kl <= delta;
  return rep;
}

LossReport ppo_loss(const PolicyModel& policy_new, const PolicyModel& policy_sampler,
                    const RolloutBatch& batch, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidInputError("ppo_loss: epsilon must be > 0");
  require_sampler_match(batch, policy_sampler, "ppo_loss");
  require_filled_batch(batch, /*need_advantages=*/true);

  LossReport report;
  report.grad.assign(policy_new.params.size(), 0.0);
  report.per_token.emplace();
  double scale = 1.0 / static_cast<double>(batch.samples.size());
  ClipAccumulator acc;
  LossReport sentinel;
  for (std::size_t si = 0; si < batch.samples.size(); ++si) {
    const RolloutSample& s = batch.samples[si];
    std::span<const int> all = s.text.tokens;
    std::vector<double> lps = sequence_token_logprobs(policy_new, s.text, s.score_from);
    for (int t = s.score_from; t <= s.text.length(); ++t) {
      std::size_t i = static_cast<std::size_t>(t - s.score_from);
      if (!accumulate_clipped_token(policy_new, all.first(static_cast<std::size_t>(t - 1)),
                                    s.text.tokens[t - 1], lps[i], s.sampler_logprobs[i],
                                    s.advantages.values[i], epsilon, -scale, acc, report.grad,
                                    &sentinel, si)) {
        return sentinel;
      }
      report.per_token->logprobs.push_back(lps[i]);
      report.per_token->ratios.push_back(std::exp(lps[i] - s.sampler_logprobs[i]));
      report.per_token->advantages.push_back(s.advantages.values[i]);
    }
  }
  report.loss = -acc.term_sum * scale;
  report.clip_fraction = static_cast<double>(acc.clipped_tokens) /
                         static_cast<double>(acc.tokens);
  if (!std::isfinite(report.loss) || !all_finite(report.grad)) {
    throw NumericalError("ppo_loss produced non-finite values");
  }
  return report;
}

LossReport grpo_loss(const PolicyModel& policy_new, const PolicyModel& policy_sampler,
                     const std::vector<SampleGroup>& groups, double epsilon,
                     bool answer_only) {
  if (!(epsilon > 0.0)) throw InvalidInputError("grpo_loss: epsilon must be > 0");
  if (groups.empty()) throw InvalidInputError("grpo_loss: no groups");

  std::size_t total_sequences = 0;
  for (const SampleGroup& g : groups) {
    validate_group(g);
    total_sequences += g.responses.size();
  }

  LossReport report;
  report.grad.assign(policy_new.params.size(), 0.0);
  // The normalizer counts sequences (questions x group size); per-sequence
  // token counts deliberately do not enter it.
  double scale = 1.0 / static_cast<double>(total_sequences);
  ClipAccumulator acc;
  LossReport sentinel;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const SampleGroup& g = groups[gi];
    std::vector<double> adv = grpo_advantage(g.rewards);
    for (std::size_t ri = 0; ri < g.responses.size(); ++ri) {
      const Text& text = g.responses[ri];
      int from = answer_only ? text.answer_start : 1;
      std::vector<double> lp_sampler = sequence_token_logprobs(policy_sampler, text, from);
      std::vector<double> lp_new = sequence_token_logprobs(policy_new, text, from);
      std::span<const int> all = text.tokens;
      for (int t = from; t <= text.length(); ++t) {
        std::size_t i = static_cast<std::size_t>(t - from);
        if (!accumulate_clipped_token(policy_new, all.first(static_cast<std::size_t>(t - 1)),
                                      text.tokens[t - 1], lp_new[i], lp_sampler[i], adv[ri],
                                      epsilon, -scale, acc, report.grad, &sentinel,
                                      gi * 1000 + ri)) {
          return sentinel;
        }
      }
    }
  }
  report.loss = -acc.term_sum * scale;
  report.clip_fraction = static_cast<double>(acc.clipped_tokens) /
                         static_cast<double>(acc.tokens);
  if (!std::isfinite(report.loss) || !all_finite(report.grad)) {
    throw NumericalError("grpo_loss produced non-finite values");
  }
  return report;
}

LossReport dpo_loss(const PolicyModel& policy_new, const PolicyModel& policy_ref,
                    const PreferencePair& pair, double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw InvalidInputError("dpo_loss: beta must be finite and > 0");
  }
  if (pair.hp != 1) throw InvalidInputError("dpo_loss expects winner-first pairs (hp=1)");

  double lpw_new = sequence_logprob(policy_new, pair.winner, pair.winner.answer_start);
  double lpw_ref = sequence_logprob(policy_ref, pair.winner, pair.winner.answer_start);
  double lpl_new = sequence_logprob(policy_new, pair.loser, pair.loser.answer_start);
  double lpl_ref = sequence_logprob(policy_ref, pair.loser, pair.loser.answer_start);
  double z = beta * ((lpw_new - lpw_ref) - (lpl_new - lpl_ref));

  LossReport report;
  report.loss = softplus(-z);  // -log sigmoid(z)
  report.grad.assign(policy_new.params.size(), 0.0);
  double dz = sigmoid(z) - 1.0;
  accumulate_sequence_logprob_grad(policy_new, pair.winner, pair.winner.answer_start,
                                   dz * beta, report.grad);
  accumulate_sequence_logprob_grad(policy_new, pair.loser, pair.loser.answer_start,
                                   -dz * beta, report.grad);
  if (!std::isfinite(report.loss) || !all_finite(report.grad)) {
    throw NumericalError("dpo_loss produced non-finite values");
  }
  return report;
}

LossReport alt_grape_loss(const PolicyModel& policy_new, const PolicyModel& policy_sampler,
                          const std::vector<SampleGroup>& groups, double epsilon,
                          bool answer_only) {
  if (!(epsilon > 0.0)) throw InvalidInputError("alt_grape_loss: epsilon must be > 0");
  if (groups.empty()) throw InvalidInputError("alt_grape_loss: no groups");

  std::size_t total_sequences = 0;
  for (const SampleGroup& g : groups) {
    validate_group(g);
    total_sequences += g.responses.size();
  }

  LossReport report;
  report.grad.assign(policy_new.params.size(), 0.0);
  double scale = 1.0 / static_cast<double>(total_sequences);
  double term_sum = 0.0;
  std::size_t clipped = 0;
  for (const SampleGroup& g : groups) {
    std::vector<double> adv = grpo_advantage(g.rewards);
    for (std::size_t ri = 0; ri < g.responses.size(); ++ri) {
      const Text& text = g.responses[ri];
      int from = answer_only ? text.answer_start : 1;
      double log_ratio = sequence_logprob(policy_new, text, from) -
                         sequence_logprob(policy_sampler, text, from);
      if (std::abs(log_ratio) > kLogRatioCap) {
        return sentinel_report(policy_new.params.size(),
                               "sequence log-ratio " + std::to_string(log_ratio) +
                                   " exceeds magnitude " + std::to_string(kLogRatioCap));
      }
      double ratio = std::exp(log_ratio);
      double unclipped = ratio * adv[ri];
      double clipped_term = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon) * adv[ri];
      if (clipped_term < unclipped) {
        term_sum += clipped_term;
        ++clipped;
      } else {
        term_sum += unclipped;
        accumulate_sequence_logprob_grad(policy_new, text, from, -scale * ratio * adv[ri],
                                         report.grad);
      }
    }
  }
  report.loss = -term_sum * scale;
  report.clip_fraction = static_cast<double>(clipped) / static_cast<double>(total_sequences);
  if (!std::isfinite(report.loss) || !all_finite(report.grad)) {
    throw NumericalError("alt_grape_loss produced non-finite values");
  }
  return report;
}

}  // namespace deskrl
