#pragma once

#include <span>
#include <string>
#include <vector>

#include "deskrl/numerics.hpp"
#include "deskrl/rng.hpp"
#include "deskrl/text.hpp"

namespace deskrl {

// Two tiny architectures share one interface: map the last `context_window`
// tokens of a prefix (left-padded with the pad id) to `output_dim` raw
// scores. The lookup table stores one score row per enumerable context,
// which keeps exact whole-tree oracles cheap; the one-hidden-layer net runs
// a tanh layer over concatenated one-hot context slots and exists so the
// gradient checks also cover genuinely nonlinear parameters.
enum class Arch {
  kLookupTable,
  kOneHiddenLayer,
};

struct ModelSpec {
  Arch arch = Arch::kLookupTable;
  int vocab_size = 0;      // V, including reserved ids
  int context_window = 0;  // k
  int hidden_width = 0;    // h, one-hidden-layer only
  int output_dim = 0;      // V for policies, 1 for scalar heads
};

void validate_spec(const ModelSpec& spec);
std::size_t param_count(const ModelSpec& spec);

std::string arch_name(Arch arch);
Arch arch_from_name(const std::string& name);

// Heads over the shared context encoder. Parameters are one flat vector so
// optimizers and checkpoints treat every model identically.
struct PolicyModel {
  ModelSpec spec;
  std::vector<double> params;
};

struct ValueModel {
  ModelSpec spec;
  std::vector<double> params;
};

struct RewardModel {
  ModelSpec spec;
  std::vector<double> params;
};

PolicyModel make_policy(Arch arch, int vocab_size, int context_window, int hidden_width = 0);
ValueModel make_value(Arch arch, int vocab_size, int context_window, int hidden_width = 0);
RewardModel make_reward(Arch arch, int vocab_size, int context_window, int hidden_width = 0);

// Seeded uniform init in [-scale, scale]. Zero init is the constructed
// default and is what the uniform-distribution edge cases test against.
void init_uniform(std::span<double> params, RngState& rng, double scale = 0.1);

// ---- low-level forward/backward over the shared encoder ----

// Writes output_dim raw scores for the given prefix into `out`.
void forward_scores(const ModelSpec& spec, std::span<const double> params,
                    std::span<const int> prefix, std::span<double> out);

// Accumulates d(scores . out_grad)/d(params) into param_grad. Recomputes the
// forward pass internally; at these sizes that is cheaper than caching.
void backward_scores(const ModelSpec& spec, std::span<const double> params,
                     std::span<const int> prefix, std::span<const double> out_grad,
                     std::span<double> param_grad);

// ---- policy head ----

LogitVector next_token_logits(const PolicyModel& policy, std::span<const int> prefix);
ProbVector next_token_dist(const PolicyModel& policy, std::span<const int> prefix);

// Sum of log pi(token_t | tokens_<t) for t = from..T, `from` 1-based.
double sequence_logprob(const PolicyModel& policy, const Text& text, int from);
std::vector<double> sequence_token_logprobs(const PolicyModel& policy, const Text& text,
                                            int from);

// Adds scale * d log pi(token | prefix) / d params into grad.
void accumulate_logprob_grad(const PolicyModel& policy, std::span<const int> prefix, int token,
                             double scale, std::span<double> grad);

// Adds the chain of an arbitrary per-logit upstream gradient into grad.
void accumulate_logits_grad(const PolicyModel& policy, std::span<const int> prefix,
                            std::span<const double> dlogits, std::span<double> grad);

// Sum over t = from..T of scale * d log pi(token_t | prefix_t) / d params.
void accumulate_sequence_logprob_grad(const PolicyModel& policy, const Text& text, int from,
                                      double scale, std::span<double> grad);

// Samples until the stop token or max_new_tokens, whichever comes first.
// temperature below 1e-6 means greedy argmax (ties to the lowest index).
// stop_token -1 disables early termination. answer_start of the result is
// prompt length + 1.
Text sample_completion(const PolicyModel& policy, std::span<const int> prompt,
                       double temperature, int max_new_tokens, RngState& rng,
                       int stop_token = tokens::kEndOfText);

// ---- scalar heads ----

double value_estimate(const ValueModel& value, std::span<const int> prefix);
void accumulate_value_grad(const ValueModel& value, std::span<const int> prefix, double scale,
                           std::span<double> grad);

// The reward head reads the same encoder at the final position of the text.
double reward_score(const RewardModel& reward, const Text& text);
void accumulate_reward_grad(const RewardModel& reward, const Text& text, double scale,
                            std::span<double> grad);

// Stable content fingerprint of (spec, params); rollouts record it so a loss
// can refuse ratios against a drifted sampler checkpoint.
std::string model_fingerprint(const ModelSpec& spec, std::span<const double> params);

}  // namespace deskrl
