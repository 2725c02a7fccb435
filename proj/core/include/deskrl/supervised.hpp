#pragma once

#include <vector>

#include "deskrl/loss_report.hpp"
#include "deskrl/model.hpp"
#include "deskrl/task.hpp"

namespace deskrl {

// Token-level negative log-likelihood of one text. With answer_only the sum
// runs over the answer region only (prompt tokens are conditioned on, never
// scored); otherwise it starts at the first token.
LossReport nll_loss(const PolicyModel& policy, const Text& text, bool answer_only = true);

// Dataset mean of nll_loss; the gradient is the matching mean.
LossReport sft_loss(const PolicyModel& policy, const std::vector<Text>& dataset,
                    bool answer_only = true);

// Binary cross-entropy of a predicted preference probability against the
// recorded label. Scalar only; p must be strictly inside (0, 1).
double preference_bce_loss(double prob_winner, int hp);

// The two equivalent ways to turn a reward gap into a win probability.
// The sigmoid form is the canonical one used by the loss; the softmax form
// exists for equivalence checks.
double preference_prob_sigmoid(double reward_winner, double reward_loser);
double preference_prob_softmax(double reward_winner, double reward_loser);

// Pairwise preference loss -log sigmoid(R(winner) - R(loser)) with exact
// gradients for the reward model.
LossReport reward_pair_loss(const RewardModel& reward, const PreferencePair& pair);

}  // namespace deskrl
