#include "deskrl/supervised.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "deskrl/error.hpp"
#include "deskrl/numerics.hpp"

namespace deskrl {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

LossReport nll_loss(const PolicyModel& policy, const Text& text, bool answer_only) {
  int from = answer_only ? text.answer_start : 1;
  LossReport report;
  report.grad.assign(policy.params.size(), 0.0);
  report.per_token.emplace();

  std::vector<double> lps = sequence_token_logprobs(policy, text, from);
  report.per_token->logprobs = lps;
  double total = 0.0;
  for (std::size_t i = 0; i < lps.size(); ++i) {
    if (lps[i] == -kInf) {
      // Zero-probability target: the loss has no finite value here.
      report.loss = kInf;
      report.grad.assign(policy.params.size(), 0.0);
      report.diagnostic = "zero probability for target token at position " +
                          std::to_string(from + static_cast<int>(i));
      return report;
    }
    total -= lps[i];
  }
  report.loss = total;
  accumulate_sequence_logprob_grad(policy, text, from, -1.0, report.grad);
  return report;
}

LossReport sft_loss(const PolicyModel& policy, const std::vector<Text>& dataset,
                    bool answer_only) {
  if (dataset.empty()) throw InvalidInputError("sft_loss: empty dataset");
  LossReport report;
  report.grad.assign(policy.params.size(), 0.0);
  double scale = 1.0 / static_cast<double>(dataset.size());
  double total = 0.0;
  for (const Text& text : dataset) {
    int from = answer_only ? text.answer_start : 1;
    std::vector<double> lps = sequence_token_logprobs(policy, text, from);
    for (std::size_t i = 0; i < lps.size(); ++i) {
      if (lps[i] == -kInf) {
        report.loss = kInf;
        report.grad.assign(policy.params.size(), 0.0);
        report.diagnostic = "zero probability for target token at position " +
                            std::to_string(from + static_cast<int>(i));
        return report;
      }
      total -= lps[i];
    }
    accumulate_sequence_logprob_grad(policy, text, from, -scale, report.grad);
  }
  report.loss = total * scale;
  return report;
}

double preference_bce_loss(double prob_winner, int hp) {
  if (hp != 0 && hp != 1) throw InvalidInputError("preference label must be 0 or 1");
  if (!(prob_winner > 0.0) || !(prob_winner < 1.0)) {
    throw InvalidInputError("preference probability must lie strictly in (0, 1)");
  }
  return hp == 1 ? -std::log(prob_winner) : -std::log(1.0 - prob_winner);
}

double preference_prob_sigmoid(double reward_winner, double reward_loser) {
  return sigmoid(reward_winner - reward_loser);
}

double preference_prob_softmax(double reward_winner, double reward_loser) {
  double mx = std::max(reward_winner, reward_loser);
  double ew = std::exp(reward_winner - mx);
  double el = std::exp(reward_loser - mx);
  return ew / (ew + el);
}

LossReport reward_pair_loss(const RewardModel& reward, const PreferencePair& pair) {
  if (pair.hp != 1) throw InvalidInputError("reward_pair_loss expects winner-first pairs (hp=1)");
  double rw = reward_score(reward, pair.winner);
  double rl = reward_score(reward, pair.loser);
  double gap = rw - rl;

  LossReport report;
  report.loss = softplus(-gap);  // -log sigmoid(gap), computed stably
  report.grad.assign(reward.params.size(), 0.0);
  // d loss / d gap = sigmoid(gap) - 1
  double dgap = sigmoid(gap) - 1.0;
  accumulate_reward_grad(reward, pair.winner, dgap, report.grad);
  accumulate_reward_grad(reward, pair.loser, -dgap, report.grad);
  return report;
}

}  // namespace deskrl
