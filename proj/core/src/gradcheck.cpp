#include "deskrl/gradcheck.hpp"

#include <algorithm>
#include <functional>

#include "deskrl/advantage.hpp"
#include "deskrl/model.hpp"
#include "deskrl/numerics.hpp"
#include "deskrl/policygrad.hpp"
#include "deskrl/rng.hpp"
#include "deskrl/supervised.hpp"
#include "deskrl/task.hpp"

namespace deskrl {
namespace {

// Small enough that 2 * param_count forward passes per loss stay cheap:
// lookup-table 6^2 * 6 = 216 params, one-hidden-layer 158.
ModelSpec tiny_spec(Arch arch, int output_dim) {
  ModelSpec spec;
  spec.arch = arch;
  spec.vocab_size = 6;
  spec.context_window = 2;
  spec.hidden_width = arch == Arch::kOneHiddenLayer ? 8 : 0;
  spec.output_dim = output_dim;
  return spec;
}

PolicyModel random_policy(Arch arch, RngState rng, double scale) {
  ModelSpec spec = tiny_spec(arch, 6);
  PolicyModel m{spec, std::vector<double>(param_count(spec), 0.0)};
  init_uniform(m.params, rng, scale);
  return m;
}

struct Fixture {
  Task task;
  PolicyModel policy;     // the model being differentiated
  PolicyModel sampler;    // frozen collector of the rollouts
  PolicyModel reference;  // frozen comparison model
  ValueModel baseline;
  RewardModel reward;
  RolloutBatch batch;             // advantages filled
  std::vector<SampleGroup> groups;
  std::vector<Text> dataset;
  PreferencePair pair;
};

Fixture make_fixture(Arch arch, std::uint64_t seed) {
  Fixture f;
  f.task.kind = TaskKind::kCopy;
  f.task.vocab_size = 6;
  f.task.prompt_len = 1;
  f.task.answer_len = 2;
  f.task.seed = seed;

  RngState root(seed);
  {
    RngState r = root.derive(1);
    f.policy = random_policy(arch, r, 0.4);
  }
  {
    RngState r = root.derive(2);
    f.sampler = random_policy(arch, r, 0.4);
  }
  {
    RngState r = root.derive(3);
    f.reference = random_policy(arch, r, 0.4);
  }
  ModelSpec vspec = tiny_spec(arch, 1);
  f.baseline = ValueModel{vspec, std::vector<double>(param_count(vspec), 0.0)};
  f.reward = RewardModel{vspec, std::vector<double>(param_count(vspec), 0.0)};
  {
    RngState r = root.derive(4);
    init_uniform(f.baseline.params, r, 0.4);
  }
  {
    RngState r = root.derive(5);
    init_uniform(f.reward.params, r, 0.4);
  }

  RngState prompt_rng = root.derive(6);
  std::vector<std::vector<int>> prompts = gen_prompts(f.task, 2, prompt_rng);
  SequenceReward reward_fn = [&f](std::span<const int> toks) {
    Text t;
    t.tokens.assign(toks.begin(), toks.end());
    t.answer_start = f.task.prompt_len + 3;
    return true_reward(f.task, t);
  };
  RngState rollout_rng = root.derive(7);
  f.batch = make_rollout_batch(f.sampler, prompts, 2, 1.0, f.task.answer_len, true,
                               tokens::kEndOfText, rollout_rng, reward_fn);
  RngState adv_rng = root.derive(8);
  for (RolloutSample& s : f.batch.samples) {
    std::vector<double> adv(s.sampler_logprobs.size());
    for (double& a : adv) a = adv_rng.next_gaussian();
    s.advantages.values = std::move(adv);
  }

  for (std::size_t p = 0; p < prompts.size(); ++p) {
    SampleGroup g;
    g.question_id = static_cast<int>(p);
    g.category = "copy";
    for (int gi = 0; gi < 2; ++gi) {
      RngState draw = root.derive(9).derive(p * 7 + static_cast<std::size_t>(gi));
      Text t = sample_completion(f.sampler, prompts[p], 1.0, f.task.answer_len, draw,
                                 tokens::kEndOfText);
      g.rewards.push_back(true_reward(f.task, t) + 0.1 * adv_rng.next_gaussian());
      g.responses.push_back(std::move(t));
    }
    f.groups.push_back(std::move(g));
  }

  for (const auto& p : prompts) f.dataset.push_back(reference_text(f.task, p));

  // Any same-prompt pair with distinct rewards works for the preference
  // losses; the exact answer vs a sampled one is the simplest such pair.
  RngState pair_rng = root.derive(10);
  Text truth = f.dataset.front();
  Text alt;
  for (int attempt = 0; attempt < 50; ++attempt) {
    alt = sample_completion(f.sampler, prompts[0], 1.0, f.task.answer_len, pair_rng,
                            tokens::kEndOfText);
    if (true_reward(f.task, alt) < 1.0) break;
  }
  f.pair = PreferencePair{truth, alt, 1};
  return f;
}

using ParamLoss = std::function<double(const std::vector<double>&)>;

GradCheckResult check_one(const std::string& name, Arch arch, std::uint64_t seed,
                          const std::vector<double>& params,
                          const std::vector<double>& analytic, const ParamLoss& f,
                          double tolerance) {
  std::vector<double> fd = fd_gradient(f, params);
  GradCheckResult r;
  r.loss_name = name;
  r.arch = arch_name(arch);
  r.seed = seed;
  r.relative_error = fd_relative_error(analytic, fd);
  r.pass = r.relative_error < tolerance;
  return r;
}

void run_arch_seed(Arch arch, std::uint64_t seed, double tolerance,
                   std::vector<GradCheckResult>& out) {
  Fixture f = make_fixture(arch, seed);

  auto policy_with = [&f](const std::vector<double>& p) {
    PolicyModel m = f.policy;
    m.params = p;
    return m;
  };
  auto reward_with = [&f](const std::vector<double>& p) {
    RewardModel m = f.reward;
    m.params = p;
    return m;
  };

  {
    LossReport rep = nll_loss(f.policy, f.dataset.front(), true);
    out.push_back(check_one(
        "nll", arch, seed, f.policy.params, rep.grad,
        [&](const std::vector<double>& p) { return nll_loss(policy_with(p), f.dataset.front(), true).loss; },
        tolerance));
  }
  {
    LossReport rep = sft_loss(f.policy, f.dataset, true);
    out.push_back(check_one(
        "sft", arch, seed, f.policy.params, rep.grad,
        [&](const std::vector<double>& p) { return sft_loss(policy_with(p), f.dataset, true).loss; },
        tolerance));
  }
  {
    LossReport rep = reward_pair_loss(f.reward, f.pair);
    out.push_back(check_one(
        "reward-pair", arch, seed, f.reward.params, rep.grad,
        [&](const std::vector<double>& p) { return reward_pair_loss(reward_with(p), f.pair).loss; },
        tolerance));
  }
  {
    LossReport rep = reinforce_loss(f.policy, f.batch, f.baseline);
    out.push_back(check_one(
        "reinforce", arch, seed, f.policy.params, rep.grad,
        [&](const std::vector<double>& p) {
          return reinforce_loss(policy_with(p), f.batch, f.baseline).loss;
        },
        tolerance));
  }
  {
    LossReport rep = ratio_loss(f.policy, f.batch);
    out.push_back(check_one(
        "ratio", arch, seed, f.policy.params, rep.grad,
        [&](const std::vector<double>& p) { return ratio_loss(policy_with(p), f.batch).loss; },
        tolerance));
  }
  {
    LossReport rep = trpo_loss(f.policy, f.sampler, f.batch, 0.7);
    out.push_back(check_one(
        "trust-region", arch, seed, f.policy.params, rep.grad,
        [&](const std::vector<double>& p) {
          return trpo_loss(policy_with(p), f.sampler, f.batch, 0.7).loss;
        },
        tolerance));
  }
  {
    LossReport rep = ppo_loss(f.policy, f.sampler, f.batch, 0.2);
    out.push_back(check_one(
        "clipped-ratio", arch, seed, f.policy.params, rep.grad,
        [&](const std::vector<double>& p) {
          return ppo_loss(policy_with(p), f.sampler, f.batch, 0.2).loss;
        },
        tolerance));
  }
  {
    LossReport rep = grpo_loss(f.policy, f.sampler, f.groups, 0.2, true);
    out.push_back(check_one(
        "group-relative", arch, seed, f.policy.params, rep.grad,
        [&](const std::vector<double>& p) {
          return grpo_loss(policy_with(p), f.sampler, f.groups, 0.2, true).loss;
        },
        tolerance));
  }
  {
    LossReport rep = dpo_loss(f.policy, f.reference, f.pair, 0.5);
    out.push_back(check_one(
        "preference-direct", arch, seed, f.policy.params, rep.grad,
        [&](const std::vector<double>& p) {
          return dpo_loss(policy_with(p), f.reference, f.pair, 0.5).loss;
        },
        tolerance));
  }
  {
    LossReport rep = alt_grape_loss(f.policy, f.sampler, f.groups, 0.2, true);
    out.push_back(check_one(
        "sequence-clipped", arch, seed, f.policy.params, rep.grad,
        [&](const std::vector<double>& p) {
          return alt_grape_loss(policy_with(p), f.sampler, f.groups, 0.2, true).loss;
        },
        tolerance));
  }
}

}  // namespace

GradCheckSummary run_gradcheck_suite(std::uint64_t base_seed, double tolerance) {
  GradCheckSummary summary;
  for (Arch arch : {Arch::kLookupTable, Arch::kOneHiddenLayer}) {
    for (std::uint64_t s = 0; s < 3; ++s) {
      run_arch_seed(arch, base_seed + s, tolerance, summary.results);
    }
  }
  summary.all_pass = true;
  for (const GradCheckResult& r : summary.results) {
    summary.max_relative_error = std::max(summary.max_relative_error, r.relative_error);
    summary.all_pass = summary.all_pass && r.pass;
  }
  return summary;
}

}  // namespace deskrl
