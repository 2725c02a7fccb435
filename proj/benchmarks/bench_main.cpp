// Microbenchmarks for the paths the trainers hammer: softmax, sequence
// scoring, loss evaluation, and exhaustive value enumeration.
#include <benchmark/benchmark.h>

#include <vector>

#include "deskrl/advantage.hpp"
#include "deskrl/model.hpp"
#include "deskrl/numerics.hpp"
#include "deskrl/policygrad.hpp"
#include "deskrl/rng.hpp"
#include "deskrl/task.hpp"

namespace {

using namespace deskrl;

Task bench_task() {
  Task task;
  task.kind = TaskKind::kCopy;
  task.vocab_size = 16;
  task.prompt_len = 2;
  task.answer_len = 3;
  task.seed = 11;
  return task;
}

PolicyModel bench_policy(Arch arch) {
  PolicyModel m = make_policy(arch, 16, 3, arch == Arch::kOneHiddenLayer ? 16 : 0);
  RngState rng(42);
  init_uniform(m.params, rng, 0.2);
  return m;
}

void bm_softmax(benchmark::State& state) {
  LogitVector logits(static_cast<std::size_t>(state.range(0)));
  RngState rng(3);
  for (double& v : logits) v = rng.next_gaussian();
  for (auto _ : state) {
    ProbVector p = softmax(logits);
    benchmark::DoNotOptimize(p);
  }
}
BENCHMARK(bm_softmax)->Arg(16)->Arg(64);

void bm_sequence_logprob(benchmark::State& state) {
  Task task = bench_task();
  PolicyModel policy =
      bench_policy(state.range(0) == 0 ? Arch::kLookupTable : Arch::kOneHiddenLayer);
  RngState rng(5);
  std::vector<std::vector<int>> prompts = gen_prompts(task, 1, rng);
  Text text = reference_text(task, prompts[0]);
  for (auto _ : state) {
    double lp = sequence_logprob(policy, text, text.answer_start);
    benchmark::DoNotOptimize(lp);
  }
}
BENCHMARK(bm_sequence_logprob)->Arg(0)->Arg(1);

void bm_clipped_loss(benchmark::State& state) {
  Task task = bench_task();
  PolicyModel sampler = bench_policy(Arch::kLookupTable);
  PolicyModel policy = sampler;
  RngState prompt_rng(7);
  std::vector<std::vector<int>> prompts = gen_prompts(task, 8, prompt_rng);
  SequenceReward reward_fn = [&task](std::span<const int> toks) {
    Text t;
    t.tokens.assign(toks.begin(), toks.end());
    t.answer_start = task.prompt_len + 3;
    return true_reward(task, t);
  };
  RngState rollout_rng(9);
  RolloutBatch batch = make_rollout_batch(sampler, prompts, 4, 1.0, task.answer_len, true,
                                          tokens::kEndOfText, rollout_rng, reward_fn);
  for (RolloutSample& s : batch.samples) {
    s.advantages = AdvantageTable::broadcast(s.reward - 0.5, s.sampler_logprobs.size());
  }
  for (auto _ : state) {
    LossReport rep = ppo_loss(policy, sampler, batch, 0.2);
    benchmark::DoNotOptimize(rep.loss);
  }
}
BENCHMARK(bm_clipped_loss);

void bm_exact_value(benchmark::State& state) {
  Task task = bench_task();
  task.vocab_size = 8;
  PolicyModel policy = make_policy(Arch::kLookupTable, 8, 3);
  RngState rng(13);
  init_uniform(policy.params, rng, 0.2);
  RngState prompt_rng(15);
  std::vector<std::vector<int>> prompts = gen_prompts(task, 1, prompt_rng);
  SequenceReward reward_fn = [&task](std::span<const int> toks) {
    Text t;
    t.tokens.assign(toks.begin(), toks.end());
    t.answer_start = task.prompt_len + 3;
    return true_reward(task, t);
  };
  RolloutSpec rollout{3, -1};
  for (auto _ : state) {
    double v = exact_value(policy, prompts[0], reward_fn, rollout);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(bm_exact_value);

}  // namespace

BENCHMARK_MAIN();
