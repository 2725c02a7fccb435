#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deskrl/checkpoint.hpp"
#include "deskrl/config.hpp"
#include "deskrl/grape.hpp"
#include "deskrl/model.hpp"
#include "deskrl/rng.hpp"
#include "deskrl/task.hpp"
#include "deskrl/text.hpp"

namespace deskrl {

struct MetricsRow {
  int step = 0;
  double loss = 0.0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double entropy = 0.0;
};

// Fixed-width CSV sink. Rows are printed with a fixed format so two runs that
// compute the same doubles produce byte-identical files, which is what the
// resume test diffs.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, bool append);
  void write(const MetricsRow& row);

  static std::string format_row(const MetricsRow& row);
  static const char* header();

 private:
  std::ofstream out_;
};

// params -= lr * grad. Throws NumericalError (tagged with `where`) if the
// gradient carries NaN/inf, so a bad update never lands silently.
void sgd_step(std::vector<double>& params, std::span<const double> grad, double learning_rate,
              const std::string& where);

// The policy shape a config describes, and a policy initialized the way
// every pipeline starts (init_checkpoint if set, else seeded uniform).
ModelSpec policy_model_spec(const TrainConfig& cfg);
PolicyModel initial_policy(const TrainConfig& cfg);

// Preference pairs built from `n_prompts` fresh prompts: group_size sampled
// answers each (plus the exact answer when configured), paired within each
// prompt by true reward. `channel_base` separates train from holdout data.
std::vector<PreferencePair> build_preference_dataset(const TrainConfig& cfg,
                                                     const PolicyModel& sampler, int n_prompts,
                                                     std::uint64_t channel_base);

// Scores every completion with `selector` (larger is better) and keeps the
// best of each group of `per_prompt`; first sample wins ties.
struct RejectionRound {
  std::vector<Text> kept;
  double mean_reward_all = 0.0;   // over every sampled completion
  double mean_reward_kept = 0.0;  // over the survivors
};
RejectionRound rejection_round(const PolicyModel& policy,
                               const std::vector<std::vector<int>>& prompts, int per_prompt,
                               const std::function<double(const Text&)>& selector,
                               double temperature, int max_new_tokens, RngState rng);

// Mutable state threaded through policy-gradient iterations; tests drive it
// directly to observe one iteration at a time.
struct RlState {
  PolicyModel policy;
  PolicyModel reference;             // the run's starting policy, frozen
  std::optional<ValueModel> value;   // reinforce/trpo/ppo baseline
  int step = 0;
};

RlState make_rl_state(const TrainConfig& cfg);

// One sample-score-update round for reinforce/trpo/ppo/grpo/grape.
// Randomness is drawn only from streams derived off (root seed, step), so a
// resumed run replays the identical tail.
MetricsRow rl_iteration(RlState& state, const TrainConfig& cfg, const Rubric* rubric,
                        const ScorerRegistry* scorers);

struct TrainOutcome {
  std::filesystem::path run_dir;
  std::filesystem::path final_checkpoint;
  MetricsRow last;
  int steps_run = 0;
};

// Runs the pipeline picked by cfg.algorithm end to end: writes
// resolved_config.json, metrics.csv, periodic + final checkpoints into
// cfg.output_dir. Honors cfg.resume_from bit-exactly.
TrainOutcome train(const TrainConfig& cfg);

struct EvalReport {
  int prompts = 0;
  double mean_true_reward = 0.0;  // greedy decoding
  double mean_kl = 0.0;           // vs the checkpoint's reference policy, if present
  bool has_reference = false;
};

EvalReport evaluate_policy(const PolicyModel& policy, const PolicyModel* reference,
                           const Task& task, int n_prompts, std::uint64_t seed);

}  // namespace deskrl
