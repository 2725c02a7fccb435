#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deskrl/task.hpp"

namespace deskrl {

struct ModelConfig {
  std::string arch = "lookup-table";
  int context_window = 3;
  int hidden_width = 0;
  double init_scale = 0.1;
};

// One flat bag of knobs for every pipeline. Loading is schema-checked:
// unknown keys are rejected and `key=value` overrides must name an existing
// field and parse as its type. The resolved form (defaults filled in) is
// what gets written next to every run.
struct TrainConfig {
  std::string algorithm = "sft";  // sft | rejection | reward | reinforce |
                                  // trpo | ppo | grpo | dpo | grape
  std::uint64_t seed = 1;
  std::string output_dir;

  int iterations = 100;
  double learning_rate = 0.5;
  double value_learning_rate = 0.5;
  int batch_prompts = 8;   // prompts sampled per iteration
  int group_size = 4;      // completions per prompt
  double epsilon = 0.2;    // ratio clip half-width
  double beta = 0.1;       // trust-region penalty weight / preference temperature
  double kl_beta = 0.0;    // reward-side KL penalty (ppo only)
  double delta = 0.05;     // trust-region bound on mean KL
  double temperature = 1.0;
  int refresh_cadence = 1;  // gradient updates per sampled batch, 1..4
  int max_new_tokens = 0;   // 0: use task.answer_len
  bool answer_only = true;
  int checkpoint_interval = 0;  // 0: final checkpoint only

  int dataset_size = 64;   // prompts behind offline datasets (sft/reward/dpo)
  int holdout_size = 64;   // prompts behind held-out metrics
  int sft_steps_per_round = 20;          // rejection pipeline inner loop
  bool include_reference_answer = true;  // seed pair datasets with the exact answer
  std::string selector = "true-reward";  // rejection: "true-reward" or reward ckpt path

  // Rubric-reward pipeline.
  std::string rubric_path;
  double rho = 1.0;                  // reward scale
  double iterate_probability = 0.0;  // chance a response revises a draft
  bool alt_sequence_loss = false;    // sequence-level clipped variant

  std::string resume_from;       // checkpoint to continue
  std::string init_checkpoint;   // start the policy from this checkpoint

  ModelConfig model;
  Task task;
};

TrainConfig default_config();

// Load + merge + override + validate. `overrides` entries look like
// "learning_rate=0.25" or "task.vocab_size=16".
TrainConfig load_config(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides = {});

// Same pipeline for a config born in memory (tests, defaults).
TrainConfig apply_overrides(const TrainConfig& base, const std::vector<std::string>& overrides);

void validate_config(const TrainConfig& cfg);

// Pretty JSON with every field present; reproduces the run when fed back in.
std::string resolved_config_json(const TrainConfig& cfg);

bool is_rl_algorithm(const std::string& algorithm);

}  // namespace deskrl
