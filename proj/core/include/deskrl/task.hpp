#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deskrl/rng.hpp"
#include "deskrl/text.hpp"

namespace deskrl {

// Synthetic token tasks with programmatic ground truth. A prompt is
// [user-mark, c_1..c_prompt_len, model-mark] with content tokens drawn
// uniformly; the expected answer is a pure function of the prompt:
//   copy         answer_i = c_(i mod L)
//   reverse      answer_i = c_(L-1-(i mod L))
//   constant-map the same seeded answer sequence for every prompt
enum class TaskKind {
  kCopy,
  kReverse,
  kConstantMap,
};

struct Task {
  TaskKind kind = TaskKind::kCopy;
  int vocab_size = 16;
  int prompt_len = 2;
  int answer_len = 3;
  std::uint64_t seed = 0;
};

void validate_task(const Task& task);

std::string task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(const std::string& name);

// n prompts drawn from the task's content range. Reproducible from rng.
std::vector<std::vector<int>> gen_prompts(const Task& task, int n, RngState& rng);

// The expected answer for a prompt produced by gen_prompts.
std::vector<int> ground_truth_answer(const Task& task, std::span<const int> prompt);

// Fraction of the answer_len leading answer positions that match the ground
// truth. Total on any well-formed text; missing positions count as misses.
double true_reward(const Task& task, const Text& text);

// Prompt plus ground-truth answer, ready for supervised training.
Text reference_text(const Task& task, std::span<const int> prompt);

// A preference between two completions of the same prompt. hp = 1 records
// that `winner` is the human/oracle-preferred side.
struct PreferencePair {
  Text winner;
  Text loser;
  int hp = 1;
};

// All distinct-reward pairings among same-prompt texts, winner = higher
// true reward; ties contribute nothing. Order is shuffled by rng.
std::vector<PreferencePair> make_preference_pairs(const Task& task,
                                                  const std::vector<Text>& texts,
                                                  RngState& rng);

// G completions of one question, scored; the group is the unit over which
// group-relative advantages are computed.
struct SampleGroup {
  int question_id = 0;
  std::string category;
  std::vector<Text> responses;
  std::vector<double> rewards;
};

void validate_group(const SampleGroup& group);

// ---- JSONL dataset files ----
// One JSON object per line. Texts: {"tokens": [...], "answer_start": n}.
// Pairs: {"winner": <text>, "loser": <text>, "hp": 1}.

void save_texts(const std::vector<Text>& texts, const std::filesystem::path& path);
std::vector<Text> load_texts(const std::filesystem::path& path);

void save_pairs(const std::vector<PreferencePair>& pairs, const std::filesystem::path& path);
std::vector<PreferencePair> load_pairs(const std::filesystem::path& path);

}  // namespace deskrl
