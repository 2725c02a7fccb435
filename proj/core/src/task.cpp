#include "deskrl/task.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "deskrl/error.hpp"
#include "deskrl/numerics.hpp"

namespace deskrl {

namespace {

using nlohmann::json;

int content_range(const Task& task) { return task.vocab_size - tokens::kFirstContent; }

json text_to_json(const Text& t) {
  return json{{"tokens", t.tokens}, {"answer_start", t.answer_start}};
}

Text text_from_json(const json& j) {
  Text t;
  t.tokens = j.at("tokens").get<std::vector<int>>();
  t.answer_start = j.at("answer_start").get<int>();
  return t;
}

// Shared line-by-line reader; errors name the offending line.
template <typename Fn>
void for_each_jsonl_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset: " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": malformed record: " + e.what());
    }
    try {
      fn(j);
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": malformed record: " + e.what());
    } catch (const InvalidInputError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open dataset for writing: " + path.string());
  return out;
}

}  // namespace

void validate_task(const Task& task) {
  if (task.vocab_size <= tokens::kFirstContent || task.vocab_size > 64) {
    throw InvalidInputError("task vocab_size must leave room for content tokens (5..64)");
  }
  if (task.prompt_len < 1) throw InvalidInputError("prompt_len must be >= 1");
  if (task.answer_len < 1) throw InvalidInputError("answer_len must be >= 1");
}

std::string task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCopy: return "copy";
    case TaskKind::kReverse: return "reverse";
    case TaskKind::kConstantMap: return "constant-map";
  }
  throw InvalidInputError("unknown task kind");
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "copy") return TaskKind::kCopy;
  if (name == "reverse") return TaskKind::kReverse;
  if (name == "constant-map") return TaskKind::kConstantMap;
  throw InvalidInputError("unknown task kind: " + name);
}

std::vector<std::vector<int>> gen_prompts(const Task& task, int n, RngState& rng) {
  validate_task(task);
  if (n < 1) throw InvalidInputError("prompt count must be >= 1");
  int range = content_range(task);
  std::vector<std::vector<int>> prompts;
  prompts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    RngState stream = rng.derive(static_cast<std::uint64_t>(i));
    std::vector<int> p;
    p.reserve(static_cast<std::size_t>(task.prompt_len) + 2);
    p.push_back(tokens::kUserMark);
    for (int j = 0; j < task.prompt_len; ++j) {
      p.push_back(tokens::kFirstContent +
                  static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(range)));
    }
    p.push_back(tokens::kModelMark);
    prompts.push_back(std::move(p));
  }
  return prompts;
}

std::vector<int> ground_truth_answer(const Task& task, std::span<const int> prompt) {
  validate_task(task);
  // Content sits between the user mark and the model mark; tolerate any
  // prompt shape by taking everything strictly inside the ends.
  std::vector<int> content;
  for (std::size_t i = 1; i + 1 < prompt.size(); ++i) content.push_back(prompt[i]);

  std::vector<int> answer(static_cast<std::size_t>(task.answer_len));
  if (task.kind == TaskKind::kConstantMap) {
    // One fixed answer per task seed, independent of the prompt.
    RngState stream = RngState(task.seed).derive(0x636F6E7374ULL);
    int range = content_range(task);
    for (int i = 0; i < task.answer_len; ++i) {
      answer[static_cast<std::size_t>(i)] =
          tokens::kFirstContent +
          static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(range));
    }
    return answer;
  }

  if (content.empty()) {
    // Degenerate prompt: nothing to copy; fall back to padding so the
    // function stays total.
    std::fill(answer.begin(), answer.end(), tokens::kPad);
    return answer;
  }
  int L = static_cast<int>(content.size());
  for (int i = 0; i < task.answer_len; ++i) {
    int j = i % L;
    if (task.kind == TaskKind::kReverse) j = L - 1 - j;
    answer[static_cast<std::size_t>(i)] = content[static_cast<std::size_t>(j)];
  }
  return answer;
}

double true_reward(const Task& task, const Text& text) {
  validate_text(text, task.vocab_size);
  std::vector<int> truth = ground_truth_answer(task, text.prompt());
  std::span<const int> answer = text.answer();
  int matches = 0;
  for (int i = 0; i < task.answer_len; ++i) {
    if (static_cast<std::size_t>(i) < answer.size() &&
        answer[static_cast<std::size_t>(i)] == truth[static_cast<std::size_t>(i)]) {
      ++matches;
    }
  }
  return static_cast<double>(matches) / static_cast<double>(task.answer_len);
}

Text reference_text(const Task& task, std::span<const int> prompt) {
  Text t;
  t.tokens.assign(prompt.begin(), prompt.end());
  std::vector<int> answer = ground_truth_answer(task, prompt);
  t.tokens.insert(t.tokens.end(), answer.begin(), answer.end());
  t.answer_start = static_cast<int>(prompt.size()) + 1;
  return t;
}

std::vector<PreferencePair> make_preference_pairs(const Task& task,
                                                  const std::vector<Text>& texts,
                                                  RngState& rng) {
  // Bucket by prompt so only same-question completions are compared.
  std::vector<std::pair<std::vector<int>, std::vector<std::size_t>>> buckets;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    std::span<const int> prompt = texts[i].prompt();
    std::vector<int> key(prompt.begin(), prompt.end());
    auto it = std::find_if(buckets.begin(), buckets.end(),
                           [&key](const auto& b) { return b.first == key; });
    if (it == buckets.end()) {
      buckets.push_back({std::move(key), {i}});
    } else {
      it->second.push_back(i);
    }
  }

  std::vector<PreferencePair> pairs;
  for (const auto& [key, idxs] : buckets) {
    for (std::size_t a = 0; a < idxs.size(); ++a) {
      for (std::size_t b = a + 1; b < idxs.size(); ++b) {
        double ra = true_reward(task, texts[idxs[a]]);
        double rb = true_reward(task, texts[idxs[b]]);
        if (ra == rb) continue;
        const Text& w = ra > rb ? texts[idxs[a]] : texts[idxs[b]];
        const Text& l = ra > rb ? texts[idxs[b]] : texts[idxs[a]];
        pairs.push_back(PreferencePair{w, l, 1});
      }
    }
  }

  // Fisher-Yates with the caller's stream so dataset order is seeded.
  for (std::size_t i = pairs.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(pairs[i - 1], pairs[j]);
  }
  return pairs;
}

void validate_group(const SampleGroup& group) {
  if (group.responses.empty()) throw InvalidInputError("sample group must be non-empty");
  if (group.responses.size() != group.rewards.size()) {
    throw InvalidInputError("sample group rewards/responses length mismatch");
  }
  // Responses of one group answer one question. A response may carry extra
  // conditioning (a draft being revised) appended to the question, so the
  // shortest prompt must be a prefix of every other prompt; completely
  // different questions still trip this.
  std::span<const int> shortest = group.responses.front().prompt();
  for (const Text& t : group.responses) {
    if (t.prompt().size() < shortest.size()) shortest = t.prompt();
  }
  for (const Text& t : group.responses) {
    std::span<const int> p = t.prompt();
    if (!std::equal(shortest.begin(), shortest.end(), p.begin())) {
      throw InvalidInputError("sample group mixes responses to different prompts");
    }
  }
  if (!all_finite(group.rewards)) throw InvalidInputError("sample group rewards must be finite");
}

void save_texts(const std::vector<Text>& texts, const std::filesystem::path& path) {
  std::ofstream out = open_for_write(path);
  for (const Text& t : texts) out << text_to_json(t).dump() << '\n';
}

std::vector<Text> load_texts(const std::filesystem::path& path) {
  std::vector<Text> texts;
  for_each_jsonl_line(path, [&texts](const json& j) {
    Text t = text_from_json(j);
    if (t.tokens.empty() || t.answer_start < 1 || t.answer_start > t.length()) {
      throw InvalidInputError("text record violates answer_start bounds");
    }
    texts.push_back(std::move(t));
  });
  return texts;
}

void save_pairs(const std::vector<PreferencePair>& pairs, const std::filesystem::path& path) {
  std::ofstream out = open_for_write(path);
  for (const PreferencePair& p : pairs) {
    out << json{{"winner", text_to_json(p.winner)},
                {"loser", text_to_json(p.loser)},
                {"hp", p.hp}}
               .dump()
        << '\n';
  }
}

std::vector<PreferencePair> load_pairs(const std::filesystem::path& path) {
  std::vector<PreferencePair> pairs;
  for_each_jsonl_line(path, [&pairs](const json& j) {
    PreferencePair p;
    p.winner = text_from_json(j.at("winner"));
    p.loser = text_from_json(j.at("loser"));
    p.hp = j.at("hp").get<int>();
    if (p.hp != 0 && p.hp != 1) throw InvalidInputError("hp label must be 0 or 1");
    pairs.push_back(std::move(p));
  });
  return pairs;
}

}  // namespace deskrl
