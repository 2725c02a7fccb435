#include "deskrl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "deskrl/error.hpp"
#include "deskrl/model.hpp"

namespace deskrl {
namespace {

using nlohmann::json;

json config_as_json(const TrainConfig& c) {
  json j;
  j["algorithm"] = c.algorithm;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["iterations"] = c.iterations;
  j["learning_rate"] = c.learning_rate;
  j["value_learning_rate"] = c.value_learning_rate;
  j["batch_prompts"] = c.batch_prompts;
  j["group_size"] = c.group_size;
  j["epsilon"] = c.epsilon;
  j["beta"] = c.beta;
  j["kl_beta"] = c.kl_beta;
  j["delta"] = c.delta;
  j["temperature"] = c.temperature;
  j["refresh_cadence"] = c.refresh_cadence;
  j["max_new_tokens"] = c.max_new_tokens;
  j["answer_only"] = c.answer_only;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["dataset_size"] = c.dataset_size;
  j["holdout_size"] = c.holdout_size;
  j["sft_steps_per_round"] = c.sft_steps_per_round;
  j["include_reference_answer"] = c.include_reference_answer;
  j["selector"] = c.selector;
  j["rubric_path"] = c.rubric_path;
  j["rho"] = c.rho;
  j["iterate_probability"] = c.iterate_probability;
  j["alt_sequence_loss"] = c.alt_sequence_loss;
  j["resume_from"] = c.resume_from;
  j["init_checkpoint"] = c.init_checkpoint;
  j["model"] = {{"arch", c.model.arch},
                {"context_window", c.model.context_window},
                {"hidden_width", c.model.hidden_width},
                {"init_scale", c.model.init_scale}};
  j["task"] = {{"kind", task_kind_name(c.task.kind)},
               {"vocab_size", c.task.vocab_size},
               {"prompt_len", c.task.prompt_len},
               {"answer_len", c.task.answer_len},
               {"seed", c.task.seed}};
  return j;
}

[[noreturn]] void bad_key(const std::string& where, const std::string& key) {
  throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
}

[[noreturn]] void bad_type(const std::string& where, const std::string& key,
                           const std::string& want) {
  std::string full = where.empty() ? key : where + "." + key;
  throw ConfigError("config key '" + full + "' must be " + want);
}

const char* type_word(const json& v) {
  if (v.is_boolean()) return "a boolean";
  if (v.is_string()) return "a string";
  if (v.is_number_unsigned() || v.is_number_integer()) return "an integer";
  if (v.is_number()) return "a number";
  return "an object";
}

// Merges `incoming` onto `base`, key by key. Every incoming key must exist in
// the default skeleton with a matching value type, so typos and wrong shapes
// fail loudly instead of training with silently-ignored settings.
void merge_checked(json& base, const json& incoming, const std::string& where) {
  if (!incoming.is_object()) {
    throw ConfigError("config " + (where.empty() ? std::string("root") : "'" + where + "'") +
                      " must be a JSON object");
  }
  for (const auto& [key, value] : incoming.items()) {
    auto it = base.find(key);
    if (it == base.end()) bad_key(where, key);
    json& slot = *it;
    if (slot.is_object()) {
      merge_checked(slot, value, where.empty() ? key : where + "." + key);
    } else if (slot.is_boolean()) {
      if (!value.is_boolean()) bad_type(where, key, "a boolean");
      slot = value;
    } else if (slot.is_string()) {
      if (!value.is_string()) bad_type(where, key, "a string");
      slot = value;
    } else if (slot.is_number_integer() || slot.is_number_unsigned()) {
      if (!value.is_number_integer() && !value.is_number_unsigned()) {
        bad_type(where, key, "an integer");
      }
      slot = value;
    } else if (slot.is_number_float()) {
      if (!value.is_number()) bad_type(where, key, "a number");
      slot = value.get<double>();
    } else {
      bad_type(where, key, type_word(slot));
    }
  }
}

void apply_one_override(json& root, const std::string& text) {
  auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + text + "' must look like key=value");
  }
  std::string path = text.substr(0, eq);
  std::string raw = text.substr(eq + 1);

  json* slot = &root;
  std::string where;
  std::size_t start = 0;
  while (true) {
    auto dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + text + "' has an empty key segment");
    if (!slot->is_object()) bad_key("", path);
    auto it = slot->find(key);
    if (it == slot->end()) bad_key(where, key);
    slot = &*it;
    where = where.empty() ? key : where + "." + key;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  try {
    if (slot->is_boolean()) {
      if (raw == "true" || raw == "1") {
        *slot = true;
      } else if (raw == "false" || raw == "0") {
        *slot = false;
      } else {
        throw ConfigError("");
      }
    } else if (slot->is_string()) {
      *slot = raw;
    } else if (slot->is_number_unsigned()) {
      std::size_t used = 0;
      *slot = static_cast<std::uint64_t>(std::stoull(raw, &used));
      if (used != raw.size()) throw ConfigError("");
    } else if (slot->is_number_integer()) {
      std::size_t used = 0;
      *slot = static_cast<std::int64_t>(std::stoll(raw, &used));
      if (used != raw.size()) throw ConfigError("");
    } else if (slot->is_number_float()) {
      std::size_t used = 0;
      *slot = std::stod(raw, &used);
      if (used != raw.size()) throw ConfigError("");
    } else {
      throw ConfigError("override '" + path + "' targets a section, not a value");
    }
  } catch (const ConfigError& e) {
    if (e.what()[0] != '\0') throw;
    throw ConfigError("override '" + text + "': value '" + raw + "' is not " +
                      type_word(*slot));
  } catch (const std::exception&) {
    throw ConfigError("override '" + text + "': value '" + raw + "' is not " +
                      type_word(*slot));
  }
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.algorithm = j.at("algorithm").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.output_dir = j.at("output_dir").get<std::string>();
  c.iterations = j.at("iterations").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.value_learning_rate = j.at("value_learning_rate").get<double>();
  c.batch_prompts = j.at("batch_prompts").get<int>();
  c.group_size = j.at("group_size").get<int>();
  c.epsilon = j.at("epsilon").get<double>();
  c.beta = j.at("beta").get<double>();
  c.kl_beta = j.at("kl_beta").get<double>();
  c.delta = j.at("delta").get<double>();
  c.temperature = j.at("temperature").get<double>();
  c.refresh_cadence = j.at("refresh_cadence").get<int>();
  c.max_new_tokens = j.at("max_new_tokens").get<int>();
  c.answer_only = j.at("answer_only").get<bool>();
  c.checkpoint_interval = j.at("checkpoint_interval").get<int>();
  c.dataset_size = j.at("dataset_size").get<int>();
  c.holdout_size = j.at("holdout_size").get<int>();
  c.sft_steps_per_round = j.at("sft_steps_per_round").get<int>();
  c.include_reference_answer = j.at("include_reference_answer").get<bool>();
  c.selector = j.at("selector").get<std::string>();
  c.rubric_path = j.at("rubric_path").get<std::string>();
  c.rho = j.at("rho").get<double>();
  c.iterate_probability = j.at("iterate_probability").get<double>();
  c.alt_sequence_loss = j.at("alt_sequence_loss").get<bool>();
  c.resume_from = j.at("resume_from").get<std::string>();
  c.init_checkpoint = j.at("init_checkpoint").get<std::string>();
  const json& m = j.at("model");
  c.model.arch = m.at("arch").get<std::string>();
  c.model.context_window = m.at("context_window").get<int>();
  c.model.hidden_width = m.at("hidden_width").get<int>();
  c.model.init_scale = m.at("init_scale").get<double>();
  const json& t = j.at("task");
  c.task.kind = task_kind_from_name(t.at("kind").get<std::string>());
  c.task.vocab_size = t.at("vocab_size").get<int>();
  c.task.prompt_len = t.at("prompt_len").get<int>();
  c.task.answer_len = t.at("answer_len").get<int>();
  c.task.seed = t.at("seed").get<std::uint64_t>();
  return c;
}

const std::set<std::string>& known_algorithms() {
  static const std::set<std::string> algos = {"sft",  "rejection", "reward", "reinforce",
                                              "trpo", "ppo",       "grpo",   "dpo",
                                              "grape"};
  return algos;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

TrainConfig default_config() { return TrainConfig{}; }

TrainConfig apply_overrides(const TrainConfig& base, const std::vector<std::string>& overrides) {
  json j = config_as_json(base);
  for (const auto& text : overrides) apply_one_override(j, text);
  TrainConfig cfg = config_from_json(j);
  validate_config(cfg);
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json incoming;
  try {
    incoming = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  json j = config_as_json(TrainConfig{});
  merge_checked(j, incoming, "");
  for (const auto& text : overrides) apply_one_override(j, text);
  TrainConfig cfg = config_from_json(j);
  validate_config(cfg);
  return cfg;
}

void validate_config(const TrainConfig& cfg) {
  require(known_algorithms().count(cfg.algorithm) == 1,
          "unknown algorithm '" + cfg.algorithm + "'");
  require(cfg.iterations >= 1, "iterations must be at least 1");
  require(std::isfinite(cfg.learning_rate) && cfg.learning_rate > 0.0,
          "learning_rate must be positive");
  require(std::isfinite(cfg.value_learning_rate) && cfg.value_learning_rate > 0.0,
          "value_learning_rate must be positive");
  require(cfg.batch_prompts >= 1, "batch_prompts must be at least 1");
  require(cfg.group_size >= 1, "group_size must be at least 1");
  require(std::isfinite(cfg.epsilon) && cfg.epsilon > 0.0 && cfg.epsilon < 1.0,
          "epsilon must lie strictly between 0 and 1");
  require(std::isfinite(cfg.beta) && cfg.beta >= 0.0, "beta must be nonnegative");
  require(std::isfinite(cfg.kl_beta) && cfg.kl_beta >= 0.0, "kl_beta must be nonnegative");
  require(cfg.kl_beta == 0.0 || cfg.algorithm == "ppo",
          "kl_beta is only supported by the ppo pipeline");
  require(std::isfinite(cfg.delta) && cfg.delta >= 0.0, "delta must be nonnegative");
  require(std::isfinite(cfg.temperature) && cfg.temperature >= 0.0,
          "temperature must be nonnegative");
  require(cfg.refresh_cadence >= 1 && cfg.refresh_cadence <= 4,
          "refresh_cadence must lie in [1, 4]");
  require(cfg.max_new_tokens >= 0, "max_new_tokens must be nonnegative");
  require(cfg.checkpoint_interval >= 0, "checkpoint_interval must be nonnegative");
  require(cfg.dataset_size >= 1, "dataset_size must be at least 1");
  require(cfg.holdout_size >= 1, "holdout_size must be at least 1");
  require(cfg.sft_steps_per_round >= 1, "sft_steps_per_round must be at least 1");
  require(std::isfinite(cfg.rho) && cfg.rho > 0.0, "rho must be positive");
  require(std::isfinite(cfg.iterate_probability) && cfg.iterate_probability >= 0.0 &&
              cfg.iterate_probability <= 1.0,
          "iterate_probability must lie in [0, 1]");
  require(cfg.algorithm != "grape" || !cfg.rubric_path.empty(),
          "grape runs need rubric_path");
  if (cfg.algorithm == "dpo") {
    require(cfg.beta > 0.0, "dpo needs beta > 0");
  }
  if (cfg.algorithm == "dpo" || cfg.algorithm == "rejection" || cfg.algorithm == "reward" ||
      cfg.algorithm == "grpo" || cfg.algorithm == "grape") {
    require(cfg.group_size >= 2, cfg.algorithm + " needs group_size of at least 2");
  }

  ModelSpec policy_spec;
  policy_spec.arch = arch_from_name(cfg.model.arch);
  policy_spec.vocab_size = cfg.task.vocab_size;
  policy_spec.context_window = cfg.model.context_window;
  policy_spec.hidden_width = policy_spec.arch == Arch::kOneHiddenLayer ? cfg.model.hidden_width : 0;
  policy_spec.output_dim = cfg.task.vocab_size;
  validate_spec(policy_spec);
  require(std::isfinite(cfg.model.init_scale) && cfg.model.init_scale >= 0.0,
          "model.init_scale must be nonnegative");
  validate_task(cfg.task);
  require(cfg.task.answer_len <= cfg.model.context_window,
          "task.answer_len must not exceed model.context_window");
}

std::string resolved_config_json(const TrainConfig& cfg) {
  return config_as_json(cfg).dump(2) + "\n";
}

bool is_rl_algorithm(const std::string& algorithm) {
  return algorithm == "reinforce" || algorithm == "trpo" || algorithm == "ppo" ||
         algorithm == "grpo" || algorithm == "grape";
}

}  // namespace deskrl
