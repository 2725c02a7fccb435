#include "deskrl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

#include "deskrl/advantage.hpp"
#include "deskrl/error.hpp"
#include "deskrl/numerics.hpp"
#include "deskrl/policygrad.hpp"
#include "deskrl/supervised.hpp"

namespace deskrl {
namespace {

namespace fs = std::filesystem;

// Stream channels. Every random draw in a run comes from
// RngState(seed).derive(channel)[.derive(sub)...], never from shared
// sequential state, so a resumed run replays the identical tail.
constexpr std::uint64_t kChInitPolicy = 0x11;
constexpr std::uint64_t kChInitReward = 0x12;
constexpr std::uint64_t kChInitSampler = 0x13;
constexpr std::uint64_t kChTrainPrompts = 0x21;  // +1 samples, +2 shuffle
constexpr std::uint64_t kChHoldPrompts = 0x31;
constexpr std::uint64_t kChEvalPrompts = 0x41;
constexpr std::uint64_t kChIterBase = 0x1000000;

RngState stream(std::uint64_t seed, std::uint64_t channel) {
  return RngState(seed).derive(channel);
}

RngState iter_stream(std::uint64_t seed, int step, std::uint64_t sub) {
  return RngState(seed).derive(kChIterBase + static_cast<std::uint64_t>(step)).derive(sub);
}

ModelSpec scalar_spec_from(const TrainConfig& cfg) {
  ModelSpec spec = policy_model_spec(cfg);
  spec.output_dim = 1;
  return spec;
}

bool spec_matches(const ModelSpec& a, const ModelSpec& b) {
  return a.arch == b.arch && a.vocab_size == b.vocab_size &&
         a.context_window == b.context_window && a.hidden_width == b.hidden_width &&
         a.output_dim == b.output_dim;
}

int effective_max_new(const TrainConfig& cfg) {
  return cfg.max_new_tokens > 0 ? cfg.max_new_tokens : cfg.task.answer_len;
}

Text greedy_completion(const PolicyModel& policy, std::span<const int> prompt, int max_new) {
  RngState scratch(0);  // unused at temperature 0
  return sample_completion(policy, prompt, 0.0, max_new, scratch, tokens::kEndOfText);
}

// Mean next-token entropy of `policy` and mean KL(policy || reference) over
// scored positions. These are the two health columns in metrics.csv.
struct DiagAccum {
  double entropy_sum = 0.0;
  double kl_sum = 0.0;
  std::size_t positions = 0;

  void add(const PolicyModel& policy, const PolicyModel& reference, const Text& text, int from) {
    std::span<const int> all(text.tokens);
    for (int p = from; p <= text.length(); ++p) {
      std::span<const int> prefix = all.first(static_cast<std::size_t>(p - 1));
      ProbVector dist = next_token_dist(policy, prefix);
      entropy_sum += entropy(dist);
      kl_sum += kl_divergence(dist, next_token_dist(reference, prefix));
      ++positions;
    }
  }

  double mean_entropy() const { return positions == 0 ? 0.0 : entropy_sum / positions; }
  double mean_kl() const { return positions == 0 ? 0.0 : kl_sum / positions; }
};

DiagAccum text_diagnostics(const PolicyModel& policy, const PolicyModel& reference,
                           const std::vector<Text>& texts, bool answer_only) {
  DiagAccum acc;
  for (const Text& t : texts) acc.add(policy, reference, t, answer_only ? t.answer_start : 1);
  return acc;
}

[[noreturn]] void sentinel_abort(const std::string& where, const LossReport& report) {
  throw NumericalError(where + ": " +
                       (report.diagnostic ? *report.diagnostic : std::string("sentinel loss")));
}

// One full-batch regression step pulling V(s_it) toward target_it with a
// squared-error mean over all scored tokens.
void value_regression_step(ValueModel& value, const RolloutBatch& batch,
                           const std::vector<std::vector<double>>& targets, double learning_rate,
                           const std::string& where) {
  std::size_t total = 0;
  for (const auto& t : targets) total += t.size();
  if (total == 0) return;
  std::vector<double> grad(value.params.size(), 0.0);
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    const RolloutSample& s = batch.samples[i];
    std::span<const int> all(s.text.tokens);
    for (std::size_t t = 0; t < targets[i].size(); ++t) {
      std::span<const int> prefix =
          all.first(static_cast<std::size_t>(s.score_from - 1) + t);
      double diff = value_estimate(value, prefix) - targets[i][t];
      accumulate_value_grad(value, prefix, 2.0 * diff / static_cast<double>(total), grad);
    }
  }
  sgd_step(value.params, grad, learning_rate, where);
}

// reinforce / trpo / ppo: token-level advantages against a value baseline.
MetricsRow value_baseline_iteration(RlState& state, const TrainConfig& cfg) {
  const Task& task = cfg.task;
  const int step = state.step;
  const int max_new = effective_max_new(cfg);
  const int answer_start = task.prompt_len + 3;  // [user, content..., model] then answer

  RngState prompt_rng = iter_stream(cfg.seed, step, 0);
  RngState rollout_rng = iter_stream(cfg.seed, step, 1);
  std::vector<std::vector<int>> prompts = gen_prompts(task, cfg.batch_prompts, prompt_rng);

  SequenceReward reward_fn = [&task, answer_start](std::span<const int> toks) {
    Text t;
    t.tokens.assign(toks.begin(), toks.end());
    t.answer_start = answer_start;
    return true_reward(task, t);
  };

  PolicyModel sampler = state.policy;
  RolloutBatch batch =
      make_rollout_batch(sampler, prompts, cfg.group_size, cfg.temperature, max_new,
                         cfg.answer_only, tokens::kEndOfText, rollout_rng, reward_fn);

  MetricsRow row;
  row.step = step + 1;
  double reward_sum = 0.0;
  DiagAccum diag;
  for (const RolloutSample& s : batch.samples) {
    reward_sum += s.reward;
    diag.add(sampler, state.reference, s.text, s.score_from);
  }
  row.mean_reward = reward_sum / static_cast<double>(batch.samples.size());
  row.mean_kl = diag.mean_kl();
  row.entropy = diag.mean_entropy();

  // Advantages and value targets against the baseline frozen at round start.
  ValueModel baseline = *state.value;
  std::vector<std::vector<double>> targets(batch.samples.size());
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    RolloutSample& s = batch.samples[i];
    std::size_t n_tok = s.sampler_logprobs.size();
    std::vector<double> ref_lps;
    if (cfg.kl_beta > 0.0) {
      ref_lps = sequence_token_logprobs(state.reference, s.text, s.score_from);
    }
    std::vector<double> tgt(n_tok);
    std::vector<double> adv(n_tok);
    std::span<const int> all(s.text.tokens);
    for (std::size_t t = 0; t < n_tok; ++t) {
      double shaped = cfg.kl_beta > 0.0
                          ? kl_penalized_reward(s.reward, s.sampler_logprobs[t], ref_lps[t],
                                                cfg.kl_beta)
                          : s.reward;
      tgt[t] = shaped;
      std::span<const int> prefix =
          all.first(static_cast<std::size_t>(s.score_from - 1) + t);
      adv[t] = basic_advantage(shaped, value_estimate(baseline, prefix));
    }
    targets[i] = std::move(tgt);
    s.advantages.values = std::move(adv);
  }

  const std::string where = cfg.algorithm + " step " + std::to_string(row.step);
  for (int u = 0; u < cfg.refresh_cadence; ++u) {
    LossReport rep;
    if (cfg.algorithm == "ppo") {
      rep = ppo_loss(state.policy, sampler, batch, cfg.epsilon);
    } else if (cfg.algorithm == "trpo") {
      rep = trpo_loss(state.policy, sampler, batch, cfg.beta);
    } else {
      rep = reinforce_loss(state.policy, batch, baseline);
    }
    if (rep.is_sentinel()) sentinel_abort(where, rep);
    if (u == 0) {
      row.loss = rep.loss;
      row.clip_fraction = rep.clip_fraction.value_or(0.0);
    }

    if (cfg.algorithm == "trpo") {
      // Enforce the mean-KL bound by backtracking: halve the step up to ten
      // times, and keep the old parameters if even the smallest step lands
      // outside the region.
      double lr = cfg.learning_rate;
      for (int attempt = 0; attempt <= 10; ++attempt) {
        PolicyModel candidate = state.policy;
        sgd_step(candidate.params, rep.grad, lr, where);
        TrustRegionReport tr = trpo_constraint_report(candidate, sampler, batch, cfg.delta);
        if (tr.mean_satisfied) {
          state.policy = std::move(candidate);
          break;
        }
        lr *= 0.5;
      }
    } else {
      sgd_step(state.policy.params, rep.grad, cfg.learning_rate, where);
    }
    value_regression_step(*state.value, batch, targets, cfg.value_learning_rate,
                          where + " (value)");
  }

  ++state.step;
  return row;
}

// grpo / grape: group-relative advantages, no value model.
MetricsRow group_relative_iteration(RlState& state, const TrainConfig& cfg, const Rubric* rubric,
                                    const ScorerRegistry* scorers) {
  const Task& task = cfg.task;
  const int step = state.step;
  const int max_new = effective_max_new(cfg);
  const bool is_grape = cfg.algorithm == "grape";
  const std::string category = task_kind_name(task.kind);

  RngState prompt_rng = iter_stream(cfg.seed, step, 0);
  RngState rollout_rng = iter_stream(cfg.seed, step, 1);
  RngState mode_rng = iter_stream(cfg.seed, step, 2);
  std::vector<std::vector<int>> prompts = gen_prompts(task, cfg.batch_prompts, prompt_rng);

  PolicyModel sampler = state.policy;
  std::vector<SampleGroup> groups(prompts.size());
  std::vector<Text> all_texts;
  std::vector<std::optional<std::vector<int>>> truths;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    SampleGroup& g = groups[p];
    g.question_id = step * cfg.batch_prompts + static_cast<int>(p);
    g.category = category;
    std::vector<int> truth = ground_truth_answer(task, prompts[p]);
    for (int gi = 0; gi < cfg.group_size; ++gi) {
      std::uint64_t lane = static_cast<std::uint64_t>(p) * 0x10001ULL +
                           static_cast<std::uint64_t>(gi);
      RngState base = rollout_rng.derive(lane);
      bool revise = is_grape && cfg.iterate_probability > 0.0 &&
                    mode_rng.derive(lane).next_double() < cfg.iterate_probability;
      Text t;
      if (revise) {
        // Second pass over the same question: the draft stays in the context
        // so the recomputed sampler log-probs match how the final answer was
        // actually drawn.
        RngState draft_rng = base.derive(0);
        RngState final_rng = base.derive(1);
        Text draft = sample_completion(sampler, prompts[p], cfg.temperature, max_new, draft_rng,
                                       tokens::kEndOfText);
        std::vector<int> ctx = draft.tokens;
        ctx.push_back(tokens::kModelMark);
        t = sample_completion(sampler, ctx, cfg.temperature, max_new, final_rng,
                              tokens::kEndOfText);
      } else {
        RngState draw_rng = base.derive(0);
        t = sample_completion(sampler, prompts[p], cfg.temperature, max_new, draw_rng,
                              tokens::kEndOfText);
      }
      g.responses.push_back(t);
      all_texts.push_back(std::move(t));
      truths.emplace_back(truth);
    }
  }

  if (is_grape) {
    CategoryIndex categories =
        CategoryIndex::from_labels(std::vector<std::string>(all_texts.size(), category));
    GrapeBatchScores scored =
        grape_score_batch(*rubric, *scorers, all_texts, categories, truths, cfg.rho);
    std::size_t at = 0;
    for (SampleGroup& g : groups) {
      for (std::size_t gi = 0; gi < g.responses.size(); ++gi) {
        g.rewards.push_back(scored.rewards[at++]);
      }
    }
  } else {
    for (SampleGroup& g : groups) {
      for (const Text& t : g.responses) g.rewards.push_back(true_reward(task, t));
    }
  }

  MetricsRow row;
  row.step = step + 1;
  double reward_sum = 0.0;
  std::size_t n_responses = 0;
  DiagAccum diag;
  for (const SampleGroup& g : groups) {
    for (std::size_t gi = 0; gi < g.responses.size(); ++gi) {
      reward_sum += g.rewards[gi];
      ++n_responses;
      const Text& t = g.responses[gi];
      diag.add(sampler, state.reference, t, cfg.answer_only ? t.answer_start : 1);
    }
  }
  row.mean_reward = reward_sum / static_cast<double>(n_responses);
  row.mean_kl = diag.mean_kl();
  row.entropy = diag.mean_entropy();

  const std::string where = cfg.algorithm + " step " + std::to_string(row.step);
  for (int u = 0; u < cfg.refresh_cadence; ++u) {
    LossReport rep = cfg.alt_sequence_loss
                         ? alt_grape_loss(state.policy, sampler, groups, cfg.epsilon,
                                          cfg.answer_only)
                         : grpo_loss(state.policy, sampler, groups, cfg.epsilon,
                                     cfg.answer_only);
    if (rep.is_sentinel()) sentinel_abort(where, rep);
    if (u == 0) {
      row.loss = rep.loss;
      row.clip_fraction = rep.clip_fraction.value_or(0.0);
    }
    sgd_step(state.policy.params, rep.grad, cfg.learning_rate, where);
  }

  ++state.step;
  return row;
}

std::vector<ModelBlob> policy_blobs(const RlState& st) {
  std::vector<ModelBlob> blobs;
  blobs.push_back({"policy", st.policy.spec, st.policy.params});
  blobs.push_back({"reference", st.reference.spec, st.reference.params});
  if (st.value) blobs.push_back({"value", st.value->spec, st.value->params});
  return blobs;
}

}  // namespace

ModelSpec policy_model_spec(const TrainConfig& cfg) {
  ModelSpec spec;
  spec.arch = arch_from_name(cfg.model.arch);
  spec.vocab_size = cfg.task.vocab_size;
  spec.context_window = cfg.model.context_window;
  spec.hidden_width = spec.arch == Arch::kOneHiddenLayer ? cfg.model.hidden_width : 0;
  spec.output_dim = cfg.task.vocab_size;
  return spec;
}

PolicyModel initial_policy(const TrainConfig& cfg) {
  ModelSpec spec = policy_model_spec(cfg);
  if (!cfg.init_checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(cfg.init_checkpoint);
    PolicyModel loaded = policy_from_blob(ck.require("policy"));
    if (!spec_matches(loaded.spec, spec)) {
      throw ConfigError("init_checkpoint policy shape does not match the configured model");
    }
    return loaded;
  }
  PolicyModel policy{spec, std::vector<double>(param_count(spec), 0.0)};
  RngState rng = stream(cfg.seed, kChInitPolicy);
  init_uniform(policy.params, rng, cfg.model.init_scale);
  return policy;
}

std::vector<PreferencePair> build_preference_dataset(const TrainConfig& cfg,
                                                     const PolicyModel& sampler, int n_prompts,
                                                     std::uint64_t channel_base) {
  const Task& task = cfg.task;
  RngState prompt_rng = stream(cfg.seed, channel_base);
  std::vector<std::vector<int>> prompts = gen_prompts(task, n_prompts, prompt_rng);
  RngState sample_rng = stream(cfg.seed, channel_base + 1);
  int max_new = effective_max_new(cfg);
  std::vector<Text> texts;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    if (cfg.include_reference_answer) texts.push_back(reference_text(task, prompts[p]));
    for (int g = 0; g < cfg.group_size; ++g) {
      RngState draw = sample_rng.derive(static_cast<std::uint64_t>(p) * 0x10001ULL +
                                        static_cast<std::uint64_t>(g));
      texts.push_back(sample_completion(sampler, prompts[p], cfg.temperature, max_new, draw,
                                        tokens::kEndOfText));
    }
  }
  RngState shuffle_rng = stream(cfg.seed, channel_base + 2);
  std::vector<PreferencePair> pairs = make_preference_pairs(task, texts, shuffle_rng);
  if (pairs.empty()) {
    throw ConfigError(
        "preference dataset came out empty (every same-prompt pair tied); raise group_size, "
        "dataset_size, or temperature");
  }
  return pairs;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, bool append) {
  bool fresh = !append || !fs::exists(path);
  out_.open(path, append ? std::ios::app : std::ios::trunc);
  if (!out_) throw ConfigError("cannot open metrics file: " + path.string());
  if (fresh) out_ << header();
}

const char* MetricsWriter::header() { return "step,loss,mean_reward,mean_kl,clip_fraction,entropy\n"; }

std::string MetricsWriter::format_row(const MetricsRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g,%.12g,%.12g\n", row.step, row.loss,
                row.mean_reward, row.mean_kl, row.clip_fraction, row.entropy);
  return buf;
}

void MetricsWriter::write(const MetricsRow& row) {
  out_ << format_row(row);
  out_.flush();
}

void sgd_step(std::vector<double>& params, std::span<const double> grad, double learning_rate,
              const std::string& where) {
  if (grad.size() != params.size()) {
    throw InvalidInputError(where + ": gradient size " + std::to_string(grad.size()) +
                            " does not match parameter count " + std::to_string(params.size()));
  }
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw InvalidInputError(where + ": learning rate must be finite and nonnegative");
  }
  if (!all_finite(grad)) throw NumericalError(where + ": gradient has non-finite entries");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= learning_rate * grad[i];
  if (!all_finite(params)) {
    throw NumericalError(where + ": parameters became non-finite after the update");
  }
}

RejectionRound rejection_round(const PolicyModel& policy,
                               const std::vector<std::vector<int>>& prompts, int per_prompt,
                               const std::function<double(const Text&)>& selector,
                               double temperature, int max_new_tokens, RngState rng) {
  if (per_prompt < 2) throw InvalidInputError("rejection sampling needs at least 2 per prompt");
  if (prompts.empty()) throw InvalidInputError("rejection sampling needs prompts");
  RejectionRound round;
  double sum_all = 0.0;
  double sum_kept = 0.0;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    Text best;
    double best_score = 0.0;
    for (int g = 0; g < per_prompt; ++g) {
      RngState draw = rng.derive(static_cast<std::uint64_t>(p) * 0x10001ULL +
                                 static_cast<std::uint64_t>(g));
      Text t = sample_completion(policy, prompts[p], temperature, max_new_tokens, draw,
                                 tokens::kEndOfText);
      double score = selector(t);
      if (!std::isfinite(score)) throw NumericalError("selector produced a non-finite score");
      sum_all += score;
      if (g == 0 || score > best_score) {  // first sample wins ties
        best = std::move(t);
        best_score = score;
      }
    }
    sum_kept += best_score;
    round.kept.push_back(std::move(best));
  }
  round.mean_reward_all = sum_all / static_cast<double>(prompts.size() * per_prompt);
  round.mean_reward_kept = sum_kept / static_cast<double>(prompts.size());
  return round;
}

RlState make_rl_state(const TrainConfig& cfg) {
  RlState st;
  st.policy = initial_policy(cfg);
  st.reference = st.policy;
  if (cfg.algorithm == "reinforce" || cfg.algorithm == "trpo" || cfg.algorithm == "ppo") {
    ModelSpec vspec = scalar_spec_from(cfg);
    st.value = ValueModel{vspec, std::vector<double>(param_count(vspec), 0.0)};
  }
  return st;
}

MetricsRow rl_iteration(RlState& state, const TrainConfig& cfg, const Rubric* rubric,
                        const ScorerRegistry* scorers) {
  if (cfg.algorithm == "grpo" || cfg.algorithm == "grape") {
    if (cfg.algorithm == "grape" && (rubric == nullptr || scorers == nullptr)) {
      throw ConfigError("grape iterations need a rubric and scorer registry");
    }
    return group_relative_iteration(state, cfg, rubric, scorers);
  }
  if (cfg.algorithm == "reinforce" || cfg.algorithm == "trpo" || cfg.algorithm == "ppo") {
    return value_baseline_iteration(state, cfg);
  }
  throw ConfigError("rl_iteration cannot run algorithm '" + cfg.algorithm + "'");
}

namespace {

struct RunContext {
  fs::path dir;
  MetricsWriter* metrics = nullptr;
  const TrainConfig* cfg = nullptr;
  TrainOutcome* out = nullptr;

  void record(const MetricsRow& row, const std::function<std::vector<ModelBlob>()>& blobs) {
    metrics->write(row);
    out->last = row;
    ++out->steps_run;
    if (cfg->checkpoint_interval > 0 && row.step % cfg->checkpoint_interval == 0 &&
        row.step < cfg->iterations) {
      save(row.step, blobs(), dir / ("checkpoint_" + std::to_string(row.step) + ".json"));
    }
  }

  void finish(const std::function<std::vector<ModelBlob>()>& blobs) {
    fs::path p = dir / "checkpoint_final.json";
    save(cfg->iterations, blobs(), p);
    out->final_checkpoint = p;
  }

  void save(int step, std::vector<ModelBlob> blobs, const fs::path& path) const {
    Checkpoint ck;
    ck.algorithm = cfg->algorithm;
    ck.step = step;
    ck.rng_seed = cfg->seed;
    ck.rng_position = static_cast<std::uint64_t>(step);
    ck.models = std::move(blobs);
    save_checkpoint(ck, path);
  }
};

void run_rl(const TrainConfig& cfg, RunContext& ctx, const Checkpoint* resume) {
  RlState st = make_rl_state(cfg);
  if (resume != nullptr) {
    st.policy = policy_from_blob(resume->require("policy"));
    st.reference = policy_from_blob(resume->require("reference"));
    if (st.value) st.value = value_from_blob(resume->require("value"));
    st.step = resume->step;
  }
  Rubric rubric;
  ScorerRegistry scorers = ScorerRegistry::with_builtins();
  const Rubric* rubric_ptr = nullptr;
  const ScorerRegistry* scorers_ptr = nullptr;
  if (cfg.algorithm == "grape") {
    rubric = load_rubric(cfg.rubric_path, scorers);
    rubric.items(task_kind_name(cfg.task.kind));  // fail before training, not mid-run
    rubric_ptr = &rubric;
    scorers_ptr = &scorers;
  }
  auto blobs = [&st] { return policy_blobs(st); };
  for (int k = st.step; k < cfg.iterations; ++k) {
    MetricsRow row = rl_iteration(st, cfg, rubric_ptr, scorers_ptr);
    ctx.record(row, blobs);
  }
  ctx.finish(blobs);
}

void run_sft(const TrainConfig& cfg, RunContext& ctx, const Checkpoint* resume) {
  PolicyModel policy = initial_policy(cfg);
  PolicyModel reference = policy;
  int start = 0;
  if (resume != nullptr) {
    policy = policy_from_blob(resume->require("policy"));
    reference = policy_from_blob(resume->require("reference"));
    start = resume->step;
  }
  RngState data_rng = stream(cfg.seed, kChTrainPrompts);
  std::vector<std::vector<int>> prompts = gen_prompts(cfg.task, cfg.dataset_size, data_rng);
  std::vector<Text> dataset;
  for (const auto& p : prompts) dataset.push_back(reference_text(cfg.task, p));

  int max_new = effective_max_new(cfg);
  auto blobs = [&] {
    return std::vector<ModelBlob>{{"policy", policy.spec, policy.params},
                                  {"reference", reference.spec, reference.params}};
  };
  for (int k = start; k < cfg.iterations; ++k) {
    LossReport rep = sft_loss(policy, dataset, cfg.answer_only);
    if (rep.is_sentinel()) sentinel_abort("sft step " + std::to_string(k + 1), rep);
    sgd_step(policy.params, rep.grad, cfg.learning_rate, "sft step " + std::to_string(k + 1));

    MetricsRow row;
    row.step = k + 1;
    row.loss = rep.loss;
    double reward_sum = 0.0;
    for (const auto& p : prompts) {
      reward_sum += true_reward(cfg.task, greedy_completion(policy, p, max_new));
    }
    row.mean_reward = reward_sum / static_cast<double>(prompts.size());
    DiagAccum diag = text_diagnostics(policy, reference, dataset, cfg.answer_only);
    row.mean_kl = diag.mean_kl();
    row.entropy = diag.mean_entropy();
    ctx.record(row, blobs);
  }
  ctx.finish(blobs);
}

void run_rejection(const TrainConfig& cfg, RunContext& ctx, const Checkpoint* resume) {
  PolicyModel policy = initial_policy(cfg);
  PolicyModel reference = policy;
  int start = 0;
  if (resume != nullptr) {
    policy = policy_from_blob(resume->require("policy"));
    reference = policy_from_blob(resume->require("reference"));
    start = resume->step;
  }

  std::optional<RewardModel> learned;
  std::function<double(const Text&)> selector;
  if (cfg.selector == "true-reward") {
    selector = [&cfg](const Text& t) { return true_reward(cfg.task, t); };
  } else {
    Checkpoint sck = load_checkpoint(cfg.selector);
    learned = reward_from_blob(sck.require("reward"));
    selector = [&learned](const Text& t) { return reward_score(*learned, t); };
  }

  int max_new = effective_max_new(cfg);
  auto blobs = [&] {
    return std::vector<ModelBlob>{{"policy", policy.spec, policy.params},
                                  {"reference", reference.spec, reference.params}};
  };
  for (int k = start; k < cfg.iterations; ++k) {
    RngState prompt_rng = iter_stream(cfg.seed, k, 0);
    std::vector<std::vector<int>> prompts = gen_prompts(cfg.task, cfg.batch_prompts, prompt_rng);
    RejectionRound round =
        rejection_round(policy, prompts, cfg.group_size, selector, cfg.temperature, max_new,
                        iter_stream(cfg.seed, k, 1));
    std::string where = "rejection round " + std::to_string(k + 1);
    double last_loss = 0.0;
    for (int s = 0; s < cfg.sft_steps_per_round; ++s) {
      LossReport rep = sft_loss(policy, round.kept, cfg.answer_only);
      if (rep.is_sentinel()) sentinel_abort(where, rep);
      sgd_step(policy.params, rep.grad, cfg.learning_rate, where);
      last_loss = rep.loss;
    }
    MetricsRow row;
    row.step = k + 1;
    row.loss = last_loss;
    row.mean_reward = round.mean_reward_all;
    DiagAccum diag = text_diagnostics(policy, reference, round.kept, cfg.answer_only);
    row.mean_kl = diag.mean_kl();
    row.entropy = diag.mean_entropy();
    ctx.record(row, blobs);
  }
  ctx.finish(blobs);
}

void run_reward(const TrainConfig& cfg, RunContext& ctx, const Checkpoint* resume) {
  ModelSpec rspec = scalar_spec_from(cfg);
  RewardModel reward{rspec, std::vector<double>(param_count(rspec), 0.0)};
  int start = 0;
  if (resume != nullptr) {
    reward = reward_from_blob(resume->require("reward"));
    start = resume->step;
  } else {
    RngState rng = stream(cfg.seed, kChInitReward);
    init_uniform(reward.params, rng, cfg.model.init_scale);
  }

  // Pair data comes from a throwaway randomly initialized policy so the
  // answers spread across reward levels.
  ModelSpec pspec = policy_model_spec(cfg);
  PolicyModel data_sampler{pspec, std::vector<double>(param_count(pspec), 0.0)};
  RngState srng = stream(cfg.seed, kChInitSampler);
  init_uniform(data_sampler.params, srng, cfg.model.init_scale);

  std::vector<PreferencePair> train_pairs =
      build_preference_dataset(cfg, data_sampler, cfg.dataset_size, kChTrainPrompts);
  std::vector<PreferencePair> hold_pairs =
      build_preference_dataset(cfg, data_sampler, cfg.holdout_size, kChHoldPrompts);

  auto blobs = [&] {
    return std::vector<ModelBlob>{{"reward", reward.spec, reward.params}};
  };
  for (int k = start; k < cfg.iterations; ++k) {
    std::string where = "reward step " + std::to_string(k + 1);
    std::vector<double> grad(reward.params.size(), 0.0);
    double loss = 0.0;
    double inv = 1.0 / static_cast<double>(train_pairs.size());
    for (const PreferencePair& pair : train_pairs) {
      LossReport rep = reward_pair_loss(reward, pair);
      loss += rep.loss * inv;
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += rep.grad[i] * inv;
    }
    sgd_step(reward.params, grad, cfg.learning_rate, where);

    int correct = 0;
    for (const PreferencePair& pair : hold_pairs) {
      if (reward_score(reward, pair.winner) > reward_score(reward, pair.loser)) ++correct;
    }
    MetricsRow row;
    row.step = k + 1;
    row.loss = loss;
    row.mean_reward = static_cast<double>(correct) / static_cast<double>(hold_pairs.size());
    ctx.record(row, blobs);
  }
  ctx.finish(blobs);
}

void run_dpo(const TrainConfig& cfg, RunContext& ctx, const Checkpoint* resume) {
  PolicyModel policy = initial_policy(cfg);
  PolicyModel reference = policy;
  int start = 0;
  if (resume != nullptr) {
    policy = policy_from_blob(resume->require("policy"));
    reference = policy_from_blob(resume->require("reference"));
    start = resume->step;
  }

  // Pairs are sampled from the frozen starting policy, the same model that
  // serves as the reference in the loss.
  std::vector<PreferencePair> train_pairs =
      build_preference_dataset(cfg, reference, cfg.dataset_size, kChTrainPrompts);
  std::vector<PreferencePair> hold_pairs =
      build_preference_dataset(cfg, reference, cfg.holdout_size, kChHoldPrompts);

  std::vector<Text> hold_winners;
  for (const PreferencePair& pair : hold_pairs) hold_winners.push_back(pair.winner);

  auto blobs = [&] {
    return std::vector<ModelBlob>{{"policy", policy.spec, policy.params},
                                  {"reference", reference.spec, reference.params}};
  };
  for (int k = start; k < cfg.iterations; ++k) {
    std::string where = "dpo step " + std::to_string(k + 1);
    std::vector<double> grad(policy.params.size(), 0.0);
    double loss = 0.0;
    double inv = 1.0 / static_cast<double>(train_pairs.size());
    for (const PreferencePair& pair : train_pairs) {
      LossReport rep = dpo_loss(policy, reference, pair, cfg.beta);
      if (rep.is_sentinel()) sentinel_abort(where, rep);
      loss += rep.loss * inv;
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += rep.grad[i] * inv;
    }
    sgd_step(policy.params, grad, cfg.learning_rate, where);

    // Held-out win rate: does the implicit reward order each unseen pair
    // the way the oracle does?
    int wins = 0;
    for (const PreferencePair& pair : hold_pairs) {
      double gap_w = sequence_logprob(policy, pair.winner, pair.winner.answer_start) -
                     sequence_logprob(reference, pair.winner, pair.winner.answer_start);
      double gap_l = sequence_logprob(policy, pair.loser, pair.loser.answer_start) -
                     sequence_logprob(reference, pair.loser, pair.loser.answer_start);
      if (gap_w > gap_l) ++wins;
    }
    MetricsRow row;
    row.step = k + 1;
    row.loss = loss;
    row.mean_reward = static_cast<double>(wins) / static_cast<double>(hold_pairs.size());
    DiagAccum diag = text_diagnostics(policy, reference, hold_winners, true);
    row.mean_kl = diag.mean_kl();
    row.entropy = diag.mean_entropy();
    ctx.record(row, blobs);
  }
  ctx.finish(blobs);
}

}  // namespace

TrainOutcome train(const TrainConfig& cfg) {
  validate_config(cfg);
  if (cfg.output_dir.empty()) throw ConfigError("output_dir must be set");
  fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  {
    std::ofstream rc(dir / "resolved_config.json");
    if (!rc) throw ConfigError("cannot write resolved config in " + dir.string());
    rc << resolved_config_json(cfg);
  }

  bool resuming = !cfg.resume_from.empty();
  Checkpoint resume_ck;
  if (resuming) {
    resume_ck = load_checkpoint(cfg.resume_from);
    if (resume_ck.algorithm != cfg.algorithm) {
      throw ConfigError("resume checkpoint was trained by '" + resume_ck.algorithm +
                        "', not '" + cfg.algorithm + "'");
    }
    if (resume_ck.rng_seed != cfg.seed) {
      throw ConfigError("resume checkpoint seed does not match the configured seed");
    }
    if (resume_ck.step > cfg.iterations) {
      throw ConfigError("resume checkpoint is already past the configured iterations");
    }
  }

  MetricsWriter metrics(dir / "metrics.csv", resuming);
  TrainOutcome out;
  out.run_dir = dir;
  RunContext ctx{dir, &metrics, &cfg, &out};
  const Checkpoint* resume = resuming ? &resume_ck : nullptr;

  if (is_rl_algorithm(cfg.algorithm)) {
    run_rl(cfg, ctx, resume);
  } else if (cfg.algorithm == "sft") {
    run_sft(cfg, ctx, resume);
  } else if (cfg.algorithm == "rejection") {
    run_rejection(cfg, ctx, resume);
  } else if (cfg.algorithm == "reward") {
    run_reward(cfg, ctx, resume);
  } else {
    run_dpo(cfg, ctx, resume);
  }
  return out;
}

EvalReport evaluate_policy(const PolicyModel& policy, const PolicyModel* reference,
                           const Task& task, int n_prompts, std::uint64_t seed) {
  if (n_prompts < 1) throw InvalidInputError("evaluation needs at least one prompt");
  RngState prompt_rng = stream(seed, kChEvalPrompts);
  std::vector<std::vector<int>> prompts = gen_prompts(task, n_prompts, prompt_rng);
  EvalReport report;
  report.prompts = n_prompts;
  report.has_reference = reference != nullptr;
  DiagAccum diag;
  double reward_sum = 0.0;
  for (const auto& p : prompts) {
    Text t = greedy_completion(policy, p, task.answer_len);
    reward_sum += true_reward(task, t);
    if (reference != nullptr) diag.add(policy, *reference, t, t.answer_start);
  }
  report.mean_true_reward = reward_sum / static_cast<double>(n_prompts);
  report.mean_kl = diag.mean_kl();
  return report;
}

}  // namespace deskrl
