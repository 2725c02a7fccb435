#include "deskrl/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "deskrl/checkpoint.hpp"
#include "deskrl/config.hpp"
#include "deskrl/error.hpp"
#include "deskrl/gradcheck.hpp"
#include "deskrl/grape.hpp"
#include "deskrl/rng.hpp"
#include "deskrl/task.hpp"
#include "deskrl/trainer.hpp"

namespace deskrl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Relative output paths land under DESKRL_OUTPUT_ROOT when it is set, so
// configs can ship with portable run names.
std::string resolve_out(const std::string& out) {
  if (out.empty()) return out;
  fs::path p = out;
  if (p.is_relative()) {
    const char* root = std::getenv("DESKRL_OUTPUT_ROOT");
    if (root != nullptr && *root != '\0') p = fs::path(root) / p;
  }
  return p.string();
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "JSON config file");
  sub->add_option("--out", args.out_dir, "output directory (overrides config output_dir)");
  sub->add_option("overrides", args.overrides, "key=value config overrides");
}

TrainConfig assemble_config(const CommonArgs& args, const std::string& forced_algorithm) {
  std::vector<std::string> overrides = args.overrides;
  // The subcommand owns the algorithm; appending last makes it final.
  if (!forced_algorithm.empty()) overrides.push_back("algorithm=" + forced_algorithm);
  TrainConfig cfg = args.config_path.empty()
                        ? apply_overrides(default_config(), overrides)
                        : load_config(args.config_path, overrides);
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  cfg.output_dir = resolve_out(cfg.output_dir);
  return cfg;
}

int run_train(const CommonArgs& args, const std::string& forced_algorithm, std::string& out_dir) {
  TrainConfig cfg = assemble_config(args, forced_algorithm);
  out_dir = cfg.output_dir;
  TrainOutcome outcome = train(cfg);
  std::printf("run %s finished: %d step(s), final loss %.6g, mean reward %.6g\n",
              outcome.run_dir.string().c_str(), outcome.last.step, outcome.last.loss,
              outcome.last.mean_reward);
  std::printf("checkpoint: %s\n", outcome.final_checkpoint.string().c_str());
  return 0;
}

int run_gen_data(const CommonArgs& args, std::string& out_dir) {
  TrainConfig cfg = assemble_config(args, "");
  if (cfg.output_dir.empty()) throw ConfigError("gen-data needs --out or output_dir");
  out_dir = cfg.output_dir;
  fs::path dir = cfg.output_dir;
  fs::create_directories(dir);

  RngState prompt_rng = RngState(cfg.seed).derive(0x21);
  std::vector<std::vector<int>> prompts = gen_prompts(cfg.task, cfg.dataset_size, prompt_rng);
  std::vector<Text> texts;
  for (const auto& p : prompts) texts.push_back(reference_text(cfg.task, p));
  save_texts(texts, dir / "texts.jsonl");

  PolicyModel sampler = initial_policy(cfg);
  std::vector<PreferencePair> pairs =
      build_preference_dataset(cfg, sampler, cfg.dataset_size, 0x21);
  save_pairs(pairs, dir / "pairs.jsonl");

  std::printf("wrote %zu texts and %zu pairs to %s\n", texts.size(), pairs.size(),
              dir.string().c_str());
  return 0;
}

int run_eval(const CommonArgs& args, const std::string& checkpoint_path, int n_prompts,
             std::string& out_dir) {
  TrainConfig cfg = assemble_config(args, "");
  out_dir = cfg.output_dir;
  Checkpoint ck = load_checkpoint(checkpoint_path);
  PolicyModel policy = policy_from_blob(ck.require("policy"));
  const ModelBlob* ref_blob = ck.find("reference");
  PolicyModel reference;
  if (ref_blob != nullptr) reference = policy_from_blob(*ref_blob);

  EvalReport report = evaluate_policy(policy, ref_blob != nullptr ? &reference : nullptr,
                                      cfg.task, n_prompts, cfg.seed);
  json j = {{"checkpoint", checkpoint_path},
            {"prompts", report.prompts},
            {"mean_true_reward", report.mean_true_reward},
            {"mean_kl_to_reference", report.mean_kl},
            {"has_reference", report.has_reference}};
  std::cout << j.dump(2) << "\n";
  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    std::ofstream f(fs::path(cfg.output_dir) / "eval.json");
    f << j.dump(2) << "\n";
  }
  return 0;
}

int run_gradcheck_cmd(std::uint64_t seed, double tolerance) {
  GradCheckSummary summary = run_gradcheck_suite(seed, tolerance);
  for (const GradCheckResult& r : summary.results) {
    std::printf("%-18s %-18s seed=%llu rel_err=%.3e %s\n", r.loss_name.c_str(), r.arch.c_str(),
                static_cast<unsigned long long>(r.seed), r.relative_error,
                r.pass ? "ok" : "FAIL");
  }
  std::printf("gradcheck: %zu checks, max rel_err %.3e, %s\n", summary.results.size(),
              summary.max_relative_error, summary.all_pass ? "all ok" : "FAILURES");
  return summary.all_pass ? 0 : 1;
}

int run_lemma_check(int n_vectors, int trials, std::uint64_t seed) {
  if (n_vectors < 1 || trials < 2) throw InvalidInputError("lemma-check needs vectors and trials");
  RngState root(seed);
  int violations = 0;
  int equality_misses = 0;
  for (int i = 0; i < n_vectors; ++i) {
    RngState r = root.derive(static_cast<std::uint64_t>(i));
    int len = 2 + static_cast<int>(r.next_u64() % 7);
    std::vector<double> sigmas(static_cast<std::size_t>(len));
    for (double& s : sigmas) s = r.next_uniform(0.1, 2.0);
    LemmaVariances v = lemma_variances(sigmas);
    if (!(v.unweighted >= v.weighted - 1e-12)) ++violations;
    // Equal spreads must meet with equality; these do not.
    bool all_equal = true;
    for (double s : sigmas) all_equal = all_equal && s == sigmas[0];
    if (!all_equal && !(v.unweighted > v.weighted)) ++equality_misses;
  }
  {
    std::vector<double> equal(4, 0.7);
    LemmaVariances v = lemma_variances(equal);
    if (std::abs(v.unweighted - v.weighted) > 1e-12 * v.weighted) ++equality_misses;
  }

  std::vector<double> sim_sigmas = {0.3, 0.8, 1.4, 0.5};
  LemmaVariances closed = lemma_variances(sim_sigmas);
  RngState sim_rng = root.derive(0xABCDEF);
  LemmaVariances sim = simulate_lemma(sim_sigmas, trials, sim_rng);
  // A sample variance over n trials has spread about var * sqrt(2/(n-1)).
  double band = 3.0 * std::sqrt(2.0 / (trials - 1));
  bool sim_ok = std::abs(sim.unweighted - closed.unweighted) <= band * closed.unweighted &&
                std::abs(sim.weighted - closed.weighted) <= band * closed.weighted;

  std::printf("closed form: %d vectors, %d inequality violations, %d equality misses\n",
              n_vectors, violations, equality_misses);
  std::printf("simulated  : unweighted %.6g vs %.6g, weighted %.6g vs %.6g (3-sigma band %s)\n",
              sim.unweighted, closed.unweighted, sim.weighted, closed.weighted,
              sim_ok ? "ok" : "MISSED");
  bool pass = violations == 0 && equality_misses == 0 && sim_ok;
  std::printf("lemma-check: %s\n", pass ? "ok" : "FAIL");
  return pass ? 0 : 1;
}

void write_error_json(const std::string& out_dir, const std::string& type,
                      const std::string& message) {
  if (out_dir.empty()) return;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) return;
  std::ofstream f(fs::path(out_dir) / "error.json");
  if (!f) return;
  json j = {{"type", type}, {"message", message}};
  f << j.dump(2) << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"desk-scale policy training laboratory"};
  app.require_subcommand(1);

  CommonArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data", "write reference texts and preference pairs");
  add_common(gen, gen_args);

  CommonArgs sft_args;
  CLI::App* sft = app.add_subcommand("sft", "supervised fine-tuning on exact answers");
  add_common(sft, sft_args);

  CommonArgs reject_args;
  CLI::App* reject = app.add_subcommand("reject", "best-of-n rejection sampling rounds");
  add_common(reject, reject_args);

  CommonArgs reward_args;
  CLI::App* reward = app.add_subcommand("train-reward", "fit a reward model on preference pairs");
  add_common(reward, reward_args);

  CommonArgs rl_args;
  std::string rl_algo;
  CLI::App* rl = app.add_subcommand("rl", "policy optimization");
  rl->add_option("--algo", rl_algo, "reinforce | trpo | ppo | grpo | dpo | grape")->required();
  add_common(rl, rl_args);

  CommonArgs eval_args;
  std::string eval_checkpoint;
  int eval_prompts = 128;
  CLI::App* eval = app.add_subcommand("eval", "greedy-decode a checkpoint on fresh prompts");
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint JSON to evaluate")->required();
  eval->add_option("--prompts", eval_prompts, "number of evaluation prompts");
  add_common(eval, eval_args);

  std::uint64_t gc_seed = 1;
  double gc_tolerance = 1e-4;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference conformance suite");
  gradcheck->add_option("--seed", gc_seed, "base seed");
  gradcheck->add_option("--tolerance", gc_tolerance, "max allowed relative error");

  int lemma_vectors = 10000;
  int lemma_trials = 20000;
  std::uint64_t lemma_seed = 7;
  CLI::App* lemma = app.add_subcommand("lemma-check", "variance inequality, closed form + simulation");
  lemma->add_option("--vectors", lemma_vectors, "random spread vectors to test");
  lemma->add_option("--trials", lemma_trials, "simulation sample count");
  lemma->add_option("--seed", lemma_seed, "rng seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::string out_dir;  // filled before work starts so failures can drop error.json
  try {
    if (app.got_subcommand(gen)) return run_gen_data(gen_args, out_dir);
    if (app.got_subcommand(sft)) return run_train(sft_args, "sft", out_dir);
    if (app.got_subcommand(reject)) return run_train(reject_args, "rejection", out_dir);
    if (app.got_subcommand(reward)) return run_train(reward_args, "reward", out_dir);
    if (app.got_subcommand(rl)) {
      if (rl_algo == "dpo") return run_train(rl_args, "dpo", out_dir);
      if (!is_rl_algorithm(rl_algo)) {
        throw ConfigError("unknown rl algorithm '" + rl_algo + "'");
      }
      return run_train(rl_args, rl_algo, out_dir);
    }
    if (app.got_subcommand(eval)) return run_eval(eval_args, eval_checkpoint, eval_prompts, out_dir);
    if (app.got_subcommand(gradcheck)) return run_gradcheck_cmd(gc_seed, gc_tolerance);
    if (app.got_subcommand(lemma)) return run_lemma_check(lemma_vectors, lemma_trials, lemma_seed);
    std::cerr << "no subcommand selected\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    write_error_json(out_dir, "config", e.what());
    return 2;
  } catch (const InvalidInputError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    write_error_json(out_dir, "invalid-input", e.what());
    return 2;
  } catch (const BudgetError& e) {
    std::cerr << "budget exceeded: " << e.what() << "\n";
    write_error_json(out_dir, "budget", e.what());
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    write_error_json(out_dir, "numerical", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    write_error_json(out_dir, "unexpected", e.what());
    return 1;
  }
}

}  // namespace deskrl
