#include <doctest.h>

#include <cmath>
#include <vector>

#include "deskrl/error.hpp"
#include "deskrl/model.hpp"
#include "deskrl/numerics.hpp"
#include "deskrl/rng.hpp"
#include "deskrl/text.hpp"

using namespace deskrl;

namespace {

PolicyModel seeded_policy(Arch arch, int vocab, int window, int hidden, std::uint64_t seed,
                          double scale = 0.3) {
  PolicyModel m = make_policy(arch, vocab, window, hidden);
  RngState rng(seed);
  init_uniform(m.params, rng, scale);
  return m;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("zero parameters mean a uniform policy for both architectures") {
  for (Arch arch : {Arch::kLookupTable, Arch::kOneHiddenLayer}) {
    PolicyModel m = make_policy(arch, 8, 3, arch == Arch::kOneHiddenLayer ? 4 : 0);
    std::vector<int> prefix = {2, 5, 6};
    ProbVector p = next_token_dist(m, prefix);
    REQUIRE(p.size() == 8);
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(p[i] == doctest::Approx(1.0 / 8.0).epsilon(1e-14));
    }
    CHECK(std::abs(entropy(p) - std::log(8.0)) < 1e-10);
  }
}

TEST_CASE("zero-parameter scalar heads output exactly zero") {
  for (Arch arch : {Arch::kLookupTable, Arch::kOneHiddenLayer}) {
    ValueModel v = make_value(arch, 8, 3, arch == Arch::kOneHiddenLayer ? 4 : 0);
    std::vector<int> prefix = {2, 5};
    CHECK(value_estimate(v, prefix) == 0.0);
  }
}

TEST_CASE("spec validation enforces the desk-scale caps") {
  ModelSpec spec;
  spec.arch = Arch::kLookupTable;
  spec.vocab_size = 8;
  spec.context_window = 2;
  spec.hidden_width = 0;
  spec.output_dim = 8;
  CHECK_NOTHROW(validate_spec(spec));

  ModelSpec bad = spec;
  bad.vocab_size = 65;
  CHECK_THROWS_AS(validate_spec(bad), InvalidInputError);
  bad = spec;
  bad.context_window = 9;
  CHECK_THROWS_AS(validate_spec(bad), InvalidInputError);
  bad = spec;
  bad.output_dim = 3;
  CHECK_THROWS_AS(validate_spec(bad), InvalidInputError);
  bad = spec;
  bad.arch = Arch::kOneHiddenLayer;
  bad.hidden_width = 33;
  CHECK_THROWS_AS(validate_spec(bad), InvalidInputError);
  // 64^8 contexts would blow the table budget.
  bad = spec;
  bad.vocab_size = 64;
  bad.context_window = 8;
  bad.output_dim = 64;
  CHECK_THROWS_AS(validate_spec(bad), BudgetError);
}

TEST_CASE("lookup table param count is contexts times outputs") {
  ModelSpec spec;
  spec.arch = Arch::kLookupTable;
  spec.vocab_size = 6;
  spec.context_window = 2;
  spec.output_dim = 6;
  CHECK(param_count(spec) == 6u * 6u * 6u);

  ModelSpec mlp = spec;
  mlp.arch = Arch::kOneHiddenLayer;
  mlp.hidden_width = 8;
  // W1[h x kV] + b1[h] + W2[out x h] + b2[out]
  CHECK(param_count(mlp) == 8u * 12u + 8u + 6u * 8u + 6u);
}

TEST_CASE("sequence log-prob telescopes over per-token log-probs") {
  for (Arch arch : {Arch::kLookupTable, Arch::kOneHiddenLayer}) {
    PolicyModel m = seeded_policy(arch, 6, 3, 8, 21);
    Text text;
    text.tokens = {2, 4, 5, 3, 4, 5, 4};
    text.answer_start = 5;
    std::vector<double> lps = sequence_token_logprobs(m, text, 1);
    REQUIRE(lps.size() == static_cast<std::size_t>(text.length()));
    double sum = 0.0;
    for (double v : lps) sum += v;
    CHECK(sequence_logprob(m, text, 1) == doctest::Approx(sum).epsilon(1e-12));

    // Answer-only scoring is the tail of the full scoring.
    std::vector<double> tail = sequence_token_logprobs(m, text, text.answer_start);
    REQUIRE(tail.size() == 3);
    for (std::size_t i = 0; i < tail.size(); ++i) {
      CHECK(tail[i] == doctest::Approx(lps[i + 4]).epsilon(1e-14));
    }
  }
}

TEST_CASE("log-prob gradient matches finite differences on both architectures") {
  for (Arch arch : {Arch::kLookupTable, Arch::kOneHiddenLayer}) {
    PolicyModel m = seeded_policy(arch, 5, 2, 6, 33);
    std::vector<int> prefix = {2, 4};
    int token = 3;
    std::vector<double> grad(m.params.size(), 0.0);
    accumulate_logprob_grad(m, prefix, token, 1.0, grad);
    auto f = [&](const std::vector<double>& p) {
      PolicyModel probe = m;
      probe.params = p;
      ProbVector dist = next_token_dist(probe, prefix);
      return std::log(dist[static_cast<std::size_t>(token)]);
    };
    std::vector<double> fd = fd_gradient(f, m.params);
    CHECK(fd_relative_error(grad, fd) < 1e-6);
  }
}

TEST_CASE("gradient accumulation adds instead of overwriting") {
  PolicyModel m = seeded_policy(Arch::kLookupTable, 5, 2, 0, 34);
  std::vector<int> prefix = {2, 4};
  std::vector<double> once(m.params.size(), 0.0);
  accumulate_logprob_grad(m, prefix, 3, 1.0, once);
  std::vector<double> twice(m.params.size(), 0.0);
  accumulate_logprob_grad(m, prefix, 3, 1.0, twice);
  accumulate_logprob_grad(m, prefix, 3, 1.0, twice);
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));
  }
}

TEST_CASE("greedy sampling takes the argmax and breaks ties toward lower ids") {
  // Zero params: all logits tie, so greedy must pick token 0 every step.
  PolicyModel m = make_policy(Arch::kLookupTable, 6, 2, 0);
  std::vector<int> prompt = {2, 4, 3};
  RngState rng(1);
  Text t = sample_completion(m, prompt, 0.0, 3, rng, -1);
  REQUIRE(t.length() == 6);
  CHECK(t.answer_start == 4);
  for (int i = 3; i < 6; ++i) CHECK(t.tokens[static_cast<std::size_t>(i)] == 0);
}

TEST_CASE("sampling stops after emitting the stop token") {
  // Force the stop token by making its logit huge in every context.
  PolicyModel m = make_policy(Arch::kLookupTable, 6, 1, 0);
  for (std::size_t ctx = 0; ctx < 6; ++ctx) {
    m.params[ctx * 6 + tokens::kEndOfText] = 50.0;
  }
  std::vector<int> prompt = {2, 4, 3};
  RngState rng(1);
  Text t = sample_completion(m, prompt, 0.0, 5, rng, tokens::kEndOfText);
  CHECK(t.length() == 4);
  CHECK(t.tokens.back() == tokens::kEndOfText);
}

TEST_CASE("temperature scales exploration") {
  PolicyModel m = seeded_policy(Arch::kLookupTable, 6, 2, 0, 55, 1.0);
  std::vector<int> prompt = {2, 4, 3};
  // Near-zero temperature equals greedy.
  RngState r1(9);
  RngState r2(9);
  Text greedy = sample_completion(m, prompt, 0.0, 3, r1, -1);
  Text cold = sample_completion(m, prompt, 1e-9, 3, r2, -1);
  CHECK(greedy.tokens == cold.tokens);
}

TEST_CASE("short prefixes are padded on the left") {
  PolicyModel m = seeded_policy(Arch::kLookupTable, 6, 3, 0, 56);
  // An empty prefix must still produce a valid distribution.
  std::vector<int> empty;
  ProbVector p = next_token_dist(m, empty);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += p[i];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("reward head scores the whole text and matches its gradient") {
  RewardModel r{ModelSpec{Arch::kOneHiddenLayer, 6, 4, 8, 1}, {}};
  r.params.assign(param_count(r.spec), 0.0);
  RngState rng(66);
  init_uniform(r.params, rng, 0.3);
  Text text;
  text.tokens = {2, 4, 5, 3, 4, 5};
  text.answer_start = 5;
  double score = reward_score(r, text);
  CHECK(std::isfinite(score));
  std::vector<double> grad(r.params.size(), 0.0);
  accumulate_reward_grad(r, text, 1.0, grad);
  auto f = [&](const std::vector<double>& p) {
    RewardModel probe = r;
    probe.params = p;
    return reward_score(probe, text);
  };
  CHECK(fd_relative_error(grad, fd_gradient(f, r.params)) < 1e-6);
}

TEST_CASE("fingerprints react to parameter and shape changes") {
  PolicyModel a = seeded_policy(Arch::kLookupTable, 6, 2, 0, 71);
  PolicyModel b = a;
  CHECK(model_fingerprint(a.spec, a.params) == model_fingerprint(b.spec, b.params));
  b.params[3] += 1e-12;
  CHECK(model_fingerprint(a.spec, a.params) != model_fingerprint(b.spec, b.params));
  PolicyModel c = seeded_policy(Arch::kLookupTable, 6, 3, 0, 71);
  CHECK(model_fingerprint(a.spec, a.params) != model_fingerprint(c.spec, c.params));
}

TEST_CASE("text validation guards tokens and answer bounds") {
  Text t;
  t.tokens = {2, 4, 3, 5};
  t.answer_start = 4;
  CHECK_NOTHROW(validate_text(t, 6));
  t.answer_start = 5;
  CHECK_THROWS_AS(validate_text(t, 6), InvalidInputError);
  t.answer_start = 0;
  CHECK_THROWS_AS(validate_text(t, 6), InvalidInputError);
  t.answer_start = 1;
  t.tokens[2] = 6;
  CHECK_THROWS_AS(validate_text(t, 6), InvalidInputError);
}

}  // TEST_SUITE
