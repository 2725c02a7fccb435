#include "deskrl/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>

#include "deskrl/error.hpp"

namespace deskrl {

namespace {

constexpr int kMaxVocab = 64;
constexpr int kMaxWindow = 8;
constexpr int kMaxHidden = 32;

// Last k tokens of prefix, left-padded with the pad id.
void fill_context(std::span<const int> prefix, int k, std::span<int> ctx) {
  int n = static_cast<int>(prefix.size());
  for (int j = 0; j < k; ++j) {
    int pos = n - k + j;
    ctx[j] = pos >= 0 ? prefix[pos] : tokens::kPad;
  }
}

void check_tokens(std::span<const int> seq, int vocab_size) {
  for (int t : seq) {
    if (t < 0 || t >= vocab_size) {
      throw InvalidInputError("token id " + std::to_string(t) + " out of vocabulary (V=" +
                              std::to_string(vocab_size) + ")");
    }
  }
}

std::size_t lookup_row(const ModelSpec& spec, std::span<const int> ctx) {
  std::size_t idx = 0;
  std::size_t stride = 1;
  for (int j = 0; j < spec.context_window; ++j) {
    idx += static_cast<std::size_t>(ctx[j]) * stride;
    stride *= static_cast<std::size_t>(spec.vocab_size);
  }
  return idx * static_cast<std::size_t>(spec.output_dim);
}

// Parameter layout for the one-hidden-layer net, D = k*V inputs:
//   W1 [h x D] row-major | b1 [h] | W2 [out x h] row-major | b2 [out]
struct MlpLayout {
  std::size_t w1, b1, w2, b2, input_dim;
};

MlpLayout mlp_layout(const ModelSpec& spec) {
  MlpLayout l{};
  l.input_dim = static_cast<std::size_t>(spec.context_window) *
                static_cast<std::size_t>(spec.vocab_size);
  l.w1 = 0;
  l.b1 = l.w1 + static_cast<std::size_t>(spec.hidden_width) * l.input_dim;
  l.w2 = l.b1 + static_cast<std::size_t>(spec.hidden_width);
  l.b2 = l.w2 + static_cast<std::size_t>(spec.output_dim) *
                    static_cast<std::size_t>(spec.hidden_width);
  return l;
}

void mlp_hidden(const ModelSpec& spec, std::span<const double> params, std::span<const int> ctx,
                std::span<double> act) {
  MlpLayout l = mlp_layout(spec);
  int h = spec.hidden_width;
  for (int i = 0; i < h; ++i) {
    double u = params[l.b1 + static_cast<std::size_t>(i)];
    for (int j = 0; j < spec.context_window; ++j) {
      std::size_t col = static_cast<std::size_t>(j) * spec.vocab_size +
                        static_cast<std::size_t>(ctx[j]);
      u += params[l.w1 + static_cast<std::size_t>(i) * l.input_dim + col];
    }
    act[i] = std::tanh(u);
  }
}

template <typename Model>
Model make_model(Arch arch, int vocab_size, int context_window, int hidden_width,
                 int output_dim) {
  ModelSpec spec{arch, vocab_size, context_window, hidden_width, output_dim};
  validate_spec(spec);
  return Model{spec, std::vector<double>(param_count(spec), 0.0)};
}

}  // namespace

void validate_spec(const ModelSpec& spec) {
  if (spec.vocab_size < 2 || spec.vocab_size > kMaxVocab) {
    throw InvalidInputError("vocab_size must be in [2, " + std::to_string(kMaxVocab) + "]");
  }
  if (spec.context_window < 1 || spec.context_window > kMaxWindow) {
    throw InvalidInputError("context_window must be in [1, " + std::to_string(kMaxWindow) + "]");
  }
  if (spec.output_dim != 1 && spec.output_dim != spec.vocab_size) {
    throw InvalidInputError("output_dim must be 1 (scalar head) or vocab_size (policy head)");
  }
  if (spec.arch == Arch::kOneHiddenLayer) {
    if (spec.hidden_width < 1 || spec.hidden_width > kMaxHidden) {
      throw InvalidInputError("hidden_width must be in [1, " + std::to_string(kMaxHidden) + "]");
    }
  } else {
    if (spec.hidden_width != 0) {
      throw InvalidInputError("lookup-table models take hidden_width = 0");
    }
    // 2^26 doubles = 512 MiB; anything bigger is a config mistake at this scale.
    double rows = std::pow(static_cast<double>(spec.vocab_size), spec.context_window);
    if (rows * spec.output_dim > static_cast<double>(1ull << 26)) {
      throw InvalidInputError("lookup table V^k * output_dim exceeds the size budget");
    }
  }
}

std::size_t param_count(const ModelSpec& spec) {
  if (spec.arch == Arch::kLookupTable) {
    std::size_t rows = 1;
    for (int j = 0; j < spec.context_window; ++j) rows *= static_cast<std::size_t>(spec.vocab_size);
    return rows * static_cast<std::size_t>(spec.output_dim);
  }
  MlpLayout l = mlp_layout(spec);
  return l.b2 + static_cast<std::size_t>(spec.output_dim);
}

std::string arch_name(Arch arch) {
  return arch == Arch::kLookupTable ? "lookup-table" : "one-hidden-layer";
}

Arch arch_from_name(const std::string& name) {
  if (name == "lookup-table") return Arch::kLookupTable;
  if (name == "one-hidden-layer") return Arch::kOneHiddenLayer;
  throw InvalidInputError("unknown architecture: " + name);
}

PolicyModel make_policy(Arch arch, int vocab_size, int context_window, int hidden_width) {
  return make_model<PolicyModel>(arch, vocab_size, context_window, hidden_width, vocab_size);
}

ValueModel make_value(Arch arch, int vocab_size, int context_window, int hidden_width) {
  return make_model<ValueModel>(arch, vocab_size, context_window, hidden_width, 1);
}

RewardModel make_reward(Arch arch, int vocab_size, int context_window, int hidden_width) {
  return make_model<RewardModel>(arch, vocab_size, context_window, hidden_width, 1);
}

void init_uniform(std::span<double> params, RngState& rng, double scale) {
  for (double& p : params) p = rng.next_uniform(-scale, scale);
}

void forward_scores(const ModelSpec& spec, std::span<const double> params,
                    std::span<const int> prefix, std::span<double> out) {
  check_tokens(prefix, spec.vocab_size);
  int k = spec.context_window;
  int ctx_buf[kMaxWindow];
  std::span<int> ctx(ctx_buf, static_cast<std::size_t>(k));
  fill_context(prefix, k, ctx);

  if (spec.arch == Arch::kLookupTable) {
    std::size_t row = lookup_row(spec, ctx);
    for (int o = 0; o < spec.output_dim; ++o) out[o] = params[row + static_cast<std::size_t>(o)];
  } else {
    MlpLayout l = mlp_layout(spec);
    double act_buf[kMaxHidden];
    std::span<double> act(act_buf, static_cast<std::size_t>(spec.hidden_width));
    mlp_hidden(spec, params, ctx, act);
    for (int o = 0; o < spec.output_dim; ++o) {
      double s = params[l.b2 + static_cast<std::size_t>(o)];
      const double* w2row = params.data() + l.w2 +
                            static_cast<std::size_t>(o) * spec.hidden_width;
      for (int i = 0; i < spec.hidden_width; ++i) s += w2row[i] * act[i];
      out[o] = s;
    }
  }
  if (!all_finite(out)) throw NumericalError("non-finite model scores");
}

void backward_scores(const ModelSpec& spec, std::span<const double> params,
                     std::span<const int> prefix, std::span<const double> out_grad,
                     std::span<double> param_grad) {
  check_tokens(prefix, spec.vocab_size);
  int k = spec.context_window;
  int ctx_buf[kMaxWindow];
  std::span<int> ctx(ctx_buf, static_cast<std::size_t>(k));
  fill_context(prefix, k, ctx);

  if (spec.arch == Arch::kLookupTable) {
    std::size_t row = lookup_row(spec, ctx);
    for (int o = 0; o < spec.output_dim; ++o) {
      param_grad[row + static_cast<std::size_t>(o)] += out_grad[o];
    }
    return;
  }

  MlpLayout l = mlp_layout(spec);
  int h = spec.hidden_width;
  double act_buf[kMaxHidden];
  std::span<double> act(act_buf, static_cast<std::size_t>(h));
  mlp_hidden(spec, params, ctx, act);

  double dact_buf[kMaxHidden] = {};
  for (int o = 0; o < spec.output_dim; ++o) {
    double g = out_grad[o];
    if (g == 0.0) continue;
    std::size_t w2row = l.w2 + static_cast<std::size_t>(o) * h;
    param_grad[l.b2 + static_cast<std::size_t>(o)] += g;
    for (int i = 0; i < h; ++i) {
      param_grad[w2row + static_cast<std::size_t>(i)] += g * act[i];
      dact_buf[i] += g * params[w2row + static_cast<std::size_t>(i)];
    }
  }
  for (int i = 0; i < h; ++i) {
    double du = dact_buf[i] * (1.0 - act[i] * act[i]);  // tanh'
    if (du == 0.0) continue;
    param_grad[l.b1 + static_cast<std::size_t>(i)] += du;
    std::size_t w1row = l.w1 + static_cast<std::size_t>(i) * l.input_dim;
    for (int j = 0; j < k; ++j) {
      std::size_t col = static_cast<std::size_t>(j) * spec.vocab_size +
                        static_cast<std::size_t>(ctx[j]);
      param_grad[w1row + col] += du;
    }
  }
}

LogitVector next_token_logits(const PolicyModel& policy, std::span<const int> prefix) {
  LogitVector out(static_cast<std::size_t>(policy.spec.output_dim));
  forward_scores(policy.spec, policy.params, prefix, out);
  return out;
}

ProbVector next_token_dist(const PolicyModel& policy, std::span<const int> prefix) {
  return softmax(next_token_logits(policy, prefix));
}

std::vector<double> sequence_token_logprobs(const PolicyModel& policy, const Text& text,
                                            int from) {
  validate_text(text, policy.spec.vocab_size);
  if (from < 1 || from > text.length()) {
    throw InvalidInputError("sequence position out of range");
  }
  std::vector<double> lps;
  lps.reserve(static_cast<std::size_t>(text.length() - from + 1));
  std::span<const int> all(text.tokens);
  for (int t = from; t <= text.length(); ++t) {
    ProbVector p = next_token_dist(policy, all.first(static_cast<std::size_t>(t - 1)));
    lps.push_back(std::log(p[static_cast<std::size_t>(text.tokens[t - 1])]));
  }
  return lps;
}

double sequence_logprob(const PolicyModel& policy, const Text& text, int from) {
  double sum = 0.0;
  for (double lp : sequence_token_logprobs(policy, text, from)) sum += lp;
  return sum;
}

void accumulate_logits_grad(const PolicyModel& policy, std::span<const int> prefix,
                            std::span<const double> dlogits, std::span<double> grad) {
  backward_scores(policy.spec, policy.params, prefix, dlogits, grad);
}

void accumulate_logprob_grad(const PolicyModel& policy, std::span<const int> prefix, int token,
                             double scale, std::span<double> grad) {
  if (token < 0 || token >= policy.spec.vocab_size) {
    throw InvalidInputError("token id out of vocabulary");
  }
  ProbVector p = next_token_dist(policy, prefix);
  // d log softmax_a / d logit_j = [a == j] - p_j
  std::vector<double> dlogits(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) dlogits[j] = -scale * p[j];
  dlogits[static_cast<std::size_t>(token)] += scale;
  backward_scores(policy.spec, policy.params, prefix, dlogits, grad);
}

void accumulate_sequence_logprob_grad(const PolicyModel& policy, const Text& text, int from,
                                      double scale, std::span<double> grad) {
  validate_text(text, policy.spec.vocab_size);
  if (from < 1 || from > text.length()) {
    throw InvalidInputError("sequence position out of range");
  }
  std::span<const int> all(text.tokens);
  for (int t = from; t <= text.length(); ++t) {
    accumulate_logprob_grad(policy, all.first(static_cast<std::size_t>(t - 1)),
                            text.tokens[t - 1], scale, grad);
  }
}

Text sample_completion(const PolicyModel& policy, std::span<const int> prompt,
                       double temperature, int max_new_tokens, RngState& rng, int stop_token) {
  check_tokens(prompt, policy.spec.vocab_size);
  if (max_new_tokens < 1) throw InvalidInputError("max_new_tokens must be >= 1");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw InvalidInputError("temperature must be finite and >= 0");
  }
  Text out;
  out.tokens.assign(prompt.begin(), prompt.end());
  out.answer_start = static_cast<int>(prompt.size()) + 1;
  for (int step = 0; step < max_new_tokens; ++step) {
    LogitVector logits = next_token_logits(policy, out.tokens);
    int tok;
    if (temperature < 1e-6) {
      tok = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    } else {
      for (double& l : logits) l /= temperature;
      tok = categorical_sample(softmax(logits), rng);
    }
    out.tokens.push_back(tok);
    if (tok == stop_token) break;
  }
  return out;
}

double value_estimate(const ValueModel& value, std::span<const int> prefix) {
  double out[1];
  forward_scores(value.spec, value.params, prefix, out);
  return out[0];
}

void accumulate_value_grad(const ValueModel& value, std::span<const int> prefix, double scale,
                           std::span<double> grad) {
  double g[1] = {scale};
  backward_scores(value.spec, value.params, prefix, g, grad);
}

double reward_score(const RewardModel& reward, const Text& text) {
  validate_text(text, reward.spec.vocab_size);
  double out[1];
  forward_scores(reward.spec, reward.params, text.tokens, out);
  return out[0];
}

void accumulate_reward_grad(const RewardModel& reward, const Text& text, double scale,
                            std::span<double> grad) {
  validate_text(text, reward.spec.vocab_size);
  double g[1] = {scale};
  backward_scores(reward.spec, reward.params, text.tokens, g, grad);
}

std::string model_fingerprint(const ModelSpec& spec, std::span<const double> params) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a over spec fields, then raw param bits
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(spec.arch));
  mix(static_cast<std::uint64_t>(spec.vocab_size));
  mix(static_cast<std::uint64_t>(spec.context_window));
  mix(static_cast<std::uint64_t>(spec.hidden_width));
  mix(static_cast<std::uint64_t>(spec.output_dim));
  for (double p : params) mix(std::bit_cast<std::uint64_t>(p));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace deskrl
