#pragma once

#include <optional>
#include <string>
#include <vector>

namespace deskrl {

// Every loss evaluates to a scalar plus the exact analytic gradient with
// respect to the trained model's parameters. A sentinel report (loss = +inf,
// zero gradient, diagnostic set) marks inputs the formula cannot digest,
// e.g. a zero-probability target token or an overflowing ratio; trainers
// abort the round on it rather than stepping through garbage.
struct LossReport {
  double loss = 0.0;
  std::vector<double> grad;

  struct PerToken {
    std::vector<double> logprobs;
    std::vector<double> ratios;
    std::vector<double> advantages;
  };
  std::optional<PerToken> per_token;

  // Fraction of scored tokens where the clipped branch won, for losses that
  // clip ratios.
  std::optional<double> clip_fraction;

  std::optional<std::string> diagnostic;

  bool is_sentinel() const { return diagnostic.has_value(); }
};

}  // namespace deskrl
