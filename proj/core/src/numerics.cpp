#include "deskrl/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "deskrl/error.hpp"

namespace deskrl {

namespace {
constexpr double kSumTolerance = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

ProbVector ProbVector::validated(std::vector<double> entries) {
  if (entries.empty()) throw InvalidInputError("probability vector must be non-empty");
  double sum = 0.0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    double p = entries[i];
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw InvalidInputError("probability entry " + std::to_string(i) + " out of [0,1]: " +
                              std::to_string(p));
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InvalidInputError("probabilities sum to " + std::to_string(sum) + ", expected 1");
  }
  return ProbVector(std::move(entries));
}

ProbVector ProbVector::unchecked(std::vector<double> entries) {
  return ProbVector(std::move(entries));
}

ProbVector ProbVector::uniform(std::size_t n) {
  if (n == 0) throw InvalidInputError("probability vector must be non-empty");
  return ProbVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.empty()) throw InvalidInputError("softmax of empty logit vector");
  if (!all_finite(logits)) throw InvalidInputError("softmax input has non-finite entries");
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return ProbVector::unchecked(std::move(out));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

double entropy(const ProbVector& p) {
  double h = 0.0;
  for (double pi : p.entries()) {
    if (pi > 0.0) h -= pi * std::log(pi);
  }
  return h;
}

double cross_entropy(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) throw InvalidInputError("cross_entropy: length mismatch");
  double ce = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;  // 0 log 0 = 0 regardless of q
    if (q[i] <= 0.0) return kInf;
    ce -= p[i] * std::log(q[i]);
  }
  return ce;
}

double kl_divergence(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) throw InvalidInputError("kl_divergence: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] <= 0.0) return kInf;
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

double importance_estimate(std::span<const double> values, std::span<const double> p_probs,
                           std::span<const double> q_probs) {
  if (values.size() != p_probs.size() || values.size() != q_probs.size()) {
    throw InvalidInputError("importance_estimate: length mismatch");
  }
  if (values.empty()) throw InvalidInputError("importance_estimate: empty sample");
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(q_probs[i] > 0.0) || !std::isfinite(q_probs[i])) {
      throw InvalidInputError("importance_estimate: proposal probability " + std::to_string(i) +
                              " must be positive");
    }
    if (!std::isfinite(p_probs[i]) || p_probs[i] < 0.0) {
      throw InvalidInputError("importance_estimate: target probability " + std::to_string(i) +
                              " must be >= 0");
    }
    acc += p_probs[i] / q_probs[i] * values[i];
  }
  return acc / static_cast<double>(values.size());
}

int categorical_sample(const ProbVector& p, RngState& rng) {
  double u = rng.next_double();
  double cum = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) last_positive = static_cast<int>(i);
    cum += p[i];
    if (u < cum) return static_cast<int>(i);
  }
  // Floating-point shortfall in the cumulative sum; land on the last
  // positive-mass index.
  if (last_positive < 0) throw InvalidInputError("categorical_sample: all-zero distribution");
  return last_positive;
}

std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> params, double step) {
  if (!(step > 0.0)) throw InvalidInputError("fd_gradient: step must be positive");
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    double saved = params[i];
    params[i] = saved + step;
    double up = f(params);
    params[i] = saved - step;
    double down = f(params);
    params[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("fd_gradient: non-finite objective at coordinate " +
                           std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double fd_relative_error(std::span<const double> analytic, std::span<const double> fd) {
  if (analytic.size() != fd.size()) throw InvalidInputError("fd_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    double denom = std::max({1.0, std::abs(analytic[i]), std::abs(fd[i])});
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

}  // namespace deskrl
