#pragma once

#include <functional>
#include <span>
#include <vector>

#include "deskrl/rng.hpp"

namespace deskrl {

// All logarithms in this library are natural logs; information quantities
// come out in nats. 0 * log 0 is treated as 0 throughout.

// A categorical distribution: entries in [0,1] that sum to 1 (within 1e-9
// when validated). softmax() constructs these on the fast path without
// re-validation since the math guarantees the invariants.
class ProbVector {
 public:
  static ProbVector validated(std::vector<double> entries);
  static ProbVector unchecked(std::vector<double> entries);
  static ProbVector uniform(std::size_t n);

  std::size_t size() const { return entries_.size(); }
  double operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<double>& entries() const { return entries_; }
  std::span<const double> span() const { return entries_; }

 private:
  explicit ProbVector(std::vector<double> e) : entries_(std::move(e)) {}
  std::vector<double> entries_;
};

// Raw pre-softmax scores. Any finite values are legal.
using LogitVector = std::vector<double>;

// Max-subtracted, overflow-safe softmax. Throws InvalidInputError on empty
// or non-finite input.
ProbVector softmax(std::span<const double> logits);

// Numerically stable logistic function.
double sigmoid(double x);

// log(1 + e^x) without overflow; shows up in pairwise preference losses.
double softplus(double x);

// Shannon entropy of p, in nats.
double entropy(const ProbVector& p);

// -sum_i p_i log q_i. Returns +infinity (a sentinel, not an error) when q
// places zero mass somewhere p does not.
double cross_entropy(const ProbVector& p, const ProbVector& q);

// sum_i p_i log(p_i / q_i). Same zero-mass sentinel as cross_entropy.
double kl_divergence(const ProbVector& p, const ProbVector& q);

// Importance-weighted mean (1/N) sum_i (p_i / q_i) * x_i for samples drawn
// from the proposal with per-sample probabilities q_i > 0.
double importance_estimate(std::span<const double> values,
                           std::span<const double> p_probs,
                           std::span<const double> q_probs);

// Index draw from p. Bit-for-bit deterministic given the stream state.
int categorical_sample(const ProbVector& p, RngState& rng);

// Central-difference gradient of f at params. The workhorse oracle every
// analytic gradient in this project is checked against.
std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> params, double step = 1e-5);

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|), the conformance metric used by
// the gradient checks.
double fd_relative_error(std::span<const double> analytic, std::span<const double> fd);

bool all_finite(std::span<const double> v);

}  // namespace deskrl
