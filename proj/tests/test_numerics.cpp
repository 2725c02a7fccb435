#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "deskrl/error.hpp"
#include "deskrl/numerics.hpp"
#include "deskrl/rng.hpp"

using namespace deskrl;

namespace {

ProbVector random_dist(RngState& rng, std::size_t n) {
  LogitVector logits(n);
  for (double& v : logits) v = rng.next_gaussian();
  return softmax(logits);
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("softmax of [1, 0] hits the frozen two-way split") {
  ProbVector p = softmax(std::vector<double>{1.0, 0.0});
  CHECK(p[0] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("softmax is invariant to constant shifts, including huge ones") {
  std::vector<double> base = {0.3, -1.2, 2.0, 0.0};
  ProbVector a = softmax(base);
  for (double shift : {-1000.0, 1000.0, 5.0}) {
    std::vector<double> shifted = base;
    for (double& v : shifted) v += shift;
    ProbVector b = softmax(shifted);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmax rejects empty and non-finite input") {
  CHECK_THROWS_AS(softmax(std::vector<double>{}), InvalidInputError);
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::nan("")}), InvalidInputError);
  CHECK_THROWS_AS(softmax(std::vector<double>{std::numeric_limits<double>::infinity()}),
                  InvalidInputError);
}

TEST_CASE("prob vector validation catches broken inputs") {
  CHECK_THROWS_AS(ProbVector::validated({}), InvalidInputError);
  CHECK_THROWS_AS(ProbVector::validated({0.5, 0.6}), InvalidInputError);
  CHECK_THROWS_AS(ProbVector::validated({-0.1, 1.1}), InvalidInputError);
  ProbVector ok = ProbVector::validated({0.25, 0.75});
  CHECK(ok.size() == 2);
}

TEST_CASE("uniform entropy equals log of the size") {
  for (std::size_t n : {2u, 6u, 16u, 64u}) {
    CHECK(entropy(ProbVector::uniform(n)) ==
          doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-12));
  }
}

TEST_CASE("surprisal anchors: a die roll and a 32000-token vocabulary") {
  // -log(1/6) for one fair die outcome, and log(1/32000) for one uniform
  // token over a 32000-entry vocabulary.
  CHECK(std::abs(-std::log(1.0 / 6.0) - 1.79) < 0.01);
  CHECK(std::abs(std::log(1.0 / 32000.0) - (-10.37)) < 0.01);
  ProbVector die = ProbVector::uniform(6);
  CHECK(entropy(die) == doctest::Approx(1.791759469228055).epsilon(1e-12));
}

TEST_CASE("zero-probability entries contribute nothing to entropy") {
  ProbVector p = ProbVector::validated({0.5, 0.5, 0.0});
  CHECK(entropy(p) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy is entropy plus KL and never smaller than entropy") {
  RngState rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    ProbVector p = random_dist(rng, 8);
    ProbVector q = random_dist(rng, 8);
    double h = entropy(p);
    double ce = cross_entropy(p, q);
    double kl = kl_divergence(p, q);
    CHECK(ce >= h - 1e-12);            // Gibbs
    CHECK(kl >= -1e-12);               // nonnegativity
    CHECK(ce == doctest::Approx(h + kl).epsilon(1e-9));
  }
}

TEST_CASE("KL of a distribution with itself is zero") {
  RngState rng(13);
  ProbVector p = random_dist(rng, 10);
  CHECK(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("zero mass under q where p has mass returns the +inf sentinel") {
  ProbVector p = ProbVector::validated({0.5, 0.5});
  ProbVector q = ProbVector::validated({1.0, 0.0});
  CHECK(std::isinf(cross_entropy(p, q)));
  CHECK(cross_entropy(p, q) > 0);
  CHECK(std::isinf(kl_divergence(p, q)));
  // The reverse direction is finite: q's zero matches p's positive mass
  // only through the 0 log 0 = 0 convention.
  CHECK(std::isfinite(kl_divergence(q, p)));
}

TEST_CASE("sigmoid and softplus stay finite and consistent at extremes") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(sigmoid(1000.0) == doctest::Approx(1.0));
  CHECK(sigmoid(-1000.0) == doctest::Approx(0.0));
  CHECK(std::isfinite(softplus(1000.0)));
  CHECK(softplus(1000.0) == doctest::Approx(1000.0).epsilon(1e-12));
  CHECK(softplus(-1000.0) == doctest::Approx(0.0));
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // -log sigmoid(x) == softplus(-x) in the stable regime.
  for (double x : {-30.0, -3.0, 0.0, 3.0, 30.0}) {
    CHECK(-std::log(sigmoid(x)) == doctest::Approx(softplus(-x)).epsilon(1e-9));
  }
}

TEST_CASE("importance estimate recovers exact expectations from off-distribution samples") {
  // Samples listed with their proposal probabilities; the weighted mean
  // must equal sum_i p_i v_i when empirical frequencies match q exactly.
  std::vector<double> values = {2.0, 2.0, 2.0, 5.0};   // three q=3/4 draws, one q=1/4 draw
  std::vector<double> p = {0.5, 0.5, 0.5, 0.5};
  std::vector<double> q = {0.75, 0.75, 0.75, 0.25};
  double est = importance_estimate(values, p, q);
  CHECK(est == doctest::Approx(0.5 * 2.0 + 0.5 * 5.0).epsilon(1e-12));
}

TEST_CASE("importance estimate validates proposal support") {
  std::vector<double> v = {1.0};
  std::vector<double> p = {0.5};
  std::vector<double> q = {0.0};
  CHECK_THROWS_AS(importance_estimate(v, p, q), InvalidInputError);
}

TEST_CASE("categorical sampling follows the distribution") {
  ProbVector p = ProbVector::validated({0.1, 0.6, 0.3});
  RngState rng(77);
  std::vector<int> counts(3, 0);
  const int n = 30000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(categorical_sample(p, rng))];
  for (std::size_t i = 0; i < 3; ++i) {
    double freq = static_cast<double>(counts[i]) / n;
    CHECK(std::abs(freq - p[i]) < 0.01);
  }
}

TEST_CASE("categorical sampling never lands on zero-probability entries") {
  ProbVector p = ProbVector::validated({0.0, 1.0, 0.0});
  RngState rng(5);
  for (int i = 0; i < 200; ++i) CHECK(categorical_sample(p, rng) == 1);
}

TEST_CASE("central differences nail a quadratic and its metric is scale-aware") {
  auto f = [](const std::vector<double>& x) {
    return 3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + x[1];
  };
  std::vector<double> at = {1.5, -2.0};
  std::vector<double> fd = fd_gradient(f, at);
  std::vector<double> analytic = {6.0 * at[0] + 2.0 * at[1], 2.0 * at[0] + 1.0};
  CHECK(fd_relative_error(analytic, fd) < 1e-9);

  std::vector<double> big = {1e6, 1e6 + 50.0};
  CHECK(fd_relative_error(big, std::vector<double>{1e6, 1e6}) ==
        doctest::Approx(50.0 / (1e6 + 50.0)).epsilon(1e-9));
}

TEST_CASE("fd gradient reports the broken coordinate on non-finite loss") {
  auto f = [](const std::vector<double>& x) { return x[0] > 1.0 ? std::nan("") : x[0]; };
  std::vector<double> at = {2.0};
  CHECK_THROWS_AS(fd_gradient(f, at), NumericalError);
}

TEST_CASE("all_finite flags NaN and infinities") {
  CHECK(all_finite(std::vector<double>{1.0, -2.0, 0.0}));
  CHECK_FALSE(all_finite(std::vector<double>{1.0, std::nan("")}));
  CHECK_FALSE(all_finite(std::vector<double>{std::numeric_limits<double>::infinity()}));
}

}  // TEST_SUITE
