#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mtb/error.hpp"
#include "mtb/rng.hpp"
#include "mtb/stats.hpp"
#include "oracles.hpp"

using namespace mtb;

TEST_CASE("accuracy examples") {
  CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(accuracy({0, 0}, {1, 1}) == 0.0);
  CHECK(accuracy({1, 1, 0, 1}, {1, 1, 1, 1}) == 0.75);
  CHECK_THROWS_AS(accuracy({}, {}), DataError);
  CHECK_THROWS_AS(accuracy({1}, {1, 2}), DataError);
}

TEST_CASE("pearson examples") {
  std::vector<double> x{1, 2, 3, 4};
  CHECK(pearson(x, x) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<double> y;
  for (double v : x) y.push_back(-2 * v + 7);
  CHECK(pearson(x, y) == doctest::Approx(-1.0).epsilon(1e-15));
  // cov = 1.0, var = 1.25 each
  CHECK(pearson(x, {1, 3, 2, 4}) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK_THROWS_AS(pearson(x, {2, 2, 2, 2}), DataError);
  CHECK_THROWS_AS(pearson({1}, {1}), DataError);
}

TEST_CASE("accuracy and pearson agree with brute-force formulas") {
  Rng rng(11);
  for (int c = 0; c < 20; ++c) {
    const std::size_t n = 5 + rng.below(50);
    std::vector<int> p(n), y(n);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(4));
      y[i] = static_cast<int>(rng.below(4));
      a[i] = rng.normal();
      b[i] = 0.5 * a[i] + rng.normal();
    }
    CHECK(std::abs(accuracy(p, y) - oracle::accuracy(p, y)) < 1e-10);
    CHECK(std::abs(pearson(a, b) - oracle::pearson(a, b)) < 1e-10);
  }
}

TEST_CASE("pearson is invariant under positive affine maps") {
  Rng rng(3);
  std::vector<double> x(30), y(30);
  for (std::size_t i = 0; i < 30; ++i) {
    x[i] = rng.normal();
    y[i] = x[i] + rng.normal();
  }
  const double r = pearson(x, y);
  for (int k = 0; k < 10; ++k) {
    const double s = 0.1 + 10 * rng.uniform(), t = 20 * rng.normal();
    std::vector<double> x2;
    for (double v : x) x2.push_back(s * v + t);
    CHECK(std::abs(pearson(x2, y) - r) < 1e-12);
    CHECK(std::abs(pearson(y, x2) - r) < 1e-12);
  }
}

TEST_CASE("t-test special cases") {
  std::vector<double> a{0.50, 0.52, 0.49, 0.51};
  CHECK(one_tailed_t_test(a, a) == 0.5);
  CHECK(one_tailed_t_test(a, a, true) == 0.5);
  CHECK(one_tailed_t_test({0.9, 0.9001, 0.8999}, {0.1, 0.1001, 0.0999}) < 1e-3);
  CHECK(one_tailed_t_test({0.1, 0.1001, 0.0999}, {0.9, 0.9001, 0.8999}) > 1 - 1e-3);
  // Both constant.
  CHECK(one_tailed_t_test({1, 1}, {1, 1}) == 0.5);
  CHECK(one_tailed_t_test({2, 2}, {1, 1}) == 0.0);
  CHECK(one_tailed_t_test({1, 1}, {2, 2}) == 1.0);
  CHECK_THROWS_AS(one_tailed_t_test({1}, {1, 2}), DataError);
}

TEST_CASE("t-test small example against the closed-form df=2 tail") {
  // Welch: t = 0.1 / sqrt(0.005/2 + 0.005/2) = sqrt(2), df = 2.
  // For df = 2 the upper tail is 1/2 - t / (2 sqrt(2 + t^2)).
  auto r = t_test({0.5, 0.6}, {0.4, 0.5});
  CHECK(r.t == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(r.df == doctest::Approx(2.0).epsilon(1e-12));
  const double t = std::sqrt(2.0);
  CHECK(r.p == doctest::Approx(0.5 - t / (2 * std::sqrt(2 + t * t))).epsilon(1e-10));
}

TEST_CASE("t-test complement identity") {
  Rng rng(5);
  for (int c = 0; c < 50; ++c) {
    std::vector<double> a(2 + rng.below(10)), b(2 + rng.below(10));
    for (auto& v : a) v = 0.5 + 0.1 * rng.normal();
    for (auto& v : b) v = 0.48 + 0.05 * rng.normal();
    CHECK(std::abs(one_tailed_t_test(a, b) + one_tailed_t_test(b, a) - 1.0) < 1e-10);
    CHECK(std::abs(one_tailed_t_test(a, b, true) + one_tailed_t_test(b, a, true) - 1.0) < 1e-10);
  }
}

TEST_CASE("pooled and Welch coincide for equal sizes and variances") {
  std::vector<double> a{1, 2, 3, 4}, b{0, 1, 2, 3};
  auto w = t_test(a, b), s = t_test(a, b, true);
  CHECK(w.t == doctest::Approx(s.t));
  CHECK(w.df == doctest::Approx(6.0));
  CHECK(w.p == doctest::Approx(s.p).epsilon(1e-12));
}

TEST_CASE("t-test agrees with a permutation oracle") {
  Rng rng(21);
  std::vector<double> a(12), b(12);
  for (auto& v : a) v = 0.52 + 0.03 * rng.normal();
  for (auto& v : b) v = 0.50 + 0.03 * rng.normal();
  const double p = one_tailed_t_test(a, b);
  const double perm = oracle::permutation_p(a, b, 200000, 1);
  CHECK(std::abs(p - perm) < 0.02);
}
