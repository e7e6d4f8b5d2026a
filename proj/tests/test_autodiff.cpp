#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "mtb/error.hpp"
#include "mtb/gradcheck.hpp"
#include "mtb/ops.hpp"

using namespace mtb;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor::from(std::move(shape), std::move(v));
}

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("matmul matches the definition of the matrix product") {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(vec(ops::matmul(eye, m)) == std::vector<double>{1, 2, 3, 4});

  // Hand-evaluated: [1*5+2*7, 1*6+2*8; 3*5+4*7, 3*6+4*8].
  auto n = Tensor::from({2, 2}, {5, 6, 7, 8});
  CHECK(vec(ops::matmul(m, n)) == std::vector<double>{19, 22, 43, 50});

  auto z = Tensor::zeros({3, 2});
  auto r = ops::matmul(z, m);
  CHECK(r.shape() == Shape{3, 2});
  for (double v : r.values()) CHECK(v == 0.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({4, 5});
  try {
    ops::matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x5]") != std::string::npos);
  }
}

TEST_CASE("layer_norm examples") {
  auto g = Tensor::full({3}, 1.0);
  auto b = Tensor::zeros({3});
  auto c = ops::layer_norm(Tensor::from({1, 3}, {5, 5, 5}), g, b, 1e-5);
  for (double v : c.values()) CHECK(v == 0.0);

  auto beta = Tensor::from({3}, {0.5, -1.0, 2.0});
  auto shifted = ops::layer_norm(Tensor::from({1, 3}, {3, -7, 11}), Tensor::zeros({3}), beta, 1e-5);
  CHECK(vec(shifted) == vec(beta));

  // Direct formula: mean 2, population variance 2/3.
  auto y = ops::layer_norm(Tensor::from({1, 3}, {1, 2, 3}), g, b, 1e-5);
  const double s = std::sqrt(2.0 / 3.0 + 1e-5);
  CHECK(y.at(0) == doctest::Approx(-1.0 / s).epsilon(1e-12));
  CHECK(y.at(1) == doctest::Approx(0.0));
  CHECK(y.at(2) == doctest::Approx(1.0 / s).epsilon(1e-12));
  CHECK(y.at(2) == doctest::Approx(1.2247).epsilon(1e-4));
}

TEST_CASE("layer_norm rows are standardised") {
  Rng rng(11);
  auto x = random_tensor({20, 16}, rng, 3.0);
  auto y = ops::layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}), 1e-15);
  for (std::size_t r = 0; r < 20; ++r) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 16; ++j) mu += y.at(r * 16 + j);
    mu /= 16;
    for (std::size_t j = 0; j < 16; ++j) var += (y.at(r * 16 + j) - mu) * (y.at(r * 16 + j) - mu);
    var /= 16;
    CHECK(std::abs(mu) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("softmax examples and invariants") {
  auto h = ops::softmax(Tensor::from({2}, {0, 0}));
  CHECK(vec(h) == std::vector<double>{0.5, 0.5});

  auto base = ops::softmax(Tensor::from({3}, {1, 2, 3}));
  auto shifted = ops::softmax(Tensor::from({3}, {1001, 1002, 1003}));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(base.at(i) == doctest::Approx(std::exp(double(i + 1)) / z).epsilon(1e-14));
    CHECK(shifted.at(i) == doctest::Approx(base.at(i)).epsilon(1e-12));
  }
  CHECK(base.at(0) == doctest::Approx(0.0900).epsilon(1e-3));
  CHECK(base.at(2) == doctest::Approx(0.6652).epsilon(1e-4));

  Rng rng(3);
  auto x = random_tensor({50, 7}, rng, 5.0);
  auto y = ops::softmax(x);
  for (std::size_t r = 0; r < 50; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      const double p = y.at(r * 7 + j);
      CHECK(p > 0.0);
      CHECK(p < 1.0);
      s += p;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("dropout modes") {
  Rng rng(5);
  auto x = random_tensor({4, 4}, rng);
  CHECK(vec(ops::dropout(x, 0.0, true, rng)) == vec(x));
  CHECK(vec(ops::dropout(x, 0.9, false, rng)) == vec(x));
  CHECK_THROWS_AS(ops::dropout(x, 1.0, true, rng), ConfigError);
  CHECK_THROWS_AS(ops::dropout(x, -0.1, false, rng), ConfigError);

  const std::size_t n = 1000000;
  auto ones = Tensor::full({n}, 1.0);
  auto d = ops::dropout(ones, 0.5, true, rng);
  const double mean = std::accumulate(d.values().begin(), d.values().end(), 0.0) / n;
  CHECK(std::abs(mean - 1.0) < 0.01);
  for (std::size_t i = 0; i < 1000; ++i) CHECK((d.at(i) == 0.0 || d.at(i) == 2.0));
}

TEST_CASE("dropout is reproducible from the same stream") {
  Rng a(42), b(42);
  auto x = Tensor::full({100}, 1.0);
  CHECK(vec(ops::dropout(x, 0.3, true, a)) == vec(ops::dropout(x, 0.3, true, b)));
}

TEST_CASE("backward basics") {
  auto x = Tensor::from({4}, {1, -2, 3, 0.5}, true);
  ops::sum(x).backward();
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, 1, 1, 1});

  auto y = Tensor::from({3}, {1, -2, 3}, true);
  ops::sum(ops::mul(y, y)).backward();
  CHECK(std::vector<double>(y.grad().begin(), y.grad().end()) == std::vector<double>{2, -4, 6});

  // Repeated calls accumulate.
  ops::sum(ops::mul(y, y)).backward();
  CHECK(y.grad()[0] == 4.0);
  y.zero_grad();
  CHECK(y.grad().empty());

  CHECK_THROWS_AS(ops::scale(y, 2.0).backward(), ContractError);
}

TEST_CASE("fan-out gradients add across branches") {
  Rng rng(9);
  auto w1 = random_tensor({3, 3}, rng);
  auto w2 = random_tensor({3, 3}, rng);
  auto x = Tensor::from({1, 3}, {0.3, -0.7, 1.1}, true);
  auto branch1 = [&](const Tensor& in) { return ops::sum(ops::gelu(ops::matmul(in, w1))); };
  auto branch2 = [&](const Tensor& in) { return ops::sum(ops::sigmoid(ops::matmul(in, w2))); };

  ops::add(branch1(x), branch2(x)).backward();
  std::vector<double> both(x.grad().begin(), x.grad().end());
  x.zero_grad();
  branch1(x).backward();
  std::vector<double> g1(x.grad().begin(), x.grad().end());
  x.zero_grad();
  branch2(x).backward();
  for (std::size_t i = 0; i < 3; ++i) CHECK(both[i] == doctest::Approx(g1[i] + x.grad()[i]).epsilon(1e-14));
}

TEST_CASE("finite_diff_check examples") {
  Rng rng(1);
  auto w = random_tensor({4, 3}, rng);
  auto x = random_tensor({2, 4}, rng);
  auto linear = [&](const Tensor& in) { return ops::sum(ops::matmul(in, w)); };
  CHECK(finite_diff_check(linear, x).max_rel_error < 1e-8);

  auto sm = [&](const Tensor& in) {
    auto weights = Tensor::from({2, 3}, {0.1, -0.4, 0.9, 0.3, 0.2, -0.5});
    return ops::sum(ops::mul(ops::softmax(ops::matmul(in, w)), weights));
  };
  CHECK(finite_diff_check(sm, x).max_rel_error < 1e-3);

  auto constant = [](const Tensor&) { return Tensor::scalar(3.0); };
  CHECK(finite_diff_check(constant, x).max_rel_error == 0.0);
}

// Ten random inputs per primitive; each reduced to a scalar through a fixed
// random projection so every output coordinate matters.
TEST_CASE("every primitive passes the finite-difference check") {
  Rng rng(2024);
  auto project = [](const Tensor& y, std::uint64_t seed) {
    Rng r(seed);
    std::vector<double> w(y.numel());
    for (auto& v : w) v = r.normal();
    return ops::sum(ops::mul(y, Tensor::from(y.shape(), std::move(w))));
  };
  struct Case {
    const char* name;
    Shape shape;
    std::function<Tensor(const Tensor&)> f;
  };
  auto other = random_tensor({3, 4}, rng);
  auto right = random_tensor({4, 5}, rng);
  auto bias = random_tensor({4}, rng);
  auto gamma = random_tensor({4}, rng);
  auto beta = random_tensor({4}, rng);
  auto batch_b = random_tensor({2, 4, 3}, rng);
  auto batch_a = random_tensor({2, 3, 4}, rng);
  std::vector<Case> cases = {
      {"matmul_left", {3, 4}, [&](const Tensor& x) { return ops::matmul(x, right); }},
      {"matmul_right", {4, 5}, [&](const Tensor& x) { return ops::matmul(other, x); }},
      {"bmm", {2, 3, 4}, [&](const Tensor& x) { return ops::bmm(x, batch_b); }},
      {"bmm_right", {2, 4, 3}, [&](const Tensor& x) { return ops::bmm(batch_a, x); }},
      {"bmm_transposed", {2, 3, 4}, [&](const Tensor& x) { return ops::bmm(x, x, true); }},
      {"add", {3, 4}, [&](const Tensor& x) { return ops::add(x, other); }},
      {"add_bias", {4}, [&](const Tensor& x) { return ops::add(other, x); }},
      {"sub", {3, 4}, [&](const Tensor& x) { return ops::sub(other, x); }},
      {"mul", {3, 4}, [&](const Tensor& x) { return ops::mul(x, ops::add(x, other)); }},
      {"scale", {3, 4}, [](const Tensor& x) { return ops::scale(x, -2.5); }},
      {"concat", {3, 4}, [&](const Tensor& x) { return ops::concat({x, other, ops::square(x)}); }},
      {"abs_diff", {3, 4}, [&](const Tensor& x) { return ops::abs_diff(x, other); }},
      {"gelu", {3, 4}, [](const Tensor& x) { return ops::gelu(x); }},
      {"relu", {3, 4}, [](const Tensor& x) { return ops::relu(x); }},
      {"sigmoid", {3, 4}, [](const Tensor& x) { return ops::sigmoid(x); }},
      {"softmax", {3, 4}, [](const Tensor& x) { return ops::softmax(x); }},
      {"layer_norm_x", {3, 4}, [&](const Tensor& x) { return ops::layer_norm(x, gamma, beta, 1e-5); }},
      {"layer_norm_gamma", {4}, [&](const Tensor& x) { return ops::layer_norm(other, x, beta, 1e-5); }},
      {"layer_norm_beta", {4}, [&](const Tensor& x) { return ops::layer_norm(other, gamma, x, 1e-5); }},
      {"dropout_frozen", {3, 4}, [](const Tensor& x) { Rng r(77); return ops::dropout(x, 0.4, true, r); }},
      {"mean", {3, 4}, [](const Tensor& x) { return ops::mean(x); }},
      {"sum", {3, 4}, [](const Tensor& x) { return ops::sum(x); }},
      {"square", {3, 4}, [](const Tensor& x) { return ops::square(x); }},
      {"log", {3, 4}, [](const Tensor& x) { return ops::log(ops::add_scalar(ops::square(x), 0.5)); }},
      {"mean_rows", {3, 4}, [](const Tensor& x) { return ops::mean_rows(x); }},
      {"reshape", {3, 4}, [](const Tensor& x) { return ops::reshape(x, {2, 6}); }},
      {"permute", {2, 3, 4}, [](const Tensor& x) { return ops::permute(x, {2, 0, 1}); }},
      {"gather_rows", {4, 3}, [](const Tensor& x) { return ops::gather_rows(x, {3, 0, 3, 1}); }},
      {"select", {2, 3, 4}, [](const Tensor& x) { return ops::select(x, 1, 2); }},
  };
  for (auto& c : cases) {
    for (int trial = 0; trial < 10; ++trial) {
      auto x = random_tensor(c.shape, rng);
      const auto seed = static_cast<std::uint64_t>(trial) + 100;
      auto res = finite_diff_check([&](const Tensor& in) { return project(c.f(in), seed); }, x, 1e-4);
      INFO(c.name << " trial " << trial << " analytic " << res.analytic << " numeric " << res.numeric);
      CHECK(res.max_rel_error < 1e-3);
    }
  }
}

TEST_CASE("structural ops") {
  auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(vec(ops::permute(x, {1, 0})) == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK(vec(ops::select(x, 0, 1)) == std::vector<double>{4, 5, 6});
  CHECK(vec(ops::select(x, 1, 0)) == std::vector<double>{1, 4});
  CHECK(vec(ops::concat({x, x})) == std::vector<double>{1, 2, 3, 1, 2, 3, 4, 5, 6, 4, 5, 6});
  CHECK(vec(ops::mean_rows(x)) == std::vector<double>{2.5, 3.5, 4.5});
  CHECK_THROWS_AS(ops::gather_rows(x, {2}), DataError);
  CHECK_THROWS_AS(ops::reshape(x, {4}), DimensionError);
  CHECK_THROWS_AS(ops::add(x, Tensor::zeros({2})), DimensionError);
  CHECK(ops::log(Tensor::scalar(0.0)).item() == doctest::Approx(std::log(ops::kLogFloor)));
}

TEST_CASE("detach cuts the graph") {
  auto x = Tensor::from({2}, {1, 2}, true);
  auto y = ops::scale(x, 3.0).detach();
  CHECK_FALSE(y.requires_grad());
  auto loss = ops::sum(ops::mul(y, x));
  loss.backward();
  CHECK(x.grad()[0] == 3.0);
  CHECK(x.grad()[1] == 6.0);
}
