#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "mtb/error.hpp"
#include "mtb/gradcheck.hpp"
#include "mtb/heads.hpp"
#include "mtb/ops.hpp"

using namespace mtb;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor::from(std::move(shape), std::move(v));
}

HeadConfig config(std::size_t h, StsMode mode = StsMode::sep_fused, bool baseline = false) {
  HeadConfig c;
  c.hidden = h;
  c.shared_dim = h;
  c.dense_dim = h;
  c.dropout_p = 0.1;
  c.sts_mode = mode;
  c.baseline = baseline;
  return c;
}

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("shared block: zeros in, zeros out, shape, eval determinism") {
  ParamStore store;
  Rng init(1), rng(2);
  MultitaskHeads heads(config(6), store, init);
  auto z = heads.shared_block(Tensor::zeros({3, 6}), false, rng);
  CHECK(z.shape() == Shape{3, 6});
  for (double v : z.values()) CHECK(v == 0.0);

  auto x = random_tensor({4, 6}, rng);
  CHECK(vec(heads.shared_block(x, false, rng)) == vec(heads.shared_block(x, false, rng)));
}

TEST_CASE("head output shapes and ranges") {
  ParamStore store;
  Rng init(1), rng(2);
  MultitaskHeads heads(config(8), store, init);
  auto u = random_tensor({5, 8}, rng), v = random_tensor({5, 8}, rng);
  CHECK(heads.sentiment(u, false, rng).shape() == Shape{5, 5});
  auto p = heads.paraphrase(TripletFeatures::from(u, v), false, rng);
  CHECK(p.shape() == Shape{5});
  for (double x : p.values()) CHECK((x > 0.0 && x < 1.0));
  CHECK(heads.similarity(u, false, rng).shape() == Shape{5});

  auto cls = argmax_rows(heads.sentiment(u, false, rng));
  for (int c : cls) CHECK((c >= 0 && c < 5));
}

TEST_CASE("baseline heads are single linear layers on [CLS]") {
  ParamStore store;
  Rng init(1), rng(2);
  MultitaskHeads heads(config(8, StsMode::sep_fused, true), store, init);
  std::set<std::string> names;
  for (const auto& e : store.entries()) names.insert(e.name);
  CHECK(names == std::set<std::string>{"heads.sst.out.w", "heads.sst.out.b", "heads.para.out.w", "heads.para.out.b",
                                       "heads.sts.out.w", "heads.sts.out.b"});
  auto x = random_tensor({3, 8}, rng);
  auto logits = heads.sentiment(x, false, rng);
  auto expect = ops::add(ops::matmul(x, store.get("heads.sst.out.w")), store.get("heads.sst.out.b"));
  CHECK(vec(logits) == vec(expect));
  CHECK(heads.paraphrase_baseline(x).shape() == Shape{3});
  CHECK(heads.similarity(x, false, rng).shape() == Shape{3});
  CHECK_THROWS_AS(heads.shared_block(x, false, rng), ContractError);
}

TEST_CASE("sts mode and input mismatches are contract errors") {
  ParamStore s1, s2;
  Rng init(1), rng(2);
  MultitaskHeads fused(config(4, StsMode::sep_fused), s1, init);
  MultitaskHeads triplet(config(4, StsMode::triplet), s2, init);
  auto u = random_tensor({2, 4}, rng), v = random_tensor({2, 4}, rng);
  CHECK_THROWS_AS(fused.similarity(TripletFeatures::from(u, v), false, rng), ContractError);
  CHECK_THROWS_AS(triplet.similarity(u, false, rng), ContractError);
  CHECK(triplet.similarity(TripletFeatures::from(u, v), false, rng).shape() == Shape{2});
  CHECK_THROWS_AS(parse_sts_mode("both"), ConfigError);
}

TEST_CASE("U == V makes the |U-V| branch an exact zero vector") {
  Rng rng(3);
  auto u = random_tensor({4, 5}, rng);
  auto t = TripletFeatures::from(u, u);
  for (double x : t.absdiff.values()) CHECK(x == 0.0);
}

TEST_CASE("|U-V| is symmetric over 100 random pairs") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    auto u = random_tensor({3, 7}, rng), v = random_tensor({3, 7}, rng);
    CHECK(vec(TripletFeatures::from(u, v).absdiff) == vec(TripletFeatures::from(v, u).absdiff));
  }
}

TEST_CASE("sentiment and fused STS share the same shared-block parameters") {
  ParamStore store;
  Rng init(1), rng(2);
  MultitaskHeads heads(config(6), store, init);
  auto x = random_tensor({3, 6}, rng);
  auto shared = store.in_group("shared");
  REQUIRE(shared.size() == 6);

  auto touched = [&](const Tensor& loss) {
    store.zero_grad();
    loss.backward();
    std::set<std::uint64_t> ids;
    for (const auto& p : shared) {
      bool any = false;
      for (double g : p.grad()) any = any || g != 0.0;
      if (any) ids.insert(p.id());
    }
    return ids;
  };
  auto from_sst = touched(ops::sum(heads.sentiment(x, false, rng)));
  auto from_sts = touched(ops::sum(heads.similarity(x, false, rng)));
  CHECK(from_sst.size() == shared.size());
  CHECK(from_sst == from_sts);
}

TEST_CASE("loss examples") {
  // Uniform 5-class prediction.
  auto ce = cross_entropy(Tensor::zeros({4, 5}), {0, 1, 2, 4});
  CHECK(std::abs(ce.item() - std::log(5.0)) < 1e-9);

  // Near one-hot prediction.
  auto sharp = Tensor::from({1, 5}, {60, 0, 0, 0, 0});
  CHECK(cross_entropy(sharp, {0}).item() < 1e-6);

  auto half = Tensor::full({3}, 0.5);
  CHECK(std::abs(binary_cross_entropy(half, {0, 1, 1}).item() - std::log(2.0)) < 1e-12);

  CHECK(mean_squared_error(Tensor::from({1}, {3.0}), {5.0}).item() == doctest::Approx(4.0));
  auto b = task_losses(Tensor::zeros({1, 5}), {2}, half, {1, 0, 1}, Tensor::from({1}, {3.0}), {5.0});
  CHECK(b.sst.item() >= 0.0);
  CHECK(b.para.item() >= 0.0);
  CHECK(b.sts.item() == doctest::Approx(4.0));
}

TEST_CASE("out-of-range labels name the row") {
  auto expect_row = [](auto&& fn, const char* row) {
    try {
      fn();
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(row) != std::string::npos);
    }
  };
  expect_row([] { cross_entropy(Tensor::zeros({2, 5}), {0, 5}); }, "row 1");
  expect_row([] { binary_cross_entropy(Tensor::full({2}, 0.5), {2.0, 1.0}); }, "row 0");
  expect_row([] { mean_squared_error(Tensor::zeros({3}), {1.0, 2.0, 5.5}); }, "row 2");
}

TEST_CASE("gradients through every head match finite differences") {
  for (auto mode : {StsMode::sep_fused, StsMode::triplet}) {
    ParamStore store;
    Rng init(5), rng(6);
    MultitaskHeads heads(config(5, mode), store, init);
    // Generic point: tiny inits leave many ReLUs near their kink.
    for (auto& e : store.entries())
      for (auto& v : e.tensor.mutable_values()) v += 0.4 * rng.normal();
    auto u = random_tensor({4, 5}, rng), v = random_tensor({4, 5}, rng);
    u.set_requires_grad(true);
    v.set_requires_grad(true);

    auto loss = [&] {
      Rng eval(0);
      auto t = TripletFeatures::from(u, v);
      auto sst = cross_entropy(heads.sentiment(u, false, eval), {0, 1, 3, 4});
      auto para = binary_cross_entropy(heads.paraphrase(t, false, eval), {0, 1, 1, 0});
      auto sts_score = mode == StsMode::sep_fused ? heads.similarity(u, false, eval) : heads.similarity(t, false, eval);
      auto sts = mean_squared_error(sts_score, {0.5, 2.0, 4.5, 3.0});
      return ops::add(ops::add(sst, para), sts);
    };
    std::vector<Tensor> wrt{u, v};
    for (const auto& e : store.entries()) wrt.push_back(e.tensor);
    auto r = finite_diff_check(loss, wrt, 1e-4);
    INFO(to_string(mode), " worst: ", r.worst_tensor, "[", r.worst_index, "] analytic=", r.analytic,
         " numeric=", r.numeric);
    CHECK(r.max_rel_error < 1e-3);
  }
}
