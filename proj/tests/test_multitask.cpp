#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mtb/error.hpp"
#include "mtb/gradcheck.hpp"
#include "mtb/multitask.hpp"
#include "mtb/ops.hpp"

using namespace mtb;

namespace {

struct Setup {
  TaskSplits splits;
  Vocab vocab;
};

Setup make_setup(std::size_t n) {
  auto c = generate_synthetic({n, n / 2, 4, 40});
  Setup s;
  s.splits = {c.sst_train, c.sst_dev, c.para_train, c.para_dev, c.sts_train, c.sts_dev};
  std::vector<std::string> texts;
  for (const auto* v : {&c.sst_train, &c.para_train, &c.sts_train})
    for (const auto& e : *v) {
      texts.push_back(e.text_a);
      if (e.text_b) texts.push_back(*e.text_b);
    }
  s.vocab = Vocab::build(texts);
  return s;
}

EncoderConfig small_encoder(std::size_t h, double dropout) {
  EncoderConfig e;
  e.hidden = h;
  e.layers = 2;
  e.heads = 2;
  e.ff_dim = 2 * h;
  e.max_seq_len = 24;
  e.dropout_p = dropout;
  return e;
}

HeadConfig small_heads(std::size_t h, StsMode mode, bool baseline, double dropout) {
  HeadConfig c;
  c.shared_dim = h;
  c.dense_dim = h;
  c.dropout_p = dropout;
  c.sts_mode = mode;
  c.baseline = baseline;
  return c;
}

}  // namespace

TEST_CASE("full multitask loss matches finite differences (H=8, 2 layers)") {
  auto s = make_setup(12);
  for (auto mode : {StsMode::sep_fused, StsMode::triplet}) {
    CAPTURE(to_string(mode));
    MultitaskModel m(small_encoder(8, 0.0), small_heads(8, mode, false, 0.0), s.vocab, 3);
    MultitaskBatch batch{{s.splits.sst_train.begin(), s.splits.sst_train.begin() + 3},
                         {s.splits.para_train.begin(), s.splits.para_train.begin() + 3},
                         {s.splits.sts_train.begin(), s.splits.sts_train.begin() + 3}};
    Rng perturb(5);
    std::vector<Tensor> wrt, key_bias;
    for (auto& e : m.params().entries()) {
      for (auto& v : e.tensor.mutable_values()) v += 0.3 * perturb.normal();
      (e.name.ends_with("attn.bk") ? key_bias : wrt).push_back(e.tensor);
    }
    auto loss = [&] {
      Rng r(0);
      auto l = m.losses(batch, r);
      return ops::add(ops::add(l.sst, l.para), l.sts);
    };
    auto res = finite_diff_check(loss, wrt, 1e-4);
    INFO("worst: ", m.params().entries()[res.worst_tensor].name, "[", res.worst_index, "] analytic=", res.analytic,
         " numeric=", res.numeric);
    CHECK(res.max_rel_error < 1e-3);
    m.params().zero_grad();
    loss().backward();
    for (const auto& kb : key_bias)
      for (double g : kb.grad()) CHECK(std::abs(g) < 1e-12);
  }
}

TEST_CASE("short training run in every mode") {
  auto s = make_setup(32);
  for (auto mode : {TrainMode::baseline, TrainMode::naive_sum, TrainMode::pcgrad_paired}) {
    CAPTURE(to_string(mode));
    const bool baseline = mode == TrainMode::baseline;
    MultitaskModel m(small_encoder(8, 0.1), small_heads(8, StsMode::sep_fused, baseline, 0.1), s.vocab, 1);
    MultitaskTrainConfig cfg;
    cfg.mode = mode;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    std::size_t seen = 0;
    auto hist = train_multitask(m, s.splits, cfg, [&](const EpochMetrics& e) {
      ++seen;
      CHECK(e.epoch == seen);
      return true;
    });
    REQUIRE(hist.size() == 2);
    for (const auto& e : hist) {
      CHECK(std::isfinite(e.mean_loss));
      for (const auto* t : {&e.train, &e.dev}) {
        CHECK(t->sst_accuracy >= 0.0);
        CHECK(t->sst_accuracy <= 1.0);
        CHECK(t->para_accuracy <= 1.0);
        CHECK(std::abs(t->sts_pearson) <= 1.0);
      }
    }
  }
}

TEST_CASE("training is deterministic and can stop early") {
  auto s = make_setup(24);
  auto run = [&](std::size_t stop_after) {
    MultitaskModel m(small_encoder(8, 0.1), small_heads(8, StsMode::triplet, false, 0.1), s.vocab, 2);
    MultitaskTrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 9;
    return train_multitask(m, s.splits, cfg, [&](const EpochMetrics& e) { return e.epoch < stop_after; });
  };
  auto a = run(10), b = run(10);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i].mean_loss == b[i].mean_loss);
    CHECK(a[i].dev.sts_pearson == b[i].dev.sts_pearson);
  }
  CHECK(run(1).size() == 1);
}

TEST_CASE("mode and head configuration must agree") {
  auto s = make_setup(8);
  MultitaskModel full(small_encoder(8, 0.0), small_heads(8, StsMode::sep_fused, false, 0.0), s.vocab, 0);
  MultitaskTrainConfig cfg;
  cfg.mode = TrainMode::baseline;
  CHECK_THROWS_AS(train_multitask(full, s.splits, cfg), ConfigError);
  cfg.mode = TrainMode::naive_sum;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train_multitask(full, s.splits, cfg), ConfigError);
  CHECK_THROWS_AS(parse_train_mode("sum"), ConfigError);
  CHECK(parse_train_mode("pcgrad-paired") == TrainMode::pcgrad_paired);
  CHECK(to_string(TrainMode::naive_sum) == "naive-sum");
}

TEST_CASE("triplet features come from one batched encode") {
  auto s = make_setup(8);
  MultitaskModel m(small_encoder(8, 0.0), small_heads(8, StsMode::triplet, false, 0.0), s.vocab, 0);
  Rng r(0);
  auto t = m.triplet({"pos0 w1", "w2 w3"}, {"w1 w2", "w2 w3"}, false, r);
  auto u = m.sentence_cls({"pos0 w1", "w2 w3"}, false, r);
  CHECK(std::equal(t.u.values().begin(), t.u.values().end(), u.values().begin()));
  // Identical second pair: |U - V| row is zero.
  auto d = t.absdiff.values();
  for (std::size_t c = 0; c < 8; ++c) CHECK(d[8 + c] == 0.0);
}
