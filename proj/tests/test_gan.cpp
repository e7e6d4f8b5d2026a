#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mtb/error.hpp"
#include "mtb/gan.hpp"
#include "mtb/gradcheck.hpp"

using namespace mtb;

namespace {

// Logit rows putting +1000 on `hot` and -1000 elsewhere; softmax gives an exact one-hot.
Tensor peaked(const std::vector<std::size_t>& hot, std::size_t cols) {
  std::vector<double> v(hot.size() * cols, -1000.0);
  for (std::size_t r = 0; r < hot.size(); ++r) v[r * cols + hot[r]] = 1000.0;
  return Tensor::from({hot.size(), cols}, v);
}

std::vector<double> snapshot(const ParamStore& s, const std::string& group) {
  std::vector<double> out;
  for (const auto& e : s.entries())
    if (e.group == group) out.insert(out.end(), e.tensor.values().begin(), e.tensor.values().end());
  return out;
}

bool any_grad(const ParamStore& s, const std::string& group) {
  for (const auto& e : s.entries()) {
    if (e.group != group) continue;
    for (double g : e.tensor.grad())
      if (g != 0.0) return true;
  }
  return false;
}

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.hidden = 8;
  c.layers = 1;
  c.heads = 2;
  c.ff_dim = 16;
  c.max_seq_len = 16;
  c.dropout_p = 0.1;
  return c;
}

GanConfig tiny_gan(bool conditional = true) {
  GanConfig g;
  g.noise_dim = 6;
  g.hidden_dim = 8;
  g.lr = 1e-3;
  g.conditional = conditional;
  g.epochs = 2;
  return g;
}

struct Toy {
  SyntheticCorpus corpus;
  Vocab vocab;
};

const Toy& toy() {
  static const Toy t = [] {
    Toy out;
    out.corpus = generate_synthetic({64, 32, 3, 40});
    std::vector<std::string> texts;
    for (const auto& e : out.corpus.sst_train) texts.push_back(e.text_a);
    out.vocab = Vocab::build(texts);
    return out;
  }();
  return t;
}

}  // namespace

TEST_CASE("discriminator loss: perfect discriminator is exactly zero") {
  const std::size_t c = 6;
  auto real = peaked({0, 3, 4}, c);
  auto fake = peaked({5, 5}, c);
  auto l = discriminator_loss(real, fake, {0, 3, std::nullopt});
  CHECK(l.supervised.item() == 0.0);
  CHECK(l.unsupervised.item() == 0.0);
  CHECK(l.total.item() == 0.0);
  CHECK(l.has_supervised);
}

TEST_CASE("discriminator loss: uniform predictions") {
  auto real = Tensor::zeros({4, 6}), fake = Tensor::zeros({3, 6});
  auto l = discriminator_loss(real, fake, {1, 2, 0, 4});
  CHECK(std::abs(l.supervised.item() - std::log(6.0)) < 1e-9);
  CHECK(std::abs(l.unsupervised.item() - (-std::log(5.0 / 6.0) - std::log(1.0 / 6.0))) < 1e-9);
  CHECK(std::abs(l.total.item() - (std::log(6.0) - std::log(5.0 / 6.0) - std::log(1.0 / 6.0))) < 1e-9);
}

TEST_CASE("discriminator loss: empty parts count as zero") {
  auto real = Tensor::zeros({2, 6});
  auto none = discriminator_loss(real, Tensor::zeros({0, 6}), {std::nullopt, std::nullopt});
  CHECK(!none.has_supervised);
  CHECK(none.supervised.item() == 0.0);
  CHECK(std::abs(none.unsupervised.item() + std::log(5.0 / 6.0)) < 1e-12);
  CHECK_THROWS_AS(discriminator_loss(real, Tensor::zeros({1, 6}), {5, 0}), DataError);
  CHECK_THROWS_AS(discriminator_loss(real, Tensor::zeros({1, 6}), {0}), DimensionError);
  CHECK_THROWS_AS(discriminator_loss(real, Tensor::zeros({1, 5}), {0, 0}), DimensionError);
}

TEST_CASE("discriminator and generator losses are non-negative") {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> r(18), f(12), fr(15), ff(10);
    for (auto* v : {&r, &f, &fr, &ff})
      for (auto& x : *v) x = 5 * rng.normal();
    auto d = discriminator_loss(Tensor::from({3, 6}, r), Tensor::from({2, 6}, f), {1, std::nullopt, 0});
    CHECK(d.total.item() >= 0.0);
    auto g = generator_loss(Tensor::from({3, 5}, fr), Tensor::from({2, 5}, ff), Tensor::from({2, 6}, f));
    CHECK(g.total.item() >= 0.0);
  }
}

TEST_CASE("generator loss examples") {
  auto feats = Tensor::from({2, 3}, {1, 2, 3, 3, 2, 1});
  auto shifted = Tensor::from({2, 3}, {2, 2, 3, 4, 2, 1});
  auto logits = Tensor::zeros({2, 2});  // p(fake) = 1/2
  auto same = generator_loss(feats, feats, logits);
  CHECK(same.feature_matching.item() == 0.0);
  CHECK(std::abs(same.unsupervised.item() - std::log(2.0)) < 1e-12);
  auto unit = generator_loss(feats, shifted, logits);
  CHECK(std::abs(unit.feature_matching.item() - 1.0) < 1e-12);
  // Fooled discriminator: p(fake) = 0.
  CHECK(generator_loss(feats, feats, peaked({0, 0}, 2)).unsupervised.item() == 0.0);
  CHECK_THROWS_AS(generator_loss(feats, Tensor::zeros({2, 4}), logits), DimensionError);
}

TEST_CASE("generator loss treats real features as constants") {
  auto real = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  auto fake = Tensor::from({2, 2}, {0, 1, 1, 0}, true);
  auto l = generator_loss(real, fake, Tensor::from({2, 3}, {0, 1, 2, 2, 1, 0}));
  l.total.backward();
  CHECK(real.grad().empty());
  CHECK(!fake.grad().empty());
}

TEST_CASE("gradients of both losses match finite differences") {
  Rng rng(8);
  std::vector<double> a(12), b(8);
  for (auto& x : a) x = rng.normal();
  for (auto& x : b) x = rng.normal();
  auto real = Tensor::from({2, 6}, a, true), fake = Tensor::from({2, 4}, std::vector<double>(b.begin(), b.end()), true);
  auto fake_logits = Tensor::from({2, 6}, std::vector<double>(a.rbegin(), a.rend()), true);
  auto d = finite_diff_check([&] { return discriminator_loss(real, fake_logits, {2, std::nullopt}).total; },
                             {real, fake_logits});
  CHECK(d.max_rel_error < 1e-6);
  auto real_f = Tensor::from({3, 4}, {1, 0, 2, 1, 0, 1, 1, 2, 3, 1, 0, 0});
  auto g = finite_diff_check([&] { return generator_loss(real_f, fake, fake_logits).total; }, {fake, fake_logits});
  CHECK(g.max_rel_error < 1e-6);
}

TEST_CASE("generator and discriminator shapes and label handling") {
  ParamStore store;
  Rng init(1);
  GanConfig cfg = tiny_gan();
  Generator gen(cfg, 8, store, init);
  Discriminator disc(cfg, 8, store, init);
  Rng rng(2);
  auto noise = Tensor::from({3, 6}, std::vector<double>(18, 0.3));
  auto fake = gen.forward(noise, {0, 1, 4});
  CHECK(fake.shape() == Shape{3, 8});
  auto out = disc.forward(fake, false, rng);
  CHECK(out.logits.shape() == Shape{3, 6});
  CHECK(out.feature.shape() == Shape{3, 8});
  // Same noise, different labels: conditional outputs differ row to row.
  auto v = fake.values();
  CHECK(!std::equal(v.begin(), v.begin() + 8, v.begin() + 8));
  CHECK_THROWS_AS(gen.forward(noise, {0, 1, 5}), ContractError);
  CHECK_THROWS_AS(gen.forward(noise, {0, 1}), DimensionError);
  CHECK_THROWS_AS(gen.forward(Tensor::zeros({3, 5}), {0, 1, 2}), DimensionError);
}

TEST_CASE("unconditional generator ignores labels") {
  ParamStore store;
  Rng init(1);
  Generator gen(tiny_gan(false), 8, store, init);
  Rng rng(3);
  std::vector<double> nv(12);
  for (auto& x : nv) x = rng.normal();
  auto noise = Tensor::from({2, 6}, nv);
  auto a = gen.forward(noise, {0, 1}), b = gen.forward(noise, {4, 2});
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST_CASE("gan config validation") {
  GanConfig bad = tiny_gan();
  bad.k = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_gan();
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_gan();
  bad.hidden_depth = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(GanModel(tiny_encoder(), tiny_gan(), toy().vocab, Task::sts, 0), ConfigError);
  GanConfig two = tiny_gan();
  two.k = 2;
  CHECK_THROWS_AS(GanModel(tiny_encoder(), two, toy().vocab, Task::sst, 0), ConfigError);
  CHECK_NOTHROW(GanModel(tiny_encoder(), two, toy().vocab, Task::para, 0));
}

TEST_CASE("train step routes updates to the right parameters") {
  const auto& t = toy();
  std::vector<Example> batch(t.corpus.sst_train.begin(), t.corpus.sst_train.begin() + 8);

  SUBCASE("generator-only learning rate leaves encoder and discriminator untouched") {
    GanModel m(tiny_encoder(), tiny_gan(), t.vocab, Task::sst, 5);
    auto enc = snapshot(m.params(), "encoder"), disc = snapshot(m.params(), "disc"), gen = snapshot(m.params(), "gen");
    GanOptimizers opt;
    opt.d.lr = 0.0;
    opt.g.lr = 1e-2;
    Rng rng(1);
    gan_train_step(m, batch, opt, rng, 0);
    CHECK(snapshot(m.params(), "encoder") == enc);
    CHECK(snapshot(m.params(), "disc") == disc);
    CHECK(snapshot(m.params(), "gen") != gen);
  }
  SUBCASE("discriminator-only learning rate leaves the generator untouched") {
    GanModel m(tiny_encoder(), tiny_gan(), t.vocab, Task::sst, 5);
    auto enc = snapshot(m.params(), "encoder"), disc = snapshot(m.params(), "disc"), gen = snapshot(m.params(), "gen");
    GanOptimizers opt;
    opt.d.lr = 1e-2;
    opt.g.lr = 0.0;
    Rng rng(1);
    gan_train_step(m, batch, opt, rng, 0);
    CHECK(snapshot(m.params(), "encoder") != enc);
    CHECK(snapshot(m.params(), "disc") != disc);
    CHECK(snapshot(m.params(), "gen") == gen);
  }
  SUBCASE("frozen encoder stays fixed") {
    GanModel m(tiny_encoder(), tiny_gan(), t.vocab, Task::sst, 5);
    auto enc = snapshot(m.params(), "encoder");
    GanOptimizers opt;
    opt.freeze_encoder = true;
    Rng rng(1);
    gan_train_step(m, batch, opt, rng, 0);
    CHECK(snapshot(m.params(), "encoder") == enc);
  }
}

TEST_CASE("loss gradients are isolated between generator and discriminator") {
  const auto& t = toy();
  std::vector<Example> batch(t.corpus.sst_train.begin(), t.corpus.sst_train.begin() + 6);
  GanModel m(tiny_encoder(), tiny_gan(), t.vocab, Task::sst, 2);
  Rng rng(9);
  std::vector<double> nv(6 * 6);
  for (auto& x : nv) x = rng.normal();
  auto fake = m.generator().forward(Tensor::from({6, 6}, nv), {0, 1, 2, 3, 4, 0});
  auto real = m.real_cls(batch, false, rng);
  std::vector<std::optional<int>> labels;
  for (const auto& e : batch) labels.push_back(static_cast<int>(*e.label));

  auto dl = discriminator_loss(m.discriminator().forward(real, false, rng).logits,
                               m.discriminator().forward(fake.detach(), false, rng).logits, labels);
  m.params().zero_grad();
  dl.total.backward();
  CHECK(any_grad(m.params(), "disc"));
  CHECK(any_grad(m.params(), "encoder"));
  CHECK(!any_grad(m.params(), "gen"));

  m.params().zero_grad();
  m.params().set_trainable("disc", false);
  m.params().set_trainable("encoder", false);
  auto gr = m.discriminator().forward(real.detach(), false, rng);
  auto gf = m.discriminator().forward(fake, false, rng);
  generator_loss(gr.feature, gf.feature, gf.logits).total.backward();
  m.params().set_trainable("disc", true);
  m.params().set_trainable("encoder", true);
  CHECK(any_grad(m.params(), "gen"));
  CHECK(!any_grad(m.params(), "disc"));
  CHECK(!any_grad(m.params(), "encoder"));
}

TEST_CASE("one discriminator step lowers the discriminator loss") {
  const auto& t = toy();
  std::vector<Example> batch(t.corpus.sst_train.begin(), t.corpus.sst_train.begin() + 16);
  GanModel m(tiny_encoder(), tiny_gan(), t.vocab, Task::sst, 7);
  Rng noise_rng(4);
  std::vector<double> nv(16 * 6);
  for (auto& x : nv) x = noise_rng.normal();
  const auto noise = Tensor::from({16, 6}, nv);
  std::vector<int> fl(16);
  for (std::size_t i = 0; i < 16; ++i) fl[i] = static_cast<int>(i % 5);
  std::vector<std::optional<int>> labels;
  for (const auto& e : batch) labels.push_back(static_cast<int>(*e.label));
  auto eval_loss = [&] {
    Rng r(0);
    auto real = m.real_cls(batch, false, r);
    auto fake = m.generator().forward(noise, fl).detach();
    return discriminator_loss(m.discriminator().forward(real, false, r).logits,
                              m.discriminator().forward(fake, false, r).logits, labels)
        .total.item();
  };
  const double before = eval_loss();
  GanOptimizers opt;
  opt.d.lr = 1e-3;
  opt.g.lr = 0.0;  // generator held fixed
  Rng rng(3);
  gan_train_step(m, batch, opt, rng, 0);
  CHECK(eval_loss() < before);
}

TEST_CASE("train_gan is deterministic and survives fully unlabeled data") {
  const auto& t = toy();
  auto run = [&](double lambda) {
    GanModel m(tiny_encoder(), tiny_gan(), t.vocab, Task::sst, 11);
    GanTrainConfig tc;
    tc.batch_size = 16;
    tc.seed = 11;
    return train_gan(m, mask_labels(t.corpus.sst_train, lambda, 1), t.corpus.sst_dev, tc);
  };
  auto a = run(0.3), b = run(0.3);
  REQUIRE(a.steps.size() == 2 * 4);
  REQUIRE(a.epochs.size() == 2);
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].step == i);
    CHECK(a.steps[i].d_sup == b.steps[i].d_sup);
    CHECK(a.steps[i].g_fm == b.steps[i].g_fm);
  }
  CHECK(a.epochs[1].dev_accuracy == b.epochs[1].dev_accuracy);

  auto all_unlabeled = run(1.0);
  for (const auto& s : all_unlabeled.steps) {
    CHECK(!s.supervised);
    CHECK(s.d_sup == 0.0);
    CHECK(std::isfinite(s.d_unsup));
  }
}

TEST_CASE("paraphrase GAN runs on pair encodings") {
  const auto& t = toy();
  std::vector<std::string> texts;
  for (const auto& e : t.corpus.para_train) {
    texts.push_back(e.text_a);
    texts.push_back(*e.text_b);
  }
  GanConfig cfg = tiny_gan();
  cfg.k = 2;
  cfg.epochs = 1;
  GanModel m(tiny_encoder(), cfg, Vocab::build(texts), Task::para, 1);
  GanTrainConfig tc;
  auto run = train_gan(m, t.corpus.para_train, t.corpus.para_dev, tc);
  CHECK(run.epochs.size() == 1);
  CHECK(run.epochs[0].dev_accuracy >= 0.0);
}

TEST_CASE("separation ratio and batch variance") {
  // Two tight clusters labelled by cluster: ratio far above 1.
  std::vector<double> v;
  std::vector<int> y;
  Rng rng(6);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 20; ++i) {
      v.push_back(10.0 * c + 0.1 * rng.normal());
      v.push_back(0.1 * rng.normal());
      y.push_back(c);
    }
  auto x = Tensor::from({40, 2}, v);
  CHECK(class_separation_ratio(x, y) > 10.0);
  // Labels unrelated to position: ratio near 1.
  std::vector<int> shuffled(40);
  for (std::size_t i = 0; i < 40; ++i) shuffled[i] = static_cast<int>(i % 2);
  CHECK(std::abs(class_separation_ratio(x, shuffled) - 1.0) < 0.1);
  CHECK_THROWS_AS(class_separation_ratio(x, std::vector<int>(40, 0)), DataError);
  CHECK_THROWS_AS(class_separation_ratio(x, std::vector<int>(3, 0)), DimensionError);

  CHECK(batch_variance(Tensor::from({2, 2}, {0, 0, 2, 4})) == doctest::Approx(5.0));
  CHECK(batch_variance(Tensor::from({3, 1}, {1, 1, 1})) == 0.0);
  CHECK_THROWS_AS(batch_variance(Tensor::zeros({1, 3})), DataError);

  GanModel m(tiny_encoder(), tiny_gan(), toy().vocab, Task::sst, 0);
  Rng r(1);
  auto s = sample_generator(m, 50, r);
  CHECK(s.embeddings.shape() == Shape{50, 8});
  CHECK(s.labels.size() == 50);
  CHECK(batch_variance(s.embeddings) > 0.0);
}
