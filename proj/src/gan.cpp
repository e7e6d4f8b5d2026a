#include "mtb/gan.hpp"

#include <algorithm>
#include <cmath>

#include "mtb/error.hpp"
#include "mtb/ops.hpp"

namespace mtb {

namespace {

constexpr double kInitStd = 0.02;

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return ops::add(ops::matmul(x, w), b); }

// -log(p) summed over the entries selected by `mask`, divided by `count`.
Tensor masked_nll(const Tensor& probs, std::vector<double> mask, std::size_t count) {
  if (count == 0) return Tensor::scalar(0.0);
  auto picked = ops::sum(ops::mul(ops::log(probs), Tensor::from(probs.shape(), std::move(mask))));
  return ops::scale(picked, -1.0 / static_cast<double>(count));
}

Tensor fake_column(const Tensor& probs, std::size_t k) { return ops::select(probs, 1, k); }

Tensor one_minus(const Tensor& p) { return ops::add_scalar(ops::scale(p, -1.0), 1.0); }

}  // namespace

void GanConfig::validate() const {
  if (k < 2) throw ConfigError("gan: k must be >= 2");
  if (noise_dim < 1) throw ConfigError("gan: noise_dim must be >= 1");
  if (hidden_depth < 1) throw ConfigError("gan: hidden_depth must be >= 1");
  if (hidden_dim < 1) throw ConfigError("gan: hidden_dim must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("gan: lr must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("gan: dropout_p must lie in [0, 1)");
}

Generator::Generator(const GanConfig& cfg, std::size_t out_dim, ParamStore& store, Rng& init,
                     const std::string& group)
    : cfg_(cfg), out_dim_(out_dim) {
  cfg_.validate();
  std::size_t in = cfg.noise_dim + (cfg.conditional ? cfg.k : 0);
  for (std::size_t l = 0; l < cfg.hidden_depth; ++l) {
    const std::string p = "gen.hidden" + std::to_string(l);
    w_.push_back(store.normal(p + ".w", group, {in, cfg.hidden_dim}, kInitStd, init));
    b_.push_back(store.zeros(p + ".b", group, {cfg.hidden_dim}));
    in = cfg.hidden_dim;
  }
  w_.push_back(store.normal("gen.out.w", group, {in, out_dim}, kInitStd, init));
  b_.push_back(store.zeros("gen.out.b", group, {out_dim}));
}

Tensor Generator::forward(const Tensor& noise, const std::vector<int>& labels) const {
  if (noise.dim() != 2 || noise.size(1) != cfg_.noise_dim) {
    throw DimensionError("generator: noise must be [B x " + std::to_string(cfg_.noise_dim) + "], got " +
                         shape_str(noise.shape()));
  }
  const std::size_t b = noise.size(0);
  if (labels.size() != b) throw DimensionError("generator: label count does not match the noise batch");
  for (std::size_t r = 0; r < b; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= cfg_.k) {
      throw ContractError("generator: label " + std::to_string(labels[r]) + " out of range at row " +
                          std::to_string(r));
    }
  }
  Tensor x = noise;
  if (cfg_.conditional) {
    std::vector<double> onehot(b * cfg_.k, 0.0);
    for (std::size_t r = 0; r < b; ++r) onehot[r * cfg_.k + static_cast<std::size_t>(labels[r])] = 1.0;
    x = ops::concat({noise, Tensor::from({b, cfg_.k}, std::move(onehot))});
  }
  for (std::size_t l = 0; l + 1 < w_.size(); ++l) x = ops::relu(linear(x, w_[l], b_[l]));
  return linear(x, w_.back(), b_.back());
}

Discriminator::Discriminator(const GanConfig& cfg, std::size_t in_dim, ParamStore& store, Rng& init,
                             const std::string& group)
    : cfg_(cfg) {
  cfg_.validate();
  std::size_t in = in_dim;
  for (std::size_t l = 0; l < cfg.hidden_depth; ++l) {
    const std::string p = "disc.hidden" + std::to_string(l);
    w_.push_back(store.normal(p + ".w", group, {in, cfg.hidden_dim}, kInitStd, init));
    b_.push_back(store.zeros(p + ".b", group, {cfg.hidden_dim}));
    in = cfg.hidden_dim;
  }
  out_w_ = store.normal("disc.out.w", group, {in, cfg.k + 1}, kInitStd, init);
  out_b_ = store.zeros("disc.out.b", group, {cfg.k + 1});
}

DiscriminatorOutput Discriminator::forward(const Tensor& x, bool training, Rng& rng) const {
  Tensor h = x;
  for (std::size_t l = 0; l < w_.size(); ++l) h = ops::dropout(ops::relu(linear(h, w_[l], b_[l])), cfg_.dropout_p, training, rng);
  return {linear(h, out_w_, out_b_), h};
}

DiscriminatorLoss discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits,
                                     const std::vector<std::optional<int>>& labels) {
  if (real_logits.dim() != 2 || real_logits.size(0) != labels.size()) {
    throw DimensionError("discriminator_loss: real logits " + shape_str(real_logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t c = real_logits.size(1), k = c - 1, n = labels.size();
  if (fake_logits.dim() != 2 || fake_logits.size(1) != c) {
    throw DimensionError("discriminator_loss: fake logits " + shape_str(fake_logits.shape()));
  }
  DiscriminatorLoss out;
  const Tensor real_p = ops::softmax(real_logits);

  std::vector<double> mask(n * c, 0.0);
  std::size_t labeled = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (!labels[r]) continue;
    const int y = *labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw DataError("discriminator_loss: label " + std::to_string(y) + " out of range at row " + std::to_string(r));
    }
    mask[r * c + static_cast<std::size_t>(y)] = 1.0;
    ++labeled;
  }
  out.has_supervised = labeled > 0;
  out.supervised = masked_nll(real_p, std::move(mask), labeled);

  Tensor real_term = n == 0 ? Tensor::scalar(0.0)
                            : ops::scale(ops::mean(ops::log(one_minus(fake_column(real_p, k)))), -1.0);
  Tensor fake_term = fake_logits.size(0) == 0
                         ? Tensor::scalar(0.0)
                         : ops::scale(ops::mean(ops::log(fake_column(ops::softmax(fake_logits), k))), -1.0);
  out.unsupervised = ops::add(real_term, fake_term);
  out.total = ops::add(out.supervised, out.unsupervised);
  return out;
}

GeneratorLoss generator_loss(const Tensor& real_features, const Tensor& fake_features, const Tensor& fake_logits) {
  if (real_features.dim() != 2 || fake_features.dim() != 2 || real_features.size(1) != fake_features.size(1)) {
    throw DimensionError("generator_loss: feature shapes " + shape_str(real_features.shape()) + " vs " +
                         shape_str(fake_features.shape()));
  }
  GeneratorLoss out;
  auto gap = ops::sub(ops::mean_rows(real_features.detach()), ops::mean_rows(fake_features));
  out.feature_matching = ops::sum(ops::square(gap));
  const std::size_t k = fake_logits.size(1) - 1;
  out.unsupervised =
      ops::scale(ops::mean(ops::log(one_minus(fake_column(ops::softmax(fake_logits), k)))), -1.0);
  out.total = ops::add(out.feature_matching, out.unsupervised);
  return out;
}

GanModel::GanModel(const EncoderConfig& enc, const GanConfig& gan, const Vocab& vocab, Task task, std::uint64_t seed)
    : vocab_(vocab),
      max_len_(enc.max_seq_len),
      task_(task),
      cfg_(gan),
      init_(seed, 0x67616e69),
      encoder_([&] {
        EncoderConfig c = enc;
        c.vocab_size = vocab.size();
        return c;
      }(), store_, init_, "encoder"),
      disc_(gan, enc.hidden, store_, init_),
      gen_(gan, enc.hidden, store_, init_) {
  if (task == Task::sts) throw ConfigError("gan: sts is a regression task; use sst or para");
  if (task == Task::sst && gan.k != 5) throw ConfigError("gan: sentiment needs k = 5");
  if (task == Task::para && gan.k != 2) throw ConfigError("gan: paraphrase needs k = 2");
}

Tensor GanModel::real_cls(const std::vector<Example>& batch, bool training, Rng& rng) const {
  std::vector<std::vector<std::size_t>> seqs, segs;
  for (const auto& e : batch) {
    if (task_ == Task::sst) {
      seqs.push_back(tokenize_single(e.text_a, vocab_, max_len_));
      segs.emplace_back(seqs.back().size(), 0);
    } else {
      if (!e.text_b) throw DataError("gan: example " + e.id + " has no second sentence");
      auto p = tokenize_pair(e.text_a, *e.text_b, vocab_, max_len_);
      seqs.push_back(std::move(p.ids));
      segs.push_back(std::move(p.segments));
    }
  }
  return extract_cls(encoder_.encode(TokenBatch::pack(seqs, segs), training, rng).hidden);
}

std::vector<int> GanModel::predict(const std::vector<Example>& batch) const {
  Rng rng(0);
  auto logits = disc_.forward(real_cls(batch, false, rng), false, rng).logits;
  const std::size_t c = cfg_.k + 1;
  std::vector<int> out(batch.size());
  auto v = logits.values();
  for (std::size_t r = 0; r < batch.size(); ++r) {
    auto first = v.begin() + static_cast<long>(r * c);
    out[r] = static_cast<int>(std::max_element(first, first + static_cast<long>(cfg_.k)) - first);
  }
  return out;
}

namespace {

Tensor normal_noise(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.normal();
  return Tensor::from({rows, cols}, std::move(v));
}

std::vector<int> uniform_labels(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<int> out(n);
  for (auto& y : out) y = static_cast<int>(rng.below(k));
  return out;
}

void check_finite(double v, const char* what, std::size_t step) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("gan: non-finite ") + what + " at step " + std::to_string(step));
  }
}

}  // namespace

GanStepRecord gan_train_step(GanModel& model, const std::vector<Example>& batch, GanOptimizers& opt, Rng& rng,
                             std::size_t step) {
  if (batch.empty()) throw DataError("gan_train_step: empty batch");
  auto& store = model.params();
  const auto& cfg = model.config();
  const std::size_t b = batch.size();

  std::vector<std::optional<int>> labels;
  labels.reserve(b);
  for (const auto& e : batch) labels.push_back(e.label ? std::optional<int>(static_cast<int>(*e.label)) : std::nullopt);

  store.set_trainable("encoder", !opt.freeze_encoder);
  const Tensor real = model.real_cls(batch, true, rng);
  const Tensor noise = normal_noise(b, cfg.noise_dim, rng);
  const auto fake_labels = uniform_labels(b, cfg.k, rng);
  const Tensor fake = model.generator().forward(noise, fake_labels);

  // Discriminator step; fakes are constants here.
  const auto& disc = model.discriminator();
  auto d_real = disc.forward(real, true, rng);
  auto d_fake = disc.forward(fake.detach(), true, rng);
  auto d_loss = discriminator_loss(d_real.logits, d_fake.logits, labels);
  GanStepRecord rec;
  rec.step = step;
  rec.d_sup = d_loss.supervised.item();
  rec.d_unsup = d_loss.unsupervised.item();
  rec.supervised = d_loss.has_supervised;
  check_finite(rec.d_sup + rec.d_unsup, "discriminator loss", step);
  store.zero_grad();
  d_loss.total.backward();
  std::vector<std::string> d_groups{"disc"};
  if (!opt.freeze_encoder) d_groups.push_back("encoder");
  adam_step(store, d_groups, opt.d_state, opt.d);

  // Generator step against the updated discriminator, held fixed.
  store.set_trainable("disc", false);
  store.set_trainable("encoder", false);
  auto g_real = disc.forward(real.detach(), true, rng);
  auto g_fake = disc.forward(fake, true, rng);
  auto g_loss = generator_loss(g_real.feature, g_fake.feature, g_fake.logits);
  rec.g_fm = g_loss.feature_matching.item();
  rec.g_unsup = g_loss.unsupervised.item();
  check_finite(rec.g_fm + rec.g_unsup, "generator loss", step);
  store.zero_grad();
  g_loss.total.backward();
  adam_step(store, {"gen"}, opt.g_state, opt.g);
  store.set_trainable("disc", true);
  store.set_trainable("encoder", !opt.freeze_encoder);
  store.zero_grad();
  return rec;
}

GanRun train_gan(GanModel& model, const std::vector<Example>& train, const std::vector<Example>& dev,
                 const GanTrainConfig& tc, const std::function<void(const GanStepRecord&)>& on_step,
                 const std::function<void(const GanEpoch&)>& on_epoch) {
  const auto& cfg = model.config();
  Rng root(tc.seed, 0x67616e74);
  CyclicLoader loader(train, tc.batch_size, root.split(1));
  Rng rng = root.split(2);
  GanOptimizers opt;
  opt.d.lr = cfg.lr;
  opt.g.lr = cfg.lr;
  opt.freeze_encoder = tc.freeze_encoder;

  const std::size_t steps = (loader.size() + tc.batch_size - 1) / tc.batch_size;
  const auto dev_labeled = labeled_only(dev);
  std::vector<int> dev_truth;
  for (const auto& e : dev_labeled) dev_truth.push_back(static_cast<int>(*e.label));

  GanRun run;
  std::size_t global = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < steps; ++s) {
      auto rec = gan_train_step(model, loader.next(), opt, rng, global++);
      if (on_step) on_step(rec);
      run.steps.push_back(rec);
    }
    GanEpoch ep{epoch, 0.0};
    if (!dev_labeled.empty()) {
      std::vector<int> preds;
      for (std::size_t i = 0; i < dev_labeled.size(); i += 64) {
        std::vector<Example> part(dev_labeled.begin() + static_cast<long>(i),
                                  dev_labeled.begin() + static_cast<long>(std::min(dev_labeled.size(), i + 64)));
        auto p = model.predict(part);
        preds.insert(preds.end(), p.begin(), p.end());
      }
      std::size_t hit = 0;
      for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == dev_truth[i];
      ep.dev_accuracy = static_cast<double>(hit) / static_cast<double>(preds.size());
    }
    if (on_epoch) on_epoch(ep);
    run.epochs.push_back(ep);
  }
  return run;
}

GeneratedSample sample_generator(const GanModel& model, std::size_t n, Rng& rng) {
  const auto& cfg = model.config();
  GeneratedSample s;
  s.labels = uniform_labels(n, cfg.k, rng);
  s.embeddings = model.generator().forward(normal_noise(n, cfg.noise_dim, rng), s.labels).detach();
  return s;
}

double class_separation_ratio(const Tensor& embeddings, const std::vector<int>& labels) {
  const std::size_t n = embeddings.size(0), d = embeddings.size(1);
  if (labels.size() != n) throw DimensionError("class_separation_ratio: label count mismatch");
  auto v = embeddings.values();
  double between = 0.0, within = 0.0;
  std::size_t nb = 0, nw = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = v[i * d + c] - v[j * d + c];
        s += diff * diff;
      }
      const double dist = std::sqrt(s);
      if (labels[i] == labels[j]) {
        within += dist;
        ++nw;
      } else {
        between += dist;
        ++nb;
      }
    }
  if (nw == 0 || nb == 0) throw DataError("class_separation_ratio: need at least two classes with repeated labels");
  within /= static_cast<double>(nw);
  between /= static_cast<double>(nb);
  if (within == 0.0) throw NumericError("class_separation_ratio: zero within-class spread");
  return between / within;
}

double batch_variance(const Tensor& embeddings) {
  const std::size_t n = embeddings.size(0), d = embeddings.size(1);
  if (n < 2) throw DataError("batch_variance: need at least two rows");
  auto v = embeddings.values();
  double total = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < n; ++r) m += v[r * d + c];
    m /= static_cast<double>(n);
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r) s += (v[r * d + c] - m) * (v[r * d + c] - m);
    total += s / static_cast<double>(n - 1);
  }
  return total / static_cast<double>(d);
}

}  // namespace mtb
