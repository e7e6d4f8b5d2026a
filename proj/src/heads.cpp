#include "mtb/heads.hpp"

#include <algorithm>
#include <cmath>

#include "mtb/error.hpp"
#include "mtb/ops.hpp"

namespace mtb {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLayerNormEps = 1e-5;

}  // namespace

StsMode parse_sts_mode(const std::string& s) {
  if (s == "sep_fused" || s == "sep-fused") return StsMode::sep_fused;
  if (s == "triplet") return StsMode::triplet;
  throw ConfigError("unknown sts mode '" + s + "' (expected sep_fused or triplet)");
}

std::string to_string(StsMode m) { return m == StsMode::sep_fused ? "sep_fused" : "triplet"; }

void HeadConfig::validate() const {
  if (hidden == 0 || shared_dim == 0 || dense_dim == 0) throw ConfigError("heads: dimensions must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("heads: dropout_p must lie in [0, 1)");
}

TripletFeatures TripletFeatures::from(const Tensor& u, const Tensor& v) {
  return {u, v, ops::abs_diff(u, v)};
}

MultitaskHeads::Dense MultitaskHeads::make_dense(ParamStore& store, const std::string& name, const std::string& group,
                                                 std::size_t in, std::size_t out, Rng& init) {
  return {store.normal(name + ".w", group, {in, out}, kInitStd, init), store.zeros(name + ".b", group, {out})};
}

MultitaskHeads::MultitaskHeads(const HeadConfig& cfg, ParamStore& store, Rng& init) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t h = cfg.hidden;
  if (cfg.baseline) {
    sst_out_ = make_dense(store, "heads.sst.out", "sst", h, kSentimentClasses, init);
    para_out_ = make_dense(store, "heads.para.out", "para", h, 1, init);
    sts_out_ = make_dense(store, "heads.sts.out", "sts", h, 1, init);
    return;
  }
  shared1_ = make_dense(store, "heads.shared.dense1", "shared", h, cfg.shared_dim, init);
  shared_ln_g_ = store.ones("heads.shared.ln.gamma", "shared", {cfg.shared_dim});
  shared_ln_b_ = store.zeros("heads.shared.ln.beta", "shared", {cfg.shared_dim});
  shared2_ = make_dense(store, "heads.shared.dense2", "shared", cfg.shared_dim, cfg.shared_dim, init);

  sst_dense1_ = make_dense(store, "heads.sst.dense1", "sst", h, cfg.dense_dim, init);
  sst_dense2_ = make_dense(store, "heads.sst.dense2", "sst", cfg.dense_dim, cfg.dense_dim, init);
  sst_out_ = make_dense(store, "heads.sst.out", "sst", cfg.shared_dim + cfg.dense_dim, kSentimentClasses, init);

  para1_ = make_dense(store, "heads.para.dense1", "para", 3 * h, cfg.dense_dim, init);
  para2_ = make_dense(store, "heads.para.dense2", "para", cfg.dense_dim, cfg.dense_dim, init);
  para_out_ = make_dense(store, "heads.para.out", "para", cfg.dense_dim, 1, init);

  if (cfg.sts_mode == StsMode::sep_fused) {
    sts_out_ = make_dense(store, "heads.sts.out", "sts", cfg.shared_dim, 1, init);
  } else {
    sts_tri1_ = make_dense(store, "heads.sts.dense1", "sts", 3 * h, cfg.dense_dim, init);
    sts_tri2_ = make_dense(store, "heads.sts.dense2", "sts", cfg.dense_dim, cfg.dense_dim, init);
    sts_out_ = make_dense(store, "heads.sts.out", "sts", cfg.dense_dim, 1, init);
  }
}

Tensor MultitaskHeads::linear(const Dense& d, const Tensor& x) const { return ops::add(ops::matmul(x, d.w), d.b); }

Tensor MultitaskHeads::dense_block(const Dense& first, const Dense& second, const Tensor& x, bool training,
                                   Rng& rng) const {
  auto y = ops::dropout(ops::relu(linear(first, x)), cfg_.dropout_p, training, rng);
  return ops::relu(linear(second, y));
}

Tensor MultitaskHeads::shared_block(const Tensor& cls, bool training, Rng& rng) const {
  if (cfg_.baseline) throw ContractError("shared_block is not available in baseline mode");
  auto y = ops::relu(linear(shared1_, cls));
  y = ops::dropout(ops::layer_norm(y, shared_ln_g_, shared_ln_b_, kLayerNormEps), cfg_.dropout_p, training, rng);
  return ops::relu(linear(shared2_, y));
}

Tensor MultitaskHeads::sentiment(const Tensor& cls, bool training, Rng& rng) const {
  if (cfg_.baseline) return linear(sst_out_, cls);
  auto joined = ops::concat({shared_block(cls, training, rng), dense_block(sst_dense1_, sst_dense2_, cls, training, rng)});
  return linear(sst_out_, joined);
}

Tensor MultitaskHeads::paraphrase(const TripletFeatures& t, bool training, Rng& rng) const {
  if (cfg_.baseline) throw ContractError("paraphrase: baseline heads take the joined-pair [CLS]");
  auto joined = ops::concat({t.u, t.v, t.absdiff});
  auto logit = linear(para_out_, dense_block(para1_, para2_, joined, training, rng));
  return ops::reshape(ops::sigmoid(logit), {t.u.size(0)});
}

Tensor MultitaskHeads::paraphrase_baseline(const Tensor& pair_cls) const {
  if (!cfg_.baseline) throw ContractError("paraphrase_baseline called on full heads");
  return ops::reshape(ops::sigmoid(linear(para_out_, pair_cls)), {pair_cls.size(0)});
}

Tensor MultitaskHeads::similarity(const Tensor& pair_cls, bool training, Rng& rng) const {
  if (cfg_.baseline) return ops::reshape(linear(sts_out_, pair_cls), {pair_cls.size(0)});
  if (cfg_.sts_mode != StsMode::sep_fused) throw ContractError("similarity: triplet mode expects TripletFeatures");
  return ops::reshape(linear(sts_out_, shared_block(pair_cls, training, rng)), {pair_cls.size(0)});
}

Tensor MultitaskHeads::similarity(const TripletFeatures& t, bool training, Rng& rng) const {
  if (cfg_.baseline || cfg_.sts_mode != StsMode::triplet) {
    throw ContractError("similarity: sep_fused mode expects the joined-pair [CLS]");
  }
  auto joined = ops::concat({t.u, t.v, t.absdiff});
  return ops::reshape(linear(sts_out_, dense_block(sts_tri1_, sts_tri2_, joined, training, rng)), {t.u.size(0)});
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.dim() != 2 || logits.size(0) != labels.size()) {
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = logits.size(0), c = logits.size(1);
  if (b == 0) throw DataError("cross_entropy: empty batch");
  std::vector<double> onehot(b * c, 0.0);
  for (std::size_t r = 0; r < b; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c) {
      throw DataError("cross_entropy: label " + std::to_string(labels[r]) + " out of range at row " + std::to_string(r));
    }
    onehot[r * c + static_cast<std::size_t>(labels[r])] = 1.0;
  }
  auto picked = ops::sum(ops::mul(ops::log(ops::softmax(logits)), Tensor::from({b, c}, std::move(onehot))));
  return ops::scale(picked, -1.0 / static_cast<double>(b));
}

Tensor binary_cross_entropy(const Tensor& probs, const std::vector<double>& labels) {
  if (probs.numel() != labels.size()) {
    throw DimensionError("binary_cross_entropy: " + shape_str(probs.shape()) + " vs " + std::to_string(labels.size()) +
                         " labels");
  }
  if (labels.empty()) throw DataError("binary_cross_entropy: empty batch");
  std::vector<double> neg(labels.size());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] != 0.0 && labels[r] != 1.0) {
      throw DataError("binary_cross_entropy: label " + std::to_string(labels[r]) + " not binary at row " +
                      std::to_string(r));
    }
    neg[r] = 1.0 - labels[r];
  }
  const Shape s = probs.shape();
  auto pos_term = ops::mul(ops::log(probs), Tensor::from(s, labels));
  auto neg_term = ops::mul(ops::log(ops::add_scalar(ops::scale(probs, -1.0), 1.0)), Tensor::from(s, std::move(neg)));
  return ops::scale(ops::sum(ops::add(pos_term, neg_term)), -1.0 / static_cast<double>(labels.size()));
}

Tensor mean_squared_error(const Tensor& scores, const std::vector<double>& labels) {
  if (scores.numel() != labels.size()) {
    throw DimensionError("mean_squared_error: " + shape_str(scores.shape()) + " vs " + std::to_string(labels.size()) +
                         " labels");
  }
  if (labels.empty()) throw DataError("mean_squared_error: empty batch");
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (!(labels[r] >= 0.0 && labels[r] <= kStsMax)) {
      throw DataError("mean_squared_error: label " + std::to_string(labels[r]) + " outside [0, 5] at row " +
                      std::to_string(r));
    }
  }
  return ops::mean(ops::square(ops::sub(scores, Tensor::from(scores.shape(), labels))));
}

LossBundle task_losses(const Tensor& sst_logits, const std::vector<int>& sst_labels, const Tensor& para_probs,
                       const std::vector<double>& para_labels, const Tensor& sts_scores,
                       const std::vector<double>& sts_labels) {
  return {cross_entropy(sst_logits, sst_labels), binary_cross_entropy(para_probs, para_labels),
          mean_squared_error(sts_scores, sts_labels)};
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t b = logits.size(0), c = logits.numel() / std::max<std::size_t>(b, 1);
  std::vector<int> out(b);
  auto v = logits.values();
  for (std::size_t r = 0; r < b; ++r) {
    out[r] = static_cast<int>(std::max_element(v.begin() + static_cast<long>(r * c), v.begin() + static_cast<long>((r + 1) * c)) -
                              (v.begin() + static_cast<long>(r * c)));
  }
  return out;
}

}  // namespace mtb
