#include "mtb/multitask.hpp"

#include <algorithm>
#include <cmath>

#include "mtb/error.hpp"
#include "mtb/ops.hpp"
#include "mtb/stats.hpp"

namespace mtb {

TrainMode parse_train_mode(const std::string& s) {
  if (s == "baseline") return TrainMode::baseline;
  if (s == "naive-sum" || s == "naive_sum") return TrainMode::naive_sum;
  if (s == "pcgrad-paired" || s == "pcgrad_paired") return TrainMode::pcgrad_paired;
  throw ConfigError("unknown training mode '" + s + "' (expected baseline, naive-sum or pcgrad-paired)");
}

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::baseline:
      return "baseline";
    case TrainMode::naive_sum:
      return "naive-sum";
    case TrainMode::pcgrad_paired:
      return "pcgrad-paired";
  }
  return "?";
}

namespace {

Rng init_stream(std::uint64_t seed) { return Rng(seed, 0x696e6974); }

std::vector<std::string> texts_a(const std::vector<Example>& v) {
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(e.text_a);
  return out;
}

std::vector<std::string> texts_b(const std::vector<Example>& v) {
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.text_b) throw DataError("example " + e.id + " has no second sentence");
    out.push_back(*e.text_b);
  }
  return out;
}

std::vector<double> label_values(const std::vector<Example>& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.label) throw DataError("example " + e.id + " is unlabeled");
    out.push_back(*e.label);
  }
  return out;
}

std::vector<int> class_labels(const std::vector<Example>& v) {
  std::vector<int> out;
  for (double x : label_values(v)) out.push_back(static_cast<int>(x));
  return out;
}

}  // namespace

MultitaskModel::MultitaskModel(const EncoderConfig& enc, const HeadConfig& heads, const Vocab& vocab,
                               std::uint64_t seed)
    : vocab_(vocab),
      max_len_(enc.max_seq_len),
      init_(init_stream(seed)),
      encoder_([&] {
        EncoderConfig c = enc;
        c.vocab_size = vocab.size();
        return c;
      }(), store_, init_),
      heads_([&] {
        HeadConfig h = heads;
        h.hidden = enc.hidden;
        return h;
      }(), store_, init_) {}

Tensor MultitaskModel::sentence_cls(const std::vector<std::string>& texts, bool training, Rng& rng) const {
  std::vector<std::vector<std::size_t>> seqs;
  seqs.reserve(texts.size());
  for (const auto& t : texts) seqs.push_back(tokenize_single(t, vocab_, max_len_));
  return extract_cls(encoder_.encode(TokenBatch::pack(seqs), training, rng).hidden);
}

Tensor MultitaskModel::pair_cls(const std::vector<std::string>& a, const std::vector<std::string>& b, bool training,
                                Rng& rng) const {
  if (a.size() != b.size()) throw DimensionError("pair_cls: " + std::to_string(a.size()) + " vs " +
                                                 std::to_string(b.size()) + " sentences");
  std::vector<std::vector<std::size_t>> seqs, segs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto p = tokenize_pair(a[i], b[i], vocab_, max_len_);
    seqs.push_back(std::move(p.ids));
    segs.push_back(std::move(p.segments));
  }
  return extract_cls(encoder_.encode(TokenBatch::pack(seqs, segs), training, rng).hidden);
}

TripletFeatures MultitaskModel::triplet(const std::vector<std::string>& a, const std::vector<std::string>& b,
                                        bool training, Rng& rng) const {
  if (a.size() != b.size()) throw DimensionError("triplet: sentence counts differ");
  std::vector<std::string> both = a;
  both.insert(both.end(), b.begin(), b.end());
  auto cls = sentence_cls(both, training, rng);
  const std::size_t n = a.size(), h = cls.size(1);
  // Row-split via reshape + select: [2n, H] -> [2, n, H].
  auto halves = ops::reshape(cls, {2, n, h});
  return TripletFeatures::from(ops::select(halves, 0, 0), ops::select(halves, 0, 1));
}

Tensor MultitaskModel::sentiment_logits(const std::vector<Example>& batch, bool training, Rng& rng) const {
  return heads_.sentiment(sentence_cls(texts_a(batch), training, rng), training, rng);
}

Tensor MultitaskModel::paraphrase_probs(const std::vector<Example>& batch, bool training, Rng& rng) const {
  if (heads_.config().baseline) return heads_.paraphrase_baseline(pair_cls(texts_a(batch), texts_b(batch), training, rng));
  return heads_.paraphrase(triplet(texts_a(batch), texts_b(batch), training, rng), training, rng);
}

Tensor MultitaskModel::similarity_scores(const std::vector<Example>& batch, bool training, Rng& rng) const {
  if (!heads_.config().baseline && heads_.config().sts_mode == StsMode::triplet) {
    return heads_.similarity(triplet(texts_a(batch), texts_b(batch), training, rng), training, rng);
  }
  return heads_.similarity(pair_cls(texts_a(batch), texts_b(batch), training, rng), training, rng);
}

LossBundle MultitaskModel::losses(const MultitaskBatch& batch, Rng& rng) const {
  return task_losses(sentiment_logits(batch.sst, true, rng), class_labels(batch.sst),
                     paraphrase_probs(batch.para, true, rng), label_values(batch.para),
                     similarity_scores(batch.sts, true, rng), label_values(batch.sts));
}

TaskMetrics evaluate(const MultitaskModel& model, const std::vector<Example>& sst_all,
                     const std::vector<Example>& para_all, const std::vector<Example>& sts_all, std::size_t chunk) {
  Rng rng(0);  // eval mode draws nothing
  auto chunks = [chunk](const std::vector<Example>& v, auto&& fn) {
    for (std::size_t s = 0; s < v.size(); s += chunk) {
      std::vector<Example> part(v.begin() + static_cast<long>(s),
                                v.begin() + static_cast<long>(std::min(v.size(), s + chunk)));
      fn(part);
    }
  };
  TaskMetrics m;
  const auto sst = labeled_only(sst_all), para = labeled_only(para_all), sts = labeled_only(sts_all);
  if (!sst.empty()) {
    std::vector<int> preds;
    chunks(sst, [&](const auto& part) {
      auto p = argmax_rows(model.sentiment_logits(part, false, rng));
      preds.insert(preds.end(), p.begin(), p.end());
    });
    m.sst_accuracy = accuracy(preds, class_labels(sst));
  }
  if (!para.empty()) {
    std::vector<int> preds;
    chunks(para, [&](const auto& part) {
      const Tensor probs = model.paraphrase_probs(part, false, rng);
      for (double p : probs.values()) preds.push_back(p >= kParaphraseThreshold);
    });
    m.para_accuracy = accuracy(preds, class_labels(para));
  }
  if (!sts.empty()) {
    std::vector<double> preds;
    chunks(sts, [&](const auto& part) {
      const Tensor scores = model.similarity_scores(part, false, rng);
      for (double s : scores.values()) preds.push_back(std::clamp(s, 0.0, kStsMax));
    });
    try {
      m.sts_pearson = pearson(preds, label_values(sts));
    } catch (const DataError&) {
      m.sts_pearson = 0.0;  // constant predictions early in training
    }
  }
  return m;
}

std::vector<EpochMetrics> train_multitask(MultitaskModel& model, const TaskSplits& data,
                                          const MultitaskTrainConfig& cfg,
                                          const std::function<bool(const EpochMetrics&)>& on_epoch) {
  if (cfg.batch_size == 0) throw ConfigError("train_multitask: batch_size must be >= 1");
  const bool baseline = cfg.mode == TrainMode::baseline;
  if (baseline != model.heads().config().baseline) {
    throw ConfigError("train_multitask: baseline mode requires baseline heads (and only then)");
  }
  Rng root(cfg.seed, 0x7472616e);
  CyclicLoader sst(labeled_only(data.sst_train), cfg.batch_size, root.split(1));
  CyclicLoader para(labeled_only(data.para_train), cfg.batch_size, root.split(2));
  CyclicLoader sts(labeled_only(data.sts_train), cfg.batch_size, root.split(3));
  Rng dropout = root.split(4);
  Rng surgery = root.split(5);

  PairedStepOptions opts;
  opts.mode = cfg.mode == TrainMode::pcgrad_paired ? CombineMode::pcgrad_paired : CombineMode::naive_sum;
  opts.halve_paraphrase = cfg.halve_paraphrase;
  AdamState state;
  const std::size_t steps = steps_per_epoch(sst, para, sts);

  std::vector<EpochMetrics> history;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      auto batch = next_multitask_batch(sst, para, sts);
      auto l = model.losses(batch, dropout);
      const double total = l.sst.item() + l.para.item() + l.sts.item();
      if (!std::isfinite(total)) {
        throw NumericError("train_multitask: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(s));
      }
      loss_sum += total;
      paired_step(model.params(), {l.sst, l.para, l.sts}, state, cfg.adam, opts, surgery);
    }
    EpochMetrics em;
    em.epoch = epoch;
    em.mean_loss = loss_sum / static_cast<double>(steps);
    em.train = evaluate(model, data.sst_train, data.para_train, data.sts_train);
    em.dev = evaluate(model, data.sst_dev, data.para_dev, data.sts_dev);
    history.push_back(em);
    if (on_epoch && !on_epoch(em)) break;
  }
  return history;
}

}  // namespace mtb
