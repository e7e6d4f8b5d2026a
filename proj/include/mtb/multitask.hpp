#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mtb/data.hpp"
#include "mtb/encoder.hpp"
#include "mtb/heads.hpp"
#include "mtb/surgery.hpp"

namespace mtb {

enum class TrainMode { baseline, naive_sum, pcgrad_paired };

TrainMode parse_train_mode(const std::string& s);
std::string to_string(TrainMode m);

/// Encoder plus the three heads over one parameter store.
class MultitaskModel {
 public:
  MultitaskModel(const EncoderConfig& enc, const HeadConfig& heads, const Vocab& vocab, std::uint64_t seed);

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const Vocab& vocab() const { return vocab_; }
  const Encoder& encoder() const { return encoder_; }
  const MultitaskHeads& heads() const { return heads_; }

  /// [CLS] of each text encoded on its own.
  Tensor sentence_cls(const std::vector<std::string>& texts, bool training, Rng& rng) const;
  /// [CLS] of each [SEP]-joined pair.
  Tensor pair_cls(const std::vector<std::string>& a, const std::vector<std::string>& b, bool training,
                  Rng& rng) const;
  /// U and V from one batched encode of a then b.
  TripletFeatures triplet(const std::vector<std::string>& a, const std::vector<std::string>& b, bool training,
                          Rng& rng) const;

  Tensor sentiment_logits(const std::vector<Example>& batch, bool training, Rng& rng) const;
  Tensor paraphrase_probs(const std::vector<Example>& batch, bool training, Rng& rng) const;
  Tensor similarity_scores(const std::vector<Example>& batch, bool training, Rng& rng) const;

  LossBundle losses(const MultitaskBatch& batch, Rng& rng) const;

 private:
  ParamStore store_;
  Vocab vocab_;
  std::size_t max_len_;
  Rng init_;
  Encoder encoder_;
  MultitaskHeads heads_;
};

struct TaskMetrics {
  double sst_accuracy = 0.0;
  double para_accuracy = 0.0;
  double sts_pearson = 0.0;
};

/// Eval-mode metrics over whole datasets, chunked by `chunk` rows.
/// STS predictions are clipped to [0, 5] before Pearson.
TaskMetrics evaluate(const MultitaskModel& model, const std::vector<Example>& sst, const std::vector<Example>& para,
                     const std::vector<Example>& sts, std::size_t chunk = 64);

struct MultitaskTrainConfig {
  TrainMode mode = TrainMode::pcgrad_paired;
  AdamConfig adam;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  bool halve_paraphrase = false;
  std::uint64_t seed = 0;
};

struct TaskSplits {
  std::vector<Example> sst_train, sst_dev, para_train, para_dev, sts_train, sts_dev;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  TaskMetrics train;
  TaskMetrics dev;
  double mean_loss = 0.0;
};

/// Trains in place. `on_epoch` runs after each epoch's evaluation; returning
/// false stops training early.
std::vector<EpochMetrics> train_multitask(MultitaskModel& model, const TaskSplits& data,
                                          const MultitaskTrainConfig& cfg,
                                          const std::function<bool(const EpochMetrics&)>& on_epoch = {});

}  // namespace mtb
