#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mtb/data.hpp"
#include "mtb/encoder.hpp"
#include "mtb/params.hpp"
#include "mtb/surgery.hpp"

namespace mtb {

struct GanConfig {
  std::size_t k = 5;  // real classes; logit index k is "fake"
  std::size_t noise_dim = 100;
  std::size_t hidden_depth = 1;
  std::size_t hidden_dim = 32;
  double lr = 5e-5;
  bool conditional = true;
  std::size_t epochs = 5;
  double dropout_p = 0.1;

  void validate() const;
};

/// noise (+ one-hot label when conditional) -> hidden_depth x (dense, ReLU) -> linear to out_dim.
class Generator {
 public:
  Generator(const GanConfig& cfg, std::size_t out_dim, ParamStore& store, Rng& init,
            const std::string& group = "gen");
  /// Labels are ignored (but still range-checked) when unconditional.
  Tensor forward(const Tensor& noise, const std::vector<int>& labels) const;
  std::size_t out_dim() const { return out_dim_; }

 private:
  GanConfig cfg_;
  std::size_t out_dim_;
  std::vector<Tensor> w_, b_;
};

struct DiscriminatorOutput {
  Tensor logits;   // [B x (k+1)]
  Tensor feature;  // [B x hidden_dim], last hidden activation
};

/// hidden_depth x (dense, ReLU, dropout) -> linear to k+1 logits.
class Discriminator {
 public:
  Discriminator(const GanConfig& cfg, std::size_t in_dim, ParamStore& store, Rng& init,
                const std::string& group = "disc");
  DiscriminatorOutput forward(const Tensor& x, bool training, Rng& rng) const;

 private:
  GanConfig cfg_;
  std::vector<Tensor> w_, b_;
  Tensor out_w_, out_b_;
};

struct DiscriminatorLoss {
  Tensor total;
  Tensor supervised;    // L_D_S, 0 when no labeled rows
  Tensor unsupervised;  // L_D_U
  bool has_supervised = false;
};

/// L_D_S = mean over labeled real rows of -log p(true class);
/// L_D_U = mean over real rows of -log(1 - p(fake)) + mean over fake rows of -log p(fake).
/// Empty means count as 0. Probabilities are clamped at 1e-12 inside the logs.
DiscriminatorLoss discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits,
                                     const std::vector<std::optional<int>>& labels);

struct GeneratorLoss {
  Tensor total;
  Tensor feature_matching;  // L_G_FM
  Tensor unsupervised;      // L_G_U
};

/// L_G_FM = || mean(real_features) - mean(fake_features) ||^2 with the real side
/// treated as constant; L_G_U = mean over fake rows of -log(1 - p(fake)).
GeneratorLoss generator_loss(const Tensor& real_features, const Tensor& fake_features, const Tensor& fake_logits);

/// Encoder + discriminator + generator. Groups: "encoder", "disc", "gen".
class GanModel {
 public:
  GanModel(const EncoderConfig& enc, const GanConfig& gan, const Vocab& vocab, Task task, std::uint64_t seed);

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const GanConfig& config() const { return cfg_; }
  const Generator& generator() const { return gen_; }
  const Discriminator& discriminator() const { return disc_; }
  Task task() const { return task_; }

  /// [CLS] of single sentences (sst) or of [SEP]-joined pairs (para).
  Tensor real_cls(const std::vector<Example>& batch, bool training, Rng& rng) const;
  /// Discriminator argmax over the k real classes.
  std::vector<int> predict(const std::vector<Example>& batch) const;

 private:
  ParamStore store_;
  Vocab vocab_;
  std::size_t max_len_;
  Task task_;
  GanConfig cfg_;
  Rng init_;
  Encoder encoder_;
  Discriminator disc_;
  Generator gen_;
};

struct GanOptimizers {
  AdamConfig d, g;
  AdamState d_state, g_state;
  bool freeze_encoder = false;
};

struct GanStepRecord {
  std::size_t step = 0;
  double d_sup = 0.0;    // L_D_S
  double d_unsup = 0.0;  // L_D_U
  double g_fm = 0.0;     // L_G_FM
  double g_unsup = 0.0;  // L_G_U
  bool supervised = false;
};

/// One D update (encoder + disc, unless the encoder is frozen) followed by one
/// G update against the freshly updated, frozen discriminator. Throws
/// NumericError with the step index if a loss is non-finite.
GanStepRecord gan_train_step(GanModel& model, const std::vector<Example>& batch, GanOptimizers& opt, Rng& rng,
                             std::size_t step);

struct GanEpoch {
  std::size_t epoch = 0;
  double dev_accuracy = 0.0;
};

struct GanTrainConfig {
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  bool freeze_encoder = false;
};

struct GanRun {
  std::vector<GanStepRecord> steps;
  std::vector<GanEpoch> epochs;
};

/// Trains for cfg.epochs passes over `train` (labeled and unlabeled rows).
GanRun train_gan(GanModel& model, const std::vector<Example>& train, const std::vector<Example>& dev,
                 const GanTrainConfig& tc, const std::function<void(const GanStepRecord&)>& on_step = {},
                 const std::function<void(const GanEpoch&)>& on_epoch = {});

struct GeneratedSample {
  Tensor embeddings;  // [n x H]
  std::vector<int> labels;
};

/// n generator outputs with uniformly sampled labels.
GeneratedSample sample_generator(const GanModel& model, std::size_t n, Rng& rng);

/// Mean pairwise distance between rows of different labels divided by the
/// mean pairwise distance between distinct rows sharing a label.
double class_separation_ratio(const Tensor& embeddings, const std::vector<int>& labels);

/// Mean over columns of the across-row variance.
double batch_variance(const Tensor& embeddings);

}  // namespace mtb
