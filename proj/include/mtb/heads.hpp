#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mtb/encoder.hpp"
#include "mtb/params.hpp"
#include "mtb/rng.hpp"
#include "mtb/tensor.hpp"

namespace mtb {

enum class StsMode { sep_fused, triplet };

StsMode parse_sts_mode(const std::string& s);
std::string to_string(StsMode m);

inline constexpr std::size_t kSentimentClasses = 5;
inline constexpr double kStsMax = 5.0;
inline constexpr double kParaphraseThreshold = 0.5;

struct HeadConfig {
  std::size_t hidden = 32;      // encoder output width H
  std::size_t shared_dim = 32;
  std::size_t dense_dim = 32;
  double dropout_p = 0.1;
  StsMode sts_mode = StsMode::sep_fused;
  /// One linear layer per head on [CLS], no shared block.
  bool baseline = false;

  void validate() const;
};

/// U, V and |U - V| for a sentence pair.
struct TripletFeatures {
  Tensor u;
  Tensor v;
  Tensor absdiff;

  static TripletFeatures from(const Tensor& u, const Tensor& v);
};

/// The three prediction heads. Parameter groups: "shared" for the shared
/// block, "sst" / "para" / "sts" for head-exclusive weights.
class MultitaskHeads {
 public:
  MultitaskHeads(const HeadConfig& cfg, ParamStore& store, Rng& init);

  /// dense -> ReLU -> layer_norm -> dropout -> dense -> ReLU. [B x H] -> [B x shared_dim].
  Tensor shared_block(const Tensor& cls, bool training, Rng& rng) const;
  /// [B x H] -> logits [B x 5].
  Tensor sentiment(const Tensor& cls, bool training, Rng& rng) const;
  /// Triplet paraphrase head, probability [B]. In baseline mode pass the
  /// [CLS] of the [SEP]-joined pair through paraphrase_baseline instead.
  Tensor paraphrase(const TripletFeatures& t, bool training, Rng& rng) const;
  Tensor paraphrase_baseline(const Tensor& pair_cls) const;
  /// sep_fused / baseline: [CLS] of the joined pair. Throws ContractError in triplet mode.
  Tensor similarity(const Tensor& pair_cls, bool training, Rng& rng) const;
  /// triplet mode only.
  Tensor similarity(const TripletFeatures& t, bool training, Rng& rng) const;

  const HeadConfig& config() const { return cfg_; }

 private:
  struct Dense {
    Tensor w, b;
  };
  Tensor linear(const Dense& d, const Tensor& x) const;
  Tensor dense_block(const Dense& first, const Dense& second, const Tensor& x, bool training, Rng& rng) const;
  static Dense make_dense(ParamStore& store, const std::string& name, const std::string& group, std::size_t in,
                          std::size_t out, Rng& init);

  HeadConfig cfg_;
  Dense shared1_, shared2_;
  Tensor shared_ln_g_, shared_ln_b_;
  Dense sst_dense1_, sst_dense2_, sst_out_;
  Dense para1_, para2_, para_out_;
  Dense sts_out_;
  Dense sts_tri1_, sts_tri2_;
};

struct LossBundle {
  Tensor sst;
  Tensor para;
  Tensor sts;
};

/// Mean categorical cross-entropy; labels in {0..C-1}.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
/// Mean binary cross-entropy on probabilities; labels in {0, 1}.
Tensor binary_cross_entropy(const Tensor& probs, const std::vector<double>& labels);
/// Mean squared error; labels in [0, 5].
Tensor mean_squared_error(const Tensor& scores, const std::vector<double>& labels);

LossBundle task_losses(const Tensor& sst_logits, const std::vector<int>& sst_labels, const Tensor& para_probs,
                       const std::vector<double>& para_labels, const Tensor& sts_scores,
                       const std::vector<double>& sts_labels);

std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace mtb
