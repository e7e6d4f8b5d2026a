#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtb/params.hpp"
#include "mtb/rng.hpp"
#include "mtb/tensor.hpp"

namespace mtb {

/// Word-level vocabulary with four reserved ids.
class Vocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kCls = 1;
  static constexpr std::size_t kSep = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocab();

  /// Collects every word of `texts` (lowercased, whitespace split) in sorted
  /// order after the reserved ids.
  static Vocab build(const std::vector<std::string>& texts);
  /// One token per line; line i (0-based) gets id kReserved + i.
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t add(const std::string& word);
  std::size_t id(std::string_view word) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

/// Lowercases and splits on whitespace.
std::vector<std::string> split_words(std::string_view text);

/// [CLS] words... [SEP], truncated to max_len with [SEP] kept last.
std::vector<std::size_t> tokenize_single(std::string_view text, const Vocab& vocab, std::size_t max_len);

struct PairTokens {
  std::vector<std::size_t> ids;
  std::vector<std::size_t> segments;
};

/// [CLS] a [SEP] b [SEP]; segment 0 through the first [SEP]. Overflow is
/// trimmed one token at a time from the currently longer side (b on ties).
PairTokens tokenize_pair(std::string_view a, std::string_view b, const Vocab& vocab, std::size_t max_len);

/// Right-padded id matrix [batch x seq_len] with mask and segment ids.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> segments;
  std::vector<double> mask;  // 1 on real tokens, 0 on [PAD]

  /// Pads every sequence to the longest one (or to `min_len` if larger).
  static TokenBatch pack(const std::vector<std::vector<std::size_t>>& seqs,
                         const std::vector<std::vector<std::size_t>>& segs = {}, std::size_t min_len = 0);
};

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden = 32;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t max_seq_len = 32;
  std::size_t ff_dim = 64;
  double dropout_p = 0.1;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Post-LN transformer encoder with learned token, segment and position
/// embeddings.
class Encoder {
 public:
  struct Output {
    Tensor hidden;                 // [B x T x H]
    std::vector<Tensor> attention;  // per layer, [B x heads x T x T]
  };

  Encoder(const EncoderConfig& cfg, ParamStore& store, Rng& init, const std::string& group = "shared",
          const std::string& prefix = "encoder");

  Output encode(const TokenBatch& batch, bool training, Rng& rng) const;
  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Layer {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_g, ln1_b;
    Tensor ff1_w, ff1_b, ff2_w, ff2_b;
    Tensor ln2_g, ln2_b;
  };

  EncoderConfig cfg_;
  Tensor tok_emb_, seg_emb_, pos_emb_;
  std::vector<Layer> layers_;
};

/// Position-0 slice: [B x T x H] -> [B x H].
Tensor extract_cls(const Tensor& hidden);

}  // namespace mtb
