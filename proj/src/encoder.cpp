#include "mtb/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "mtb/error.hpp"
#include "mtb/ops.hpp"

namespace mtb {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLayerNormEps = 1e-12;
constexpr double kMaskValue = -1e9;

}  // namespace

Vocab::Vocab() {
  for (const char* t : {"[PAD]", "[CLS]", "[SEP]", "[UNK]"}) {
    ids_.emplace(t, tokens_.size());
    tokens_.emplace_back(t);
  }
}

std::size_t Vocab::add(const std::string& word) {
  auto [it, inserted] = ids_.emplace(word, tokens_.size());
  if (inserted) tokens_.push_back(word);
  return it->second;
}

std::size_t Vocab::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnk : it->second;
}

Vocab Vocab::build(const std::vector<std::string>& texts) {
  std::set<std::string> words;
  for (const auto& t : texts)
    for (auto& w : split_words(t)) words.insert(std::move(w));
  Vocab v;
  for (const auto& w : words) v.add(w);
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  Vocab v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw DataError(path.string() + ":" + std::to_string(lineno) + ": empty token");
    if (v.add(line) != v.size() - 1) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": duplicate token '" + line + "'");
    }
  }
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary file " + path.string());
  for (std::size_t i = kReserved; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

namespace {

std::vector<std::size_t> word_ids(std::string_view text, const Vocab& vocab) {
  std::vector<std::size_t> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

}  // namespace

std::vector<std::size_t> tokenize_single(std::string_view text, const Vocab& vocab, std::size_t max_len) {
  if (max_len < 3) throw ConfigError("tokenize_single: max_len must be >= 3");
  auto words = word_ids(text, vocab);
  if (words.size() > max_len - 2) words.resize(max_len - 2);
  std::vector<std::size_t> ids{Vocab::kCls};
  ids.insert(ids.end(), words.begin(), words.end());
  ids.push_back(Vocab::kSep);
  return ids;
}

PairTokens tokenize_pair(std::string_view a, std::string_view b, const Vocab& vocab, std::size_t max_len) {
  if (max_len < 5) throw ConfigError("tokenize_pair: max_len must be >= 5");
  auto wa = word_ids(a, vocab);
  auto wb = word_ids(b, vocab);
  while (wa.size() + wb.size() + 3 > max_len) {
    if (wa.size() > wb.size()) {
      wa.pop_back();
    } else {
      wb.pop_back();
    }
  }
  PairTokens out;
  out.ids.push_back(Vocab::kCls);
  out.ids.insert(out.ids.end(), wa.begin(), wa.end());
  out.ids.push_back(Vocab::kSep);
  out.segments.assign(out.ids.size(), 0);
  out.ids.insert(out.ids.end(), wb.begin(), wb.end());
  out.ids.push_back(Vocab::kSep);
  out.segments.resize(out.ids.size(), 1);
  return out;
}

TokenBatch TokenBatch::pack(const std::vector<std::vector<std::size_t>>& seqs,
                            const std::vector<std::vector<std::size_t>>& segs, std::size_t min_len) {
  if (!segs.empty() && segs.size() != seqs.size()) throw ContractError("TokenBatch::pack: segment count mismatch");
  TokenBatch b;
  b.batch = seqs.size();
  b.seq_len = min_len;
  for (const auto& s : seqs) b.seq_len = std::max(b.seq_len, s.size());
  b.ids.assign(b.batch * b.seq_len, Vocab::kPad);
  b.segments.assign(b.batch * b.seq_len, 0);
  b.mask.assign(b.batch * b.seq_len, 0.0);
  for (std::size_t r = 0; r < seqs.size(); ++r) {
    for (std::size_t t = 0; t < seqs[r].size(); ++t) {
      b.ids[r * b.seq_len + t] = seqs[r][t];
      b.mask[r * b.seq_len + t] = seqs[r][t] == Vocab::kPad ? 0.0 : 1.0;
      if (!segs.empty()) b.segments[r * b.seq_len + t] = segs[r].at(t);
    }
  }
  return b;
}

void EncoderConfig::validate() const {
  if (vocab_size <= Vocab::kReserved) throw ConfigError("encoder: vocab_size must exceed the reserved ids");
  if (hidden == 0 || heads == 0 || hidden % heads != 0) {
    throw ConfigError("encoder: hidden (" + std::to_string(hidden) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  }
  if (max_seq_len < 3) throw ConfigError("encoder: max_seq_len must be >= 3");
  if (layers == 0 || ff_dim == 0) throw ConfigError("encoder: layers and ff_dim must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("encoder: dropout_p must lie in [0, 1)");
}

Encoder::Encoder(const EncoderConfig& cfg, ParamStore& store, Rng& init, const std::string& group,
                 const std::string& prefix)
    : cfg_(cfg) {
  cfg_.validate();
  const std::size_t h = cfg.hidden;
  tok_emb_ = store.normal(prefix + ".tok_emb", group, {cfg.vocab_size, h}, kInitStd, init);
  seg_emb_ = store.normal(prefix + ".seg_emb", group, {2, h}, kInitStd, init);
  pos_emb_ = store.normal(prefix + ".pos_emb", group, {cfg.max_seq_len, h}, kInitStd, init);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto p = prefix + ".layer" + std::to_string(l) + ".";
    Layer layer;
    layer.wq = store.normal(p + "attn.wq", group, {h, h}, kInitStd, init);
    layer.bq = store.zeros(p + "attn.bq", group, {h});
    layer.wk = store.normal(p + "attn.wk", group, {h, h}, kInitStd, init);
    layer.bk = store.zeros(p + "attn.bk", group, {h});
    layer.wv = store.normal(p + "attn.wv", group, {h, h}, kInitStd, init);
    layer.bv = store.zeros(p + "attn.bv", group, {h});
    layer.wo = store.normal(p + "attn.wo", group, {h, h}, kInitStd, init);
    layer.bo = store.zeros(p + "attn.bo", group, {h});
    layer.ln1_g = store.ones(p + "ln1.gamma", group, {h});
    layer.ln1_b = store.zeros(p + "ln1.beta", group, {h});
    layer.ff1_w = store.normal(p + "ff1.w", group, {h, cfg.ff_dim}, kInitStd, init);
    layer.ff1_b = store.zeros(p + "ff1.b", group, {cfg.ff_dim});
    layer.ff2_w = store.normal(p + "ff2.w", group, {cfg.ff_dim, h}, kInitStd, init);
    layer.ff2_b = store.zeros(p + "ff2.b", group, {h});
    layer.ln2_g = store.ones(p + "ln2.gamma", group, {h});
    layer.ln2_b = store.zeros(p + "ln2.beta", group, {h});
    layers_.push_back(std::move(layer));
  }
}

Encoder::Output Encoder::encode(const TokenBatch& batch, bool training, Rng& rng) const {
  const std::size_t b = batch.batch, t = batch.seq_len, h = cfg_.hidden;
  const std::size_t heads = cfg_.heads, dh = h / heads;
  if (t > cfg_.max_seq_len) {
    throw DataError("encode: sequence length " + std::to_string(t) + " exceeds max_seq_len " +
                    std::to_string(cfg_.max_seq_len));
  }
  for (std::size_t i = 0; i < batch.ids.size(); ++i) {
    if (batch.ids[i] >= cfg_.vocab_size) {
      throw DataError("encode: token id " + std::to_string(batch.ids[i]) + " out of range in row " +
                      std::to_string(i / t));
    }
  }
  std::vector<std::size_t> positions(b * t);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i % t;

  Tensor x = ops::add(ops::add(ops::gather_rows(tok_emb_, batch.ids), ops::gather_rows(seg_emb_, batch.segments)),
                      ops::gather_rows(pos_emb_, positions));
  x = ops::dropout(ops::reshape(x, {b, t, h}), cfg_.dropout_p, training, rng);

  // Additive key mask, broadcast to every head and query position.
  std::vector<double> mask(b * heads * t * t);
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t a = 0; a < heads; ++a)
      for (std::size_t q = 0; q < t; ++q)
        for (std::size_t k = 0; k < t; ++k)
          mask[((bi * heads + a) * t + q) * t + k] = batch.mask[bi * t + k] > 0.0 ? 0.0 : kMaskValue;
  const Tensor key_mask = Tensor::from({b, heads, t, t}, std::move(mask));
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  auto split_heads = [&](const Tensor& y) { return ops::permute(ops::reshape(y, {b, t, heads, dh}), {0, 2, 1, 3}); };

  Output out;
  for (const auto& L : layers_) {
    auto q = split_heads(ops::add(ops::matmul(x, L.wq), L.bq));
    auto k = split_heads(ops::add(ops::matmul(x, L.wk), L.bk));
    auto v = split_heads(ops::add(ops::matmul(x, L.wv), L.bv));
    auto scores = ops::add(ops::scale(ops::bmm(q, k, true), inv_sqrt_dh), key_mask);
    auto attn = ops::softmax(scores);
    out.attention.push_back(attn);
    auto ctx = ops::reshape(ops::permute(ops::bmm(attn, v), {0, 2, 1, 3}), {b, t, h});
    auto attn_out = ops::dropout(ops::add(ops::matmul(ctx, L.wo), L.bo), cfg_.dropout_p, training, rng);
    x = ops::layer_norm(ops::add(x, attn_out), L.ln1_g, L.ln1_b, kLayerNormEps);
    auto ff = ops::gelu(ops::add(ops::matmul(x, L.ff1_w), L.ff1_b));
    ff = ops::dropout(ops::add(ops::matmul(ff, L.ff2_w), L.ff2_b), cfg_.dropout_p, training, rng);
    x = ops::layer_norm(ops::add(x, ff), L.ln2_g, L.ln2_b, kLayerNormEps);
  }
  out.hidden = x;
  return out;
}

Tensor extract_cls(const Tensor& hidden) {
  if (hidden.dim() != 3) throw DimensionError("extract_cls: expected [B x T x H], got " + shape_str(hidden.shape()));
  return ops::select(hidden, 1, 0);
}

}  // namespace mtb
