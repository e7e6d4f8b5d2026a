#include "mtb/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mtb/encoder.hpp"
#include "mtb/error.hpp"
#include "mtb/heads.hpp"

namespace mtb {

std::string to_string(Task t) {
  switch (t) {
    case Task::sst:
      return "sst";
    case Task::para:
      return "para";
    case Task::sts:
      return "sts";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "sst") return Task::sst;
  if (s == "para") return Task::para;
  if (s == "sts") return Task::sts;
  throw ConfigError("unknown task '" + s + "'");
}

void validate_label(Task task, double label) {
  switch (task) {
    case Task::sst:
      if (!(label >= 0.0 && label <= 4.0 && label == std::floor(label))) {
        throw DataError("sentiment label " + std::to_string(label) + " not in {0..4}");
      }
      break;
    case Task::para:
      if (label != 0.0 && label != 1.0) throw DataError("paraphrase label " + std::to_string(label) + " not in {0,1}");
      break;
    case Task::sts:
      if (!(label >= 0.0 && label <= 5.0)) throw DataError("similarity label " + std::to_string(label) + " not in [0,5]");
      break;
  }
}

void validate_example(const Example& ex) {
  if (ex.task == Task::sst && ex.text_b) throw DataError("example " + ex.id + ": sentiment rows take one sentence");
  if (ex.task != Task::sst && !ex.text_b) throw DataError("example " + ex.id + ": pair task requires two sentences");
  if (ex.label) validate_label(ex.task, *ex.label);
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    cols.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return cols;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_label(const std::string& s) {
  if (s == "-") return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw DataError("unparseable label '" + s + "'");
  return v;
}

std::size_t column_count(Task t) { return t == Task::sst ? 3 : 4; }

const char* header_for(Task t) {
  switch (t) {
    case Task::sst:
      return "id\tsentence\tlabel";
    case Task::para:
      return "id\tsentence1\tsentence2\tis_duplicate";
    case Task::sts:
      return "id\tsentence1\tsentence2\tsimilarity";
  }
  return "";
}

}  // namespace

std::vector<Example> load_tsv(const std::filesystem::path& path, Task task) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  const std::size_t ncols = column_count(task);
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) continue;  // header
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    auto where = [&] { return path.string() + ":" + std::to_string(lineno) + ": "; };
    if (cols.size() != ncols) {
      throw DataError(where() + "expected " + std::to_string(ncols) + " columns, found " + std::to_string(cols.size()));
    }
    Example ex;
    ex.id = cols[0];
    ex.task = task;
    ex.text_a = cols[1];
    if (task != Task::sst) ex.text_b = cols[2];
    try {
      ex.label = parse_label(cols.back());
      validate_example(ex);
    } catch (const DataError& e) {
      throw DataError(where() + e.what());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void write_tsv(const std::filesystem::path& path, const std::vector<Example>& examples, Task task) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write data file " + path.string());
  out << header_for(task) << '\n';
  for (const auto& ex : examples) {
    if (ex.task != task) throw ContractError("write_tsv: example " + ex.id + " belongs to another task");
    out << ex.id << '\t' << ex.text_a << '\t';
    if (task != Task::sst) out << ex.text_b.value_or("") << '\t';
    out << (ex.label ? format_double(*ex.label) : "-") << '\n';
  }
}

std::vector<Example> labeled_only(const std::vector<Example>& v) {
  std::vector<Example> out;
  for (const auto& e : v)
    if (e.label) out.push_back(e);
  return out;
}

std::vector<Example> scale_labels(std::vector<Example> examples, double factor) {
  if (!(factor > 0.0)) throw ConfigError("scale_labels: factor must be positive");
  for (auto& ex : examples) {
    if (!ex.label) continue;
    const double scaled = *ex.label * factor;
    try {
      validate_label(ex.task, scaled);
    } catch (const DataError& e) {
      throw DataError("scale_labels: example " + ex.id + ": " + e.what());
    }
    ex.label = scaled;
  }
  return examples;
}

std::vector<Example> mask_labels(std::vector<Example> examples, double lambda, std::uint64_t seed) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("mask_labels: lambda must lie in [0, 1]");
  const auto count = static_cast<std::size_t>(std::floor(lambda * static_cast<double>(examples.size()) + 0.5));
  std::vector<std::size_t> idx(examples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed, 0x6d61736b);
  shuffle(idx, rng);
  for (std::size_t i = 0; i < count; ++i) examples[idx[i]].label.reset();
  return examples;
}

CyclicLoader::CyclicLoader(std::vector<Example> examples, std::size_t batch_size, Rng rng)
    : examples_(std::move(examples)), batch_size_(batch_size), rng_(rng) {
  if (examples_.empty()) throw DataError("CyclicLoader: empty dataset");
  if (batch_size_ == 0) throw ConfigError("CyclicLoader: batch_size must be >= 1");
  order_.resize(examples_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  shuffle(order_, rng_);
}

std::vector<Example> CyclicLoader::next() {
  std::vector<Example> batch;
  batch.reserve(batch_size_);
  while (batch.size() < batch_size_) {
    if (cursor_ == order_.size()) {
      shuffle(order_, rng_);
      cursor_ = 0;
    }
    batch.push_back(examples_[order_[cursor_++]]);
    if (cursor_ == order_.size()) ++cycles_;
  }
  return batch;
}

MultitaskBatch next_multitask_batch(CyclicLoader& sst, CyclicLoader& para, CyclicLoader& sts) {
  return {sst.next(), para.next(), sts.next()};
}

std::size_t steps_per_epoch(const CyclicLoader& sst, const CyclicLoader& para, const CyclicLoader& sts) {
  std::size_t best = 0;
  for (const auto* l : {&sst, &para, &sts}) best = std::max(best, (l->size() + l->batch_size() - 1) / l->batch_size());
  return best;
}

double jaccard(const std::string& a, const std::string& b) {
  auto wa = split_words(a);
  auto wb = split_words(b);
  std::set<std::string> sa(wa.begin(), wa.end()), sb(wb.begin(), wb.end());
  std::size_t inter = 0;
  for (const auto& w : sa) inter += sb.count(w);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

struct WordPools {
  std::vector<std::string> pos, neg, neutral;
};

WordPools make_pools(std::size_t vocab_size) {
  if (vocab_size < 16) throw ConfigError("synthetic corpus: vocab_size must be >= 16");
  WordPools p;
  const std::size_t polar = std::max<std::size_t>(2, vocab_size / 8);
  for (std::size_t i = 0; i < polar; ++i) {
    p.pos.push_back("pos" + std::to_string(i));
    p.neg.push_back("neg" + std::to_string(i));
  }
  for (std::size_t i = 0; i < vocab_size - 2 * polar; ++i) p.neutral.push_back("w" + std::to_string(i));
  return p;
}

const std::string& pick(const std::vector<std::string>& pool, Rng& rng) { return pool[rng.below(pool.size())]; }

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s += ' ';
    s += words[i];
  }
  return s;
}

Example make_sentiment(const WordPools& pools, Rng& rng, const std::string& id) {
  const int target = static_cast<int>(rng.below(5)) - 2;
  const std::size_t extra = rng.below(2);
  std::size_t n_pos = extra, n_neg = extra;
  if (target > 0) n_pos += static_cast<std::size_t>(target);
  if (target < 0) n_neg += static_cast<std::size_t>(-target);
  const std::size_t length = 8;
  std::vector<std::string> words;
  for (std::size_t i = 0; i < n_pos; ++i) words.push_back(pick(pools.pos, rng));
  for (std::size_t i = 0; i < n_neg; ++i) words.push_back(pick(pools.neg, rng));
  while (words.size() < length) words.push_back(pick(pools.neutral, rng));
  shuffle(words, rng);
  const int diff = std::clamp(static_cast<int>(n_pos) - static_cast<int>(n_neg), -2, 2);
  return {id, Task::sst, join(words), std::nullopt, static_cast<double>(diff + 2)};
}

std::pair<std::string, std::string> make_pair_texts(const WordPools& pools, Rng& rng) {
  std::vector<std::string> all = pools.neutral;
  all.insert(all.end(), pools.pos.begin(), pools.pos.end());
  all.insert(all.end(), pools.neg.begin(), pools.neg.end());
  const std::size_t length = 6;
  std::vector<std::string> a;
  while (a.size() < length) {
    const auto& w = pick(all, rng);
    if (std::find(a.begin(), a.end(), w) == a.end()) a.push_back(w);
  }
  // Replace `r` distinct positions with words absent from both sentences so
  // the overlap is exactly length - r.
  std::vector<std::size_t> slots(length);
  for (std::size_t i = 0; i < length; ++i) slots[i] = i;
  shuffle(slots, rng);
  std::vector<std::string> b = a;
  const std::size_t replace = rng.below(length + 1);
  for (std::size_t i = 0; i < replace; ++i) {
    std::string w;
    do {
      w = pick(all, rng);
    } while (std::find(a.begin(), a.end(), w) != a.end() || std::find(b.begin(), b.end(), w) != b.end());
    b[slots[i]] = w;
  }
  return {join(a), join(b)};
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticOptions& opts) {
  const auto pools = make_pools(opts.vocab_size);
  Rng root(opts.seed, 0x73796e74);
  SyntheticCorpus c;
  auto fill = [&](std::vector<Example>& train, std::vector<Example>& dev, Task task, std::uint64_t stream) {
    Rng rng = root.split(stream);
    const std::size_t total = opts.n_examples + opts.n_dev;
    for (std::size_t i = 0; i < total; ++i) {
      const std::string id = to_string(task) + "-" + std::to_string(i);
      Example ex;
      if (task == Task::sst) {
        ex = make_sentiment(pools, rng, id);
      } else {
        auto [a, b] = make_pair_texts(pools, rng);
        const double j = jaccard(a, b);
        ex = {id, task, a, b, task == Task::para ? (j >= 0.5 ? 1.0 : 0.0) : kStsMax * j};
      }
      (i < opts.n_examples ? train : dev).push_back(std::move(ex));
    }
  };
  fill(c.sst_train, c.sst_dev, Task::sst, 1);
  fill(c.para_train, c.para_dev, Task::para, 2);
  fill(c.sts_train, c.sts_dev, Task::sts, 3);
  return c;
}

void write_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus) {
  std::filesystem::create_directories(dir);
  write_tsv(dir / "sst_train.tsv", corpus.sst_train, Task::sst);
  write_tsv(dir / "sst_dev.tsv", corpus.sst_dev, Task::sst);
  write_tsv(dir / "para_train.tsv", corpus.para_train, Task::para);
  write_tsv(dir / "para_dev.tsv", corpus.para_dev, Task::para);
  write_tsv(dir / "sts_train.tsv", corpus.sts_train, Task::sts);
  write_tsv(dir / "sts_dev.tsv", corpus.sts_dev, Task::sts);
  std::vector<std::string> texts;
  for (const auto* set : {&corpus.sst_train, &corpus.para_train, &corpus.sts_train}) {
    for (const auto& ex : *set) {
      texts.push_back(ex.text_a);
      if (ex.text_b) texts.push_back(*ex.text_b);
    }
  }
  Vocab::build(texts).save(dir / "vocab.txt");
}

}  // namespace mtb
