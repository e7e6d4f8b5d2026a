#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mtb/rng.hpp"

namespace mtb {

enum class Task { sst, para, sts };

std::string to_string(Task t);
Task parse_task(const std::string& s);

struct Example {
  std::string id;
  Task task = Task::sst;
  std::string text_a;
  std::optional<std::string> text_b;
  std::optional<double> label;  // absent = unlabeled

  bool operator==(const Example&) const = default;
};

/// Throws DataError if the example violates its task's text/label rules.
void validate_example(const Example& ex);
/// Throws DataError unless `label` is valid for `task`.
void validate_label(Task task, double label);

/// Tab-separated with a header row. Columns:
///   sst:  id, sentence, label
///   para: id, sentence1, sentence2, is_duplicate
///   sts:  id, sentence1, sentence2, similarity
/// A label of "-" marks an unlabeled row.
std::vector<Example> load_tsv(const std::filesystem::path& path, Task task);
void write_tsv(const std::filesystem::path& path, const std::vector<Example>& examples, Task task);

/// Drops examples without a label.
std::vector<Example> labeled_only(const std::vector<Example>& v);

/// label <- label * factor on labeled rows.
std::vector<Example> scale_labels(std::vector<Example> examples, double factor);

/// Removes the labels of exactly round(lambda * N) examples chosen uniformly
/// without replacement from a stream seeded by `seed`. Order is preserved.
std::vector<Example> mask_labels(std::vector<Example> examples, double lambda, std::uint64_t seed);

/// Endless batches over a dataset; reshuffles each time the cursor wraps.
class CyclicLoader {
 public:
  CyclicLoader(std::vector<Example> examples, std::size_t batch_size, Rng rng);

  std::vector<Example> next();
  /// Completed passes over the dataset.
  std::size_t cycles() const { return cycles_; }
  std::size_t size() const { return examples_.size(); }
  std::size_t batch_size() const { return batch_size_; }

 private:
  std::vector<Example> examples_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t cycles_ = 0;
  std::size_t batch_size_;
  Rng rng_;
};

struct MultitaskBatch {
  std::vector<Example> sst, para, sts;
};

MultitaskBatch next_multitask_batch(CyclicLoader& sst, CyclicLoader& para, CyclicLoader& sts);

/// Steps in one epoch: one pass over the largest of the three loaders.
std::size_t steps_per_epoch(const CyclicLoader& sst, const CyclicLoader& para, const CyclicLoader& sts);

struct SyntheticOptions {
  std::size_t n_examples = 500;  // train examples per task
  std::size_t n_dev = 100;       // dev examples per task
  std::uint64_t seed = 0;
  std::size_t vocab_size = 60;
};

struct SyntheticCorpus {
  std::vector<Example> sst_train, sst_dev, para_train, para_dev, sts_train, sts_dev;
};

/// Rule-labelled toy corpus:
///   sentiment  = clamp(#positive - #negative, -2, 2) + 2
///   paraphrase = Jaccard(words_a, words_b) >= 0.5
///   similarity = 5 * Jaccard(words_a, words_b)
SyntheticCorpus generate_synthetic(const SyntheticOptions& opts);

double jaccard(const std::string& a, const std::string& b);

/// Writes <task>_train.tsv / <task>_dev.tsv for all tasks plus vocab.txt.
void write_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus);

}  // namespace mtb
