#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mtb/data.hpp"
#include "mtb/gan.hpp"
#include "mtb/tensor.hpp"

namespace mtb {

// ---- t-SNE ---------------------------------------------------------------

struct TsneConfig {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  std::size_t exaggeration_iters = 250;
  double momentum = 0.5;
  double final_momentum = 0.8;
  std::size_t momentum_switch = 250;
  double perplexity_tol = 1e-5;
  std::uint64_t seed = 0;
  bool parallel = true;  // omp kernels; the serial ones give identical bits

  void validate(std::size_t n) const;
};

struct TsneResult {
  std::vector<double> coords;    // [n x 2], row-major
  std::vector<double> perplexity;  // realised per point
  std::vector<double> kl;        // KL(P || Q) after each iteration, unexaggerated P
};

/// Exact t-SNE of the rows of `x` ([n x d]). Throws ConfigError when
/// n < 3 * perplexity or d < 2.
TsneResult tsne_embed(const std::vector<double>& x, std::size_t n, std::size_t d, const TsneConfig& cfg);
TsneResult tsne_embed(const Tensor& x, const TsneConfig& cfg);

// ---- embedding dumps -----------------------------------------------------

struct EmbeddingRow {
  std::string source;  // "real" or "generated"
  int label = 0;
  std::vector<double> embedding;
  std::optional<std::pair<double, double>> coords;
};

/// CSV with header source,label,x,y[,e0,...]. x and y are empty until t-SNE
/// has run. Raw columns are written when `raw` is set.
void write_embeddings(const std::filesystem::path& path, const std::vector<EmbeddingRow>& rows, bool raw = true);
std::vector<EmbeddingRow> read_embeddings(const std::filesystem::path& path);

/// Fills coords of every row from a t-SNE over the raw embeddings.
TsneResult project_embeddings(std::vector<EmbeddingRow>& rows, const TsneConfig& cfg);

// ---- lambda sweep --------------------------------------------------------

struct SweepResult {
  double lambda = 0.0;
  std::vector<double> accuracies;  // per-epoch dev accuracy
  double max = 0.0, min = 0.0, mean = 0.0;
};

SweepResult summarize(double lambda, std::vector<double> accuracies);

/// Lower-triangular matrix: entry [r][c] for c < r is the one-tailed p-value
/// that runs at lambdas[c] beat runs at lambdas[r]; the diagonal is 0.5.
/// Entries above the diagonal are NaN.
std::vector<std::vector<double>> p_value_matrix(const std::vector<SweepResult>& results, bool pooled = false);

void write_p_value_csv(const std::filesystem::path& path, const std::vector<SweepResult>& results,
                       const std::vector<std::vector<double>>& matrix);

/// Runs `train(lambda, index)` for every lambda with at most `jobs` in flight
/// and returns results in lambda order. Lambdas must be ascending in [0, 1].
std::vector<SweepResult> run_sweep(const std::vector<double>& lambdas,
                                   const std::function<std::vector<double>(double, std::size_t)>& train,
                                   std::size_t jobs = 1);

struct GanSweepSetup {
  EncoderConfig encoder;
  GanConfig gan;
  GanTrainConfig train;
  Vocab vocab;
  Task task = Task::sst;
  std::vector<Example> train_set;
  std::vector<Example> dev_set;
  std::uint64_t base_seed = 0;
  std::filesystem::path checkpoint_dir;  // when set, each run saves <dir>/lambda_<index>
};

/// Masks a fraction lambda of the training labels, trains a fresh GAN with
/// seed base_seed + index and records per-epoch dev accuracy.
std::vector<double> gan_sweep_run(const GanSweepSetup& setup, double lambda, std::size_t index);

}  // namespace mtb
