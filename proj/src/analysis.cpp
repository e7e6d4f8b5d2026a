#include "mtb/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "mtb/checkpoint.hpp"
#include "mtb/error.hpp"
#include "mtb/kernels.hpp"
#include "mtb/stats.hpp"

namespace mtb {

void TsneConfig::validate(std::size_t n) const {
  if (!(perplexity > 0.0)) throw ConfigError("tsne: perplexity must be positive");
  if (static_cast<double>(n) < 3.0 * perplexity) {
    throw ConfigError("tsne: " + std::to_string(n) + " points is too few for perplexity " +
                      std::to_string(perplexity) + " (need n >= 3 * perplexity)");
  }
  if (iterations == 0) throw ConfigError("tsne: iterations must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("tsne: learning_rate must be positive");
  if (!(exaggeration >= 1.0)) throw ConfigError("tsne: exaggeration must be >= 1");
  if (!(perplexity_tol > 0.0)) throw ConfigError("tsne: perplexity_tol must be positive");
}

namespace {

double kl_divergence(const std::vector<double>& p, const std::vector<double>& num, double z) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0 || num[i] <= 0.0) continue;
    kl += p[i] * std::log(p[i] * z / num[i]);
  }
  return kl;
}

}  // namespace

TsneResult tsne_embed(const std::vector<double>& x, std::size_t n, std::size_t d, const TsneConfig& cfg) {
  cfg.validate(n);
  if (d < 2) throw ConfigError("tsne: input dimension must be >= 2");
  if (x.size() != n * d) throw DimensionError("tsne: expected " + std::to_string(n * d) + " values");

  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = x[i * d + c] - x[j * d + c];
        s += diff * diff;
      }
      dist[i * n + j] = dist[j * n + i] = s;
    }

  TsneResult out;
  std::vector<double> cond(n * n);
  out.perplexity.resize(n);
  if (cfg.parallel) {
    kernels::omp::tsne_affinities(n, dist, cfg.perplexity, cfg.perplexity_tol, cond, out.perplexity);
  } else {
    kernels::serial::tsne_affinities(n, dist, cfg.perplexity, cfg.perplexity_tol, cond, out.perplexity);
  }

  std::vector<double> p(n * n), p_exag(n * n);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      p[i * n + j] = i == j ? 0.0 : std::max((cond[i * n + j] + cond[j * n + i]) / denom, 1e-12);
      p_exag[i * n + j] = p[i * n + j] * cfg.exaggeration;
    }

  Rng rng(cfg.seed, 0x74736e65);
  std::vector<double>& y = out.coords;
  y.resize(n * 2);
  for (auto& v : y) v = 1e-2 * rng.normal();

  kernels::TsneGradSpec spec{.n = n, .dims = 2};
  std::vector<double> num(n * n), grad(n * 2), update(n * 2, 0.0), gains(n * 2, 1.0);
  auto kernel = [&] {
    return cfg.parallel ? kernels::omp::tsne_kernel(spec, y, num) : kernels::serial::tsne_kernel(spec, y, num);
  };

  auto center = [&] {
    for (std::size_t c = 0; c < 2; ++c) {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += y[i * 2 + c];
      m /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) y[i * 2 + c] -= m;
    }
  };

  // After early exaggeration a step that raises KL is rejected: the previous
  // coordinates come back, momentum and gains reset and the step halves. This
  // keeps the reported KL monotone once momentum would otherwise oscillate
  // around the optimum.
  double z = kernel();
  double kl_prev = std::numeric_limits<double>::infinity();
  double step_scale = 1.0;
  std::vector<double> y_prev;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const auto& pe = it < cfg.exaggeration_iters ? p_exag : p;
    if (cfg.parallel) {
      kernels::omp::tsne_gradient(spec, pe, num, z, y, grad);
    } else {
      kernels::serial::tsne_gradient(spec, pe, num, z, y, grad);
    }
    const bool guarded = it >= cfg.exaggeration_iters;
    if (guarded) y_prev = y;
    const double mom = it < cfg.momentum_switch ? cfg.momentum : cfg.final_momentum;
    const double lr = cfg.learning_rate * step_scale;
    for (std::size_t k = 0; k < y.size(); ++k) {
      // Delta-bar-delta gains, as in the reference implementation.
      gains[k] = (grad[k] > 0.0) != (update[k] > 0.0) ? gains[k] + 0.2 : std::max(gains[k] * 0.8, 0.01);
      update[k] = mom * update[k] - lr * gains[k] * grad[k];
      y[k] += update[k];
    }
    center();
    z = kernel();
    double kl = kl_divergence(p, num, z);
    if (guarded && kl > kl_prev) {
      y = y_prev;
      z = kernel();
      kl = kl_prev;
      std::fill(update.begin(), update.end(), 0.0);
      std::fill(gains.begin(), gains.end(), 1.0);
      step_scale *= 0.5;
    } else if (guarded) {
      step_scale = std::min(1.0, 2.0 * step_scale);
    }
    out.kl.push_back(kl);
    kl_prev = kl;
  }
  return out;
}

TsneResult tsne_embed(const Tensor& x, const TsneConfig& cfg) {
  if (x.dim() != 2) throw DimensionError("tsne: expected a matrix, got " + shape_str(x.shape()));
  auto v = x.values();
  return tsne_embed(std::vector<double>(v.begin(), v.end()), x.size(0), x.size(1), cfg);
}

namespace {

std::string format_double(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw DataError(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_embeddings(const std::filesystem::path& path, const std::vector<EmbeddingRow>& rows, bool raw) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  const std::size_t h = rows.empty() ? 0 : rows.front().embedding.size();
  f << "source,label,x,y";
  if (raw)
    for (std::size_t c = 0; c < h; ++c) f << ",e" << c;
  f << '\n';
  for (const auto& r : rows) {
    if (r.embedding.size() != h) throw DimensionError("write_embeddings: ragged embedding rows");
    f << r.source << ',' << r.label << ',';
    if (r.coords) f << format_double(r.coords->first) << ',' << format_double(r.coords->second);
    else f << ',';
    if (raw)
      for (double v : r.embedding) f << ',' << format_double(v);
    f << '\n';
  }
}

std::vector<EmbeddingRow> read_embeddings(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line.rfind("source,label,x,y", 0) != 0) {
    throw DataError(path.string() + ":1: expected header source,label,x,y");
  }
  const std::size_t width = split_commas(line).size();
  std::vector<EmbeddingRow> rows;
  for (std::size_t no = 2; std::getline(f, line); ++no) {
    if (line.empty()) continue;
    auto cells = split_commas(line);
    if (cells.size() != width) {
      throw DataError(path.string() + ":" + std::to_string(no) + ": expected " + std::to_string(width) + " fields");
    }
    EmbeddingRow r;
    r.source = cells[0];
    if (r.source != "real" && r.source != "generated") {
      throw DataError(path.string() + ":" + std::to_string(no) + ": source must be real or generated");
    }
    r.label = static_cast<int>(parse_double(cells[1], path, no));
    if (!cells[2].empty() || !cells[3].empty()) {
      r.coords = std::make_pair(parse_double(cells[2], path, no), parse_double(cells[3], path, no));
    }
    for (std::size_t c = 4; c < cells.size(); ++c) r.embedding.push_back(parse_double(cells[c], path, no));
    rows.push_back(std::move(r));
  }
  return rows;
}

TsneResult project_embeddings(std::vector<EmbeddingRow>& rows, const TsneConfig& cfg) {
  if (rows.empty()) throw DataError("project_embeddings: no rows");
  const std::size_t d = rows.front().embedding.size();
  std::vector<double> x;
  x.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (r.embedding.size() != d) throw DimensionError("project_embeddings: ragged embedding rows");
    x.insert(x.end(), r.embedding.begin(), r.embedding.end());
  }
  auto res = tsne_embed(x, rows.size(), d, cfg);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].coords = std::make_pair(res.coords[2 * i], res.coords[2 * i + 1]);
  return res;
}

SweepResult summarize(double lambda, std::vector<double> accuracies) {
  if (accuracies.empty()) throw DataError("summarize: no accuracies for lambda " + std::to_string(lambda));
  SweepResult r;
  r.lambda = lambda;
  r.max = *std::max_element(accuracies.begin(), accuracies.end());
  r.min = *std::min_element(accuracies.begin(), accuracies.end());
  r.mean = mean(accuracies);
  r.accuracies = std::move(accuracies);
  return r;
}

std::vector<std::vector<double>> p_value_matrix(const std::vector<SweepResult>& results, bool pooled) {
  const std::size_t m = results.size();
  std::vector<std::vector<double>> out(m, std::vector<double>(m, std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t c = 0; c < m; ++c) {
    out[c][c] = 0.5;
    for (std::size_t r = c + 1; r < m; ++r) out[r][c] = one_tailed_t_test(results[c].accuracies, results[r].accuracies, pooled);
  }
  return out;
}

void write_p_value_csv(const std::filesystem::path& path, const std::vector<SweepResult>& results,
                       const std::vector<std::vector<double>>& matrix) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << "lambda";
  for (const auto& r : results) f << ',' << format_double(r.lambda);
  f << '\n';
  for (std::size_t r = 0; r < results.size(); ++r) {
    f << format_double(results[r].lambda);
    for (std::size_t c = 0; c < results.size(); ++c) {
      f << ',';
      if (c <= r) f << format_double(matrix[r][c]);
    }
    f << '\n';
  }
}

std::vector<SweepResult> run_sweep(const std::vector<double>& lambdas,
                                   const std::function<std::vector<double>(double, std::size_t)>& train,
                                   std::size_t jobs) {
  if (lambdas.empty()) throw ConfigError("sweep: no lambdas given");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] >= 0.0 && lambdas[i] <= 1.0)) throw ConfigError("sweep: lambda must lie in [0, 1]");
    if (i > 0 && !(lambdas[i] > lambdas[i - 1])) throw ConfigError("sweep: lambdas must be strictly ascending");
  }
  std::vector<SweepResult> out(lambdas.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < lambdas.size();) {
      try {
        out[i] = summarize(lambdas[i], train(lambdas[i], i));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = lambdas.size();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(jobs, 1, lambdas.size());
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<double> gan_sweep_run(const GanSweepSetup& setup, double lambda, std::size_t index) {
  const std::uint64_t seed = setup.base_seed + index;
  GanModel model(setup.encoder, setup.gan, setup.vocab, setup.task, seed);
  GanTrainConfig tc = setup.train;
  tc.seed = seed;
  auto run = train_gan(model, mask_labels(setup.train_set, lambda, seed), setup.dev_set, tc);
  std::vector<double> acc;
  for (const auto& e : run.epochs) acc.push_back(e.dev_accuracy);
  if (!setup.checkpoint_dir.empty())
    save_checkpoint(setup.checkpoint_dir / ("lambda_" + std::to_string(index)), model.params(),
                    {{"kind", "gan"}, {"lambda", lambda}, {"seed", seed}});
  return acc;
}

}  // namespace mtb
