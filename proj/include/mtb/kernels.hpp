#pragma once

#include <cstddef>
#include <span>

// Data-parallel inner loops. Every kernel exists twice: `serial` is the
// reference implementation kept for testing, `omp` distributes independent
// rows over OpenMP threads. Both evaluate each output element with the same
// floating-point operation order, so their results are bitwise identical.

namespace mtb::kernels {

/// Batched C (+)= op(A) * op(B) for row-major operands.
///   A block: [m x k], or [k x m] when trans_a
///   B block: [k x n], or [n x k] when trans_b
///   C block: [m x n]
/// Blocks for batch b start at b*m*k, b*k*n and b*m*n respectively.
struct GemmSpec {
  std::size_t batch = 1;
  std::size_t m = 0, n = 0, k = 0;
  bool trans_a = false;
  bool trans_b = false;
  bool accumulate = false;
};

/// Exact t-SNE gradient inputs: `p` is the symmetric joint affinity matrix
/// [n x n] (already exaggerated), `y` the [n x dims] embedding.
struct TsneGradSpec {
  std::size_t n = 0;
  std::size_t dims = 2;
};

namespace serial {
void gemm(const GemmSpec& spec, std::span<const double> a, std::span<const double> b, std::span<double> c);

/// Student-t kernel numerators q_ij = 1/(1+|y_i-y_j|^2) (q_ii = 0) and per-row
/// sums; returns the total normaliser Z summed over rows in row order.
double tsne_kernel(const TsneGradSpec& spec, std::span<const double> y, std::span<double> num);
void tsne_gradient(const TsneGradSpec& spec, std::span<const double> p, std::span<const double> num,
                   double z, std::span<const double> y, std::span<double> grad);
/// Gaussian conditional affinities for row i given squared distances; searches
/// the precision so exp(entropy) hits `perplexity`. Returns achieved perplexity.
double tsne_row_affinity(std::span<const double> dist_row, std::size_t self, double perplexity,
                         double tol, std::span<double> p_row);
void tsne_affinities(std::size_t n, std::span<const double> dist, double perplexity, double tol,
                     std::span<double> p, std::span<double> achieved);
}  // namespace serial

namespace omp {
void gemm(const GemmSpec& spec, std::span<const double> a, std::span<const double> b, std::span<double> c);
double tsne_kernel(const TsneGradSpec& spec, std::span<const double> y, std::span<double> num);
void tsne_gradient(const TsneGradSpec& spec, std::span<const double> p, std::span<const double> num,
                   double z, std::span<const double> y, std::span<double> grad);
void tsne_affinities(std::size_t n, std::span<const double> dist, double perplexity, double tol,
                     std::span<double> p, std::span<double> achieved);
}  // namespace omp

/// Work (in multiply-adds) below which the omp kernels run on one thread.
inline constexpr std::size_t kParallelThreshold = 1 << 15;

}  // namespace mtb::kernels
