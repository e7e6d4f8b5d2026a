#include <omp.h>

#include <vector>

#include "kernel_rows.hpp"
#include "mtb/kernels.hpp"

namespace mtb::kernels::omp {

void gemm(const GemmSpec& spec, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  const auto rows = static_cast<long>(spec.batch * spec.m);
  const bool par = spec.batch * spec.m * spec.n * spec.k >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (long r = 0; r < rows; ++r) rows::gemm_row(spec, static_cast<std::size_t>(r), a, b, c);
}

double tsne_kernel(const TsneGradSpec& spec, std::span<const double> y, std::span<double> num) {
  std::vector<double> row_sums(spec.n);
  const auto n = static_cast<long>(spec.n);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    row_sums[static_cast<std::size_t>(i)] = rows::tsne_kernel_row(spec, static_cast<std::size_t>(i), y, num);
  }
  // Serial reduction in row order keeps Z identical to the reference kernel.
  double z = 0.0;
  for (double s : row_sums) z += s;
  return z;
}

void tsne_gradient(const TsneGradSpec& spec, std::span<const double> p, std::span<const double> num,
                   double z, std::span<const double> y, std::span<double> grad) {
  const auto n = static_cast<long>(spec.n);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) rows::tsne_gradient_row(spec, static_cast<std::size_t>(i), p, num, z, y, grad);
}

void tsne_affinities(std::size_t n, std::span<const double> dist, double perplexity, double tol,
                     std::span<double> p, std::span<double> achieved) {
  const auto rows_n = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (long li = 0; li < rows_n; ++li) {
    const auto i = static_cast<std::size_t>(li);
    achieved[i] = rows::affinity_row(dist.subspan(i * n, n), i, perplexity, tol, p.subspan(i * n, n));
  }
}

}  // namespace mtb::kernels::omp
