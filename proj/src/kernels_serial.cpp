#include "kernel_rows.hpp"
#include "mtb/kernels.hpp"

namespace mtb::kernels::serial {

void gemm(const GemmSpec& spec, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  const std::size_t rows = spec.batch * spec.m;
  for (std::size_t r = 0; r < rows; ++r) rows::gemm_row(spec, r, a, b, c);
}

double tsne_kernel(const TsneGradSpec& spec, std::span<const double> y, std::span<double> num) {
  double z = 0.0;
  for (std::size_t i = 0; i < spec.n; ++i) z += rows::tsne_kernel_row(spec, i, y, num);
  return z;
}

void tsne_gradient(const TsneGradSpec& spec, std::span<const double> p, std::span<const double> num,
                   double z, std::span<const double> y, std::span<double> grad) {
  for (std::size_t i = 0; i < spec.n; ++i) rows::tsne_gradient_row(spec, i, p, num, z, y, grad);
}

double tsne_row_affinity(std::span<const double> dist_row, std::size_t self, double perplexity,
                         double tol, std::span<double> p_row) {
  return rows::affinity_row(dist_row, self, perplexity, tol, p_row);
}

void tsne_affinities(std::size_t n, std::span<const double> dist, double perplexity, double tol,
                     std::span<double> p, std::span<double> achieved) {
  for (std::size_t i = 0; i < n; ++i) {
    achieved[i] = rows::affinity_row(dist.subspan(i * n, n), i, perplexity, tol, p.subspan(i * n, n));
  }
}

}  // namespace mtb::kernels::serial
