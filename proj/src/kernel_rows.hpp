#pragma once

// Per-row bodies shared by the serial and OpenMP kernels. Keeping a single
// definition is what makes the two variants bitwise identical.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

#include "mtb/kernels.hpp"

namespace mtb::kernels::rows {

inline void gemm_row(const GemmSpec& s, std::size_t row, std::span<const double> a,
                     std::span<const double> b, std::span<double> c) {
  const std::size_t bi = row / s.m;
  const std::size_t i = row % s.m;
  const double* ab = a.data() + bi * s.m * s.k;
  const double* bb = b.data() + bi * s.k * s.n;
  double* cr = c.data() + bi * s.m * s.n + i * s.n;
  auto a_at = [&](std::size_t p) { return s.trans_a ? ab[p * s.m + i] : ab[i * s.k + p]; };
  if (!s.accumulate) {
    for (std::size_t j = 0; j < s.n; ++j) cr[j] = 0.0;
  }
  if (!s.trans_b) {
    for (std::size_t p = 0; p < s.k; ++p) {
      const double av = a_at(p);
      const double* br = bb + p * s.n;
      for (std::size_t j = 0; j < s.n; ++j) cr[j] += av * br[j];
    }
  } else {
    for (std::size_t j = 0; j < s.n; ++j) {
      const double* br = bb + j * s.k;
      double acc = 0.0;
      for (std::size_t p = 0; p < s.k; ++p) acc += a_at(p) * br[p];
      cr[j] += acc;
    }
  }
}

inline double tsne_kernel_row(const TsneGradSpec& s, std::size_t i, std::span<const double> y,
                              std::span<double> num) {
  double row_sum = 0.0;
  const double* yi = y.data() + i * s.dims;
  for (std::size_t j = 0; j < s.n; ++j) {
    double q = 0.0;
    if (j != i) {
      const double* yj = y.data() + j * s.dims;
      double d2 = 0.0;
      for (std::size_t d = 0; d < s.dims; ++d) {
        const double diff = yi[d] - yj[d];
        d2 += diff * diff;
      }
      q = 1.0 / (1.0 + d2);
    }
    num[i * s.n + j] = q;
    row_sum += q;
  }
  return row_sum;
}

inline void tsne_gradient_row(const TsneGradSpec& s, std::size_t i, std::span<const double> p,
                              std::span<const double> num, double z, std::span<const double> y,
                              std::span<double> grad) {
  const double* yi = y.data() + i * s.dims;
  double* gi = grad.data() + i * s.dims;
  for (std::size_t d = 0; d < s.dims; ++d) gi[d] = 0.0;
  for (std::size_t j = 0; j < s.n; ++j) {
    if (j == i) continue;
    const double q = num[i * s.n + j];
    const double mult = (p[i * s.n + j] - q / z) * q;
    const double* yj = y.data() + j * s.dims;
    for (std::size_t d = 0; d < s.dims; ++d) gi[d] += mult * (yi[d] - yj[d]);
  }
  for (std::size_t d = 0; d < s.dims; ++d) gi[d] *= 4.0;
}

/// Writes conditional p_{j|i} into p_row (p_row[self] = 0); returns the
/// perplexity realised by the final precision.
inline double affinity_row(std::span<const double> dist_row, std::size_t self, double perplexity,
                           double tol, std::span<double> p_row) {
  const std::size_t n = dist_row.size();
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    if (j != self && dist_row[j] < dmin) dmin = dist_row[j];
  }
  double beta = 1.0;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  double achieved = 0.0;
  for (int iter = 0; iter < 500; ++iter) {
    double sum_p = 0.0;
    double sum_dp = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == self) {
        p_row[j] = 0.0;
        continue;
      }
      const double shifted = dist_row[j] - dmin;
      const double v = std::exp(-beta * shifted);
      p_row[j] = v;
      sum_p += v;
      sum_dp += shifted * v;
    }
    const double entropy = std::log(sum_p) + beta * sum_dp / sum_p;
    achieved = std::exp(entropy);
    for (std::size_t j = 0; j < n; ++j) p_row[j] /= sum_p;
    const double diff = achieved - perplexity;
    if (std::abs(diff) < tol) break;
    if (diff > 0.0) {
      // Distribution too flat: sharpen.
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = 0.5 * (beta + lo);
    }
  }
  return achieved;
}

}  // namespace mtb::kernels::rows
