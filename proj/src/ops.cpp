#include "mtb/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mtb/error.hpp"
#include "mtb/kernels.hpp"

namespace mtb::ops {

namespace {

using detail::Node;

std::vector<double>& in_grad(Node& n, std::size_t i) { return n.inputs[i]->grad_buffer(); }
bool wants(const Node& n, std::size_t i) { return n.inputs[i]->requires_grad; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [deriv](Node& self) {
    auto& g = in_grad(self, 0);
    const auto& xv = self.inputs[0]->values;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(xv[i], self.values[i]);
  });
}

std::size_t last_dim(const Tensor& x, const char* op) {
  if (x.dim() == 0) throw DimensionError(std::string(op) + ": scalar input has no last axis");
  return x.shape().back();
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() < 1 || b.dim() != 2 || a.shape().back() != b.size(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  }
  const std::size_t k = b.size(0), n = b.size(1), m = a.numel() / std::max<std::size_t>(k, 1);
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<double> out(m * n);
  kernels::omp::gemm({.m = m, .n = n, .k = k}, a.values(), b.values(), out);
  return Tensor::make_result(std::move(out_shape), std::move(out), {a, b}, [m, n, k](Node& self) {
    if (wants(self, 0)) {
      // dA = dC * B^T
      kernels::omp::gemm({.m = m, .n = k, .k = n, .trans_b = true, .accumulate = true}, self.grad,
                         self.inputs[1]->values, in_grad(self, 0));
    }
    if (wants(self, 1)) {
      // dB = A^T * dC
      kernels::omp::gemm({.m = k, .n = n, .k = m, .trans_a = true, .accumulate = true},
                         self.inputs[0]->values, self.grad, in_grad(self, 1));
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.dim() < 2 || b.dim() != a.dim()) {
    throw DimensionError("bmm: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  }
  const std::size_t r = a.dim();
  const std::size_t m = a.size(r - 2), k = a.size(r - 1);
  const std::size_t bk = transpose_b ? b.size(r - 1) : b.size(r - 2);
  const std::size_t n = transpose_b ? b.size(r - 2) : b.size(r - 1);
  bool lead_ok = bk == k;
  for (std::size_t i = 0; i + 2 < r; ++i) lead_ok = lead_ok && a.size(i) == b.size(i);
  if (!lead_ok) {
    throw DimensionError("bmm: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()) +
                         (transpose_b ? " (transposed)" : ""));
  }
  const std::size_t batch = a.numel() / std::max<std::size_t>(m * k, 1);
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<double> out(batch * m * n);
  kernels::omp::gemm({.batch = batch, .m = m, .n = n, .k = k, .trans_b = transpose_b}, a.values(), b.values(), out);
  return Tensor::make_result(
      std::move(out_shape), std::move(out), {a, b}, [batch, m, n, k, transpose_b](Node& self) {
        if (wants(self, 0)) {
          // dA = dC * op(B)^T
          kernels::omp::gemm(
              {.batch = batch, .m = m, .n = k, .k = n, .trans_b = !transpose_b, .accumulate = true},
              self.grad, self.inputs[1]->values, in_grad(self, 0));
        }
        if (wants(self, 1)) {
          if (transpose_b) {
            // B is [n x k]: dB = dC^T * A
            kernels::omp::gemm({.batch = batch, .m = n, .n = k, .k = m, .trans_a = true, .accumulate = true},
                               self.grad, self.inputs[0]->values, in_grad(self, 1));
          } else {
            kernels::omp::gemm({.batch = batch, .m = k, .n = n, .k = m, .trans_a = true, .accumulate = true},
                               self.inputs[0]->values, self.grad, in_grad(self, 1));
          }
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  const bool suffix = bs.size() <= as.size() && std::equal(bs.begin(), bs.end(), as.end() - static_cast<long>(bs.size()));
  if (!suffix) {
    throw DimensionError("add: shape mismatch " + shape_str(as) + " vs " + shape_str(bs));
  }
  const std::size_t inner = b.numel();
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % inner];
  return Tensor::make_result(as, std::move(out), {a, b}, [inner](Node& self) {
    if (wants(self, 0)) {
      auto& g = in_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& g = in_grad(self, 1);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % inner] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.inputs[0]->values;
    const auto& bv = self.inputs[1]->values;
    if (wants(self, 0)) {
      auto& g = in_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants(self, 1)) {
      auto& g = in_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape pl(p.shape().begin(), p.shape().end() - 1);
    if (p.dim() != parts[0].dim() || pl != lead) {
      throw DimensionError("concat: incompatible shapes " + shape_str(parts[0].shape()) + " and " +
                           shape_str(p.shape()));
    }
    widths.push_back(p.shape().back());
    total += widths.back();
  }
  const std::size_t rows = shape_numel(lead);
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    auto v = parts[pi].values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.begin() + static_cast<long>(r * widths[pi]), widths[pi], out.begin() + static_cast<long>(r * total + offset));
    }
    offset += widths[pi];
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  return Tensor::make_result(std::move(out_shape), std::move(out), parts, [rows, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t pi = 0; pi < widths.size(); ++pi) {
      if (wants(self, pi)) {
        auto& g = in_grad(self, pi);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < widths[pi]; ++c) g[r * widths[pi] + c] += self.grad[r * total + off + c];
        }
      }
      off += widths[pi];
    }
  });
}

Tensor abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "abs_diff");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(a.at(i) - b.at(i));
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.inputs[0]->values;
    const auto& bv = self.inputs[1]->values;
    for (std::size_t side = 0; side < 2; ++side) {
      if (!wants(self, side)) continue;
      auto& g = in_grad(self, side);
      const double sgn_side = side == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = av[i] - bv[i];
        const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        g[i] += sgn_side * s * self.grad[i];
      }
    }
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softmax(const Tensor& x) {
  const std::size_t c = last_dim(x, "softmax");
  if (c == 0) throw DimensionError("softmax: empty last axis");
  const std::size_t rows = x.numel() / c;
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * c;
    double* o = out.data() + r * c;
    const double mx = *std::max_element(in, in + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [rows, c](Node& self) {
    auto& g = in_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.values.data() + r * c;
      const double* dy = self.grad.data() + r * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) g[r * c + j] += y[j] * (dy[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = last_dim(x, "layer_norm");
  if (d == 0) throw DimensionError("layer_norm: empty last axis");
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gamma/beta " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                         " do not match last axis of " + shape_str(x.shape()));
  }
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.numel());
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (in[j] - mu) * inv_std[r];
      out[r * d + j] = gv[j] * xhat[r * d + j] + bv[j];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& gv = self.inputs[1]->values;
        if (wants(self, 0)) {
          auto& g = in_grad(self, 0);
          std::vector<double> dxhat(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dxhat = 0.0;
            double mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dxhat[j] = self.grad[r * d + j] * gv[j];
              mean_dxhat += dxhat[j];
              mean_dxhat_xhat += dxhat[j] * xhat[r * d + j];
            }
            mean_dxhat /= static_cast<double>(d);
            mean_dxhat_xhat /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              g[r * d + j] += inv_std[r] * (dxhat[j] - mean_dxhat - xhat[r * d + j] * mean_dxhat_xhat);
            }
          }
        }
        if (wants(self, 1)) {
          auto& g = in_grad(self, 1);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j] * xhat[r * d + j];
        }
        if (wants(self, 2)) {
          auto& g = in_grad(self, 2);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j];
        }
      });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const std::size_t n = x.numel();
  const std::uint64_t base = rng.reserve(n);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(n);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    mask[i] = rng.uniform_at(base + i) >= p ? keep_scale : 0.0;
    out[i] = x.at(i) * mask[i];
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    auto& g = in_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return Tensor::make_result({}, {s}, {x}, [](Node& self) {
    auto& g = in_grad(self, 0);
    for (auto& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(std::max(v, kLogFloor)); },
      [](double v, double) { return v > kLogFloor ? 1.0 / v : 0.0; });
}

Tensor mean_rows(const Tensor& x) {
  if (x.dim() != 2) throw DimensionError("mean_rows: expected a matrix, got " + shape_str(x.shape()));
  const std::size_t n = x.size(0), d = x.size(1);
  std::vector<double> out(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) out[j] += x.at(r * d + j);
  const double inv = n ? 1.0 / static_cast<double>(n) : 0.0;
  for (auto& v : out) v *= inv;
  return Tensor::make_result({d}, std::move(out), {x}, [n, d, inv](Node& self) {
    auto& g = in_grad(self, 0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[j] * inv;
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    auto& g = in_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.dim();
  std::vector<bool> used(r, false);
  bool ok = perm.size() == r;
  for (auto p : perm) {
    ok = ok && p < r && !used[p];
    if (ok) used[p] = true;
  }
  if (!ok) throw DimensionError("permute: invalid axis order for shape " + shape_str(x.shape()));
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * x.size(i);
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.size(perm[i]);
  // src_index[o] is the flat input offset for flat output offset o.
  std::vector<std::size_t> src_index(x.numel());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t o = 0; o < src_index.size(); ++o) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[perm[i]];
    src_index[o] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = x.at(src_index[o]);
  return Tensor::make_result(std::move(out_shape), std::move(out), {x}, [src_index = std::move(src_index)](Node& self) {
    auto& g = in_grad(self, 0);
    for (std::size_t o = 0; o < src_index.size(); ++o) g[src_index[o]] += self.grad[o];
  });
}

Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
  if (table.dim() != 2) throw DimensionError("gather_rows: table must be a matrix, got " + shape_str(table.shape()));
  const std::size_t v = table.size(0), h = table.size(1);
  std::vector<double> out(ids.size() * h);
  auto tv = table.values();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= v) {
      throw DataError("gather_rows: id " + std::to_string(ids[r]) + " at position " + std::to_string(r) +
                      " exceeds table size " + std::to_string(v));
    }
    std::copy_n(tv.begin() + static_cast<long>(ids[r] * h), h, out.begin() + static_cast<long>(r * h));
  }
  return Tensor::make_result({ids.size(), h}, std::move(out), {table}, [ids, h](Node& self) {
    auto& g = in_grad(self, 0);
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t j = 0; j < h; ++j) g[ids[r] * h + j] += self.grad[r * h + j];
  });
}

Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
  if (axis >= x.dim() || index >= x.size(axis)) {
    throw DimensionError("select: index " + std::to_string(index) + " on axis " + std::to_string(axis) +
                         " out of range for " + shape_str(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.size(i);
  for (std::size_t i = axis + 1; i < x.dim(); ++i) inner *= x.size(i);
  const std::size_t len = x.size(axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<long>(axis));
  std::vector<double> out(outer * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] = x.at((o * len + index) * inner + i);
  return Tensor::make_result(std::move(out_shape), std::move(out), {x}, [outer, inner, len, index](Node& self) {
    auto& g = in_grad(self, 0);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) g[(o * len + index) * inner + i] += self.grad[o * inner + i];
  });
}

}  // namespace mtb::ops
