#pragma once

#include <cstddef>
#include <vector>

#include "mtb/rng.hpp"
#include "mtb/tensor.hpp"

// Differentiable primitives. Every function here records a graph node when
// any input requires a gradient and ships with a finite-difference test.
namespace mtb::ops {

/// [.. x k] x [k x n] -> [.. x n]. Leading axes of `a` are flattened into rows.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched product over matching leading axes: [.. x m x k] x [.. x k x n],
/// or [.. x n x k] for `b` when transpose_b.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

/// Elementwise sum. `b` may also be a suffix of `a`'s shape (bias broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product of equal shapes.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
/// Concatenation along the last axis; leading axes must agree.
Tensor concat(const std::vector<Tensor>& parts);
/// |a - b| elementwise. The subgradient at a == b is 0.
Tensor abs_diff(const Tensor& a, const Tensor& b);

Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Softmax over the last axis, max-subtracted.
Tensor softmax(const Tensor& x);
/// Normalises over the last axis, then gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-12);
/// Inverted dropout. Identity when !training or p == 0. Throws ConfigError
/// unless 0 <= p < 1.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor square(const Tensor& x);
/// Natural log with the argument clamped to >= kLogFloor.
Tensor log(const Tensor& x);
inline constexpr double kLogFloor = 1e-12;

/// [n x d] -> [d], averaging over rows. n == 0 yields zeros.
Tensor mean_rows(const Tensor& x);

// Structural ops.
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
/// Rows of `table` [V x H] selected by `ids` -> [ids.size() x H].
Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids);
/// Removes `axis` by taking position `index` along it.
Tensor select(const Tensor& x, std::size_t axis, std::size_t index);

}  // namespace mtb::ops
