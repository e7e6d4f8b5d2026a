#pragma once

#include <functional>
#include <vector>

#include "mtb/tensor.hpp"

namespace mtb {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;  // index into the checked list
  std::size_t worst_index = 0;   // flat coordinate within that tensor
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences. Error per coordinate is |a - c| / (|a| + |c| + 1e-12).
/// `f` must be deterministic (dropout off or mask frozen).
GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  double step = 1e-4);

/// Multi-tensor variant: `loss` rebuilds the graph from the live values of
/// `wrt`, which are perturbed in place and restored.
GradCheckResult finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> wrt,
                                  double step = 1e-4);

}  // namespace mtb
