#include "mtb/gradcheck.hpp"

#include <cmath>

namespace mtb {

GradCheckResult finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> wrt, double step) {
  for (auto& t : wrt) {
    t.zero_grad();
    t.set_requires_grad(true);
  }
  loss().backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(wrt.size());
  for (auto& t : wrt) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(t.numel(), 0.0);
    t.zero_grad();
  }

  GradCheckResult res;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto vals = wrt[ti].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + step;
      const double up = loss().item();
      vals[i] = orig - step;
      const double down = loss().item();
      vals[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[ti][i];
      const double err = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      if (err > res.max_rel_error) res = {err, ti, i, a, numeric};
    }
  }
  return res;
}

GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
  Tensor leaf = Tensor::from(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), true);
  return finite_diff_check([&] { return f(leaf); }, {leaf}, step);
}

}  // namespace mtb
