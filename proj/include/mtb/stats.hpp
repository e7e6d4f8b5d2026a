#pragma once

#include <vector>

namespace mtb {

/// Fraction of exact matches. Throws DataError on empty or mismatched input.
double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

/// Sample Pearson r. Throws DataError if either input is constant or has
/// fewer than two values.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 0.5;
};

/// One-tailed two-sample t-test of H1: mean(a) > mean(b). Welch by default;
/// `pooled` switches to Student's equal-variance form.
TTestResult t_test(const std::vector<double>& a, const std::vector<double>& b, bool pooled = false);

/// p-value of t_test(a, b, pooled).
double one_tailed_t_test(const std::vector<double>& a, const std::vector<double>& b, bool pooled = false);

double mean(const std::vector<double>& v);
/// Unbiased sample variance.
double sample_variance(const std::vector<double>& v);

}  // namespace mtb
