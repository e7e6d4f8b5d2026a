#include "mtb/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtb/error.hpp"

namespace mtb {

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.empty()) throw DataError("accuracy: empty input");
  if (preds.size() != labels.size()) throw DataError("accuracy: length mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

double mean(const std::vector<double>& v) {
  if (v.empty()) throw DataError("mean: empty input");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) throw DataError("sample_variance: need at least two values");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DataError("pearson: length mismatch");
  if (x.size() < 2) throw DataError("pearson: need at least two values");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("pearson: correlation undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

TTestResult t_test(const std::vector<double>& a, const std::vector<double>& b, bool pooled) {
  if (a.size() < 2 || b.size() < 2) throw DataError("t_test: each sample needs at least two values");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double diff = mean(a) - mean(b);
  const double va = sample_variance(a), vb = sample_variance(b);

  TTestResult r;
  double se2 = 0.0;
  if (pooled) {
    r.df = na + nb - 2.0;
    const double sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / r.df;
    se2 = sp2 * (1.0 / na + 1.0 / nb);
  } else {
    const double qa = va / na, qb = vb / nb;
    se2 = qa + qb;
    r.df = se2 == 0.0 ? na + nb - 2.0 : se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  }
  if (se2 == 0.0) {
    // Both samples constant.
    r.t = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
    r.p = diff == 0.0 ? 0.5 : (diff > 0.0 ? 0.0 : 1.0);
    return r;
  }
  r.t = diff / std::sqrt(se2);
  if (r.t == 0.0) {
    r.p = 0.5;
    return r;
  }
  boost::math::students_t dist(r.df);
  // Upper tail of whichever side keeps the complement identity exact.
  r.p = r.t > 0.0 ? boost::math::cdf(boost::math::complement(dist, r.t)) : boost::math::cdf(dist, -r.t);
  return r;
}

double one_tailed_t_test(const std::vector<double>& a, const std::vector<double>& b, bool pooled) {
  return t_test(a, b, pooled).p;
}

}  // namespace mtb
