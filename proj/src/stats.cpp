#include "ams/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>

#include "ams/error.hpp"

namespace ams::stats {

double mean(std::span<const double> values) {
  if (values.empty()) throw InsufficientSampleError("mean of an empty sample");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) throw InsufficientSampleError("sample variance needs at least 2 values");
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return ss / static_cast<double>(values.size() - 1);
}

double variance_standard_error(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 4) throw InsufficientSampleError("variance standard error needs at least 4 values");
  const double m = mean(values);
  double m2 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d2 = (v - m) * (v - m);
    m2 += d2;
    m4 += d2 * d2;
  }
  const double dn = static_cast<double>(n);
  m2 /= dn;
  m4 /= dn;
  const double s2 = m2 * dn / (dn - 1.0);
  return std::sqrt(std::max(0.0, (m4 - (dn - 3.0) / (dn - 1.0) * s2 * s2) / dn));
}

double batch_means_standard_error(std::span<const double> chain, std::size_t batches) {
  const std::size_t size = chain.size() / batches;
  if (batches < 2 || size == 0) throw InsufficientSampleError("not enough values for batch means");
  std::vector<double> means(batches);
  for (std::size_t b = 0; b < batches; ++b) means[b] = mean(chain.subspan(b * size, size));
  return std::sqrt(sample_variance(means) / static_cast<double>(batches));
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InsufficientSampleError("KS distance of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double worst = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    worst = std::max(worst, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return worst;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

NormalityResult anderson_darling_normal(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 50) throw InsufficientSampleError("normality check needs at least 50 values, got " + std::to_string(n));
  const double m = mean(values);
  const double sd = std::sqrt(sample_variance(values));
  std::vector<double> z(values.begin(), values.end());
  for (double& v : z) v = (v - m) / sd;
  std::sort(z.begin(), z.end());

  const double dn = static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // log Phi and log(1 - Phi) through erfc to keep the tails accurate
    const double log_cdf = std::log(0.5 * std::erfc(-z[i] / std::sqrt(2.0)));
    const double log_sf = std::log(0.5 * std::erfc(z[n - 1 - i] / std::sqrt(2.0)));
    sum += (2.0 * static_cast<double>(i) + 1.0) * (log_cdf + log_sf);
  }
  const double a2 = -dn - sum / dn;
  const double adjusted = a2 * (1.0 + 0.75 / dn + 2.25 / (dn * dn));

  // D'Agostino & Stephens (1986), case 3 (both parameters estimated)
  double p;
  if (adjusted >= 0.6) {
    p = std::exp(1.2937 - 5.709 * adjusted + 0.0186 * adjusted * adjusted);
  } else if (adjusted >= 0.34) {
    p = std::exp(0.9177 - 4.279 * adjusted - 1.38 * adjusted * adjusted);
  } else if (adjusted >= 0.2) {
    p = 1.0 - std::exp(-8.318 + 42.796 * adjusted - 59.938 * adjusted * adjusted);
  } else {
    p = 1.0 - std::exp(-13.436 + 101.14 * adjusted - 223.73 * adjusted * adjusted);
  }
  return {adjusted, std::clamp(p, 0.0, 1.0)};
}

VarianceRatioTest variance_ratio_test(std::span<const double> a, std::span<const double> b) {
  const double va = sample_variance(a);
  const double vb = sample_variance(b);
  if (vb <= 0.0) throw InsufficientSampleError("variance ratio with a zero-variance denominator");
  const double f = va / vb;
  boost::math::fisher_f_distribution<double> dist(static_cast<double>(a.size() - 1), static_cast<double>(b.size() - 1));
  const double lower = boost::math::cdf(dist, f);
  const double p = 2.0 * std::min(lower, 1.0 - lower);
  return {f, std::min(1.0, p)};
}

}  // namespace ams::stats
