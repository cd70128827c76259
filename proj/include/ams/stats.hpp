#pragma once

// Small statistics toolbox used by the diagnostics and the harness.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace ams::stats {

double mean(std::span<const double> values);

/// Unbiased sample variance (n - 1 denominator).  Requires n >= 2.
double sample_variance(std::span<const double> values);

/// Standard error of the sample variance estimator, from the fourth
/// central moment: sqrt((m4 - (n-3)/(n-1) s^4) / n).
double variance_standard_error(std::span<const double> values);

/// Batch-means standard error of the mean of a correlated sequence.
double batch_means_standard_error(std::span<const double> chain, std::size_t batches = 50);

/// sup |F_a - F_b| between two empirical distribution functions.
double ks_two_sample(std::vector<double> a, std::vector<double> b);

/// sup |F_n - F| against a continuous reference cdf.
template <class Cdf>
double ks_one_sample(std::vector<double> values, Cdf cdf);

double normal_cdf(double x);
double normal_quantile(double p);

struct NormalityResult {
  double statistic;  // Anderson-Darling A^2 with the small-sample correction
  double p_value;
};

/// Anderson-Darling test of normality with mean and variance estimated
/// from the data.  Throws InsufficientSampleError below 50 values.
NormalityResult anderson_darling_normal(std::span<const double> values);

struct VarianceRatioTest {
  double f_statistic;  // var(a) / var(b)
  double p_value;      // two-sided
};

/// Two-sample F test for equality of variances.
VarianceRatioTest variance_ratio_test(std::span<const double> a, std::span<const double> b);

}  // namespace ams::stats

#include <algorithm>
#include <cmath>

template <class Cdf>
double ams::stats::ks_one_sample(std::vector<double> values, Cdf cdf) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double f = cdf(values[i]);
    worst = std::max({worst, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
  }
  return worst;
}
