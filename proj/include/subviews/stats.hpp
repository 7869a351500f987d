#pragma once

#include <vector>

namespace subviews {

/// P(chi2_df > x). df == 0 is a point mass at zero.
double chi2_upper_tail(double x, double df);
double chi2_quantile(double prob, double df);
double normal_quantile(double prob);
double normal_cdf(double x);

double mean(const std::vector<double>& v);
double sample_sd(const std::vector<double>& v);

/// One-sample Kolmogorov-Smirnov statistic sup |F_n - F| for a continuous F.
template <class Cdf>
double ks_statistic(std::vector<double> sample, Cdf cdf);

/// Asymptotic p-value of the one-sample KS test with Stephens' small-sample
/// correction: Q(sqrt(n) + 0.12 + 0.11/sqrt(n)) D), Q the Kolmogorov tail.
double ks_pvalue(double d, std::size_t n);

/// Kolmogorov tail Q(t) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 t^2).
double kolmogorov_tail(double t);

double ks_uniform_pvalue(const std::vector<double>& sample);
double ks_normal_pvalue(const std::vector<double>& sample);

struct QqPoints {
  std::vector<double> theoretical;
  std::vector<double> empirical;
};

/// Sorted sample against quantiles F^{-1}((i - 0.5)/m).
template <class Quantile>
QqPoints qq_points(std::vector<double> sample, Quantile quantile);

/// Least-squares slope of empirical on theoretical quantiles.
double qq_slope(const QqPoints& qq);

}  // namespace subviews

#include <algorithm>
#include <cmath>

namespace subviews {

template <class Cdf>
double ks_statistic(std::vector<double> sample, Cdf cdf) {
  std::sort(sample.begin(), sample.end());
  const double m = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::max(static_cast<double>(i + 1) / m - f, f - static_cast<double>(i) / m));
  }
  return d;
}

template <class Quantile>
QqPoints qq_points(std::vector<double> sample, Quantile quantile) {
  std::sort(sample.begin(), sample.end());
  QqPoints qq;
  const double m = static_cast<double>(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    qq.theoretical.push_back(quantile((static_cast<double>(i) + 0.5) / m));
    qq.empirical.push_back(sample[i]);
  }
  return qq;
}

}  // namespace subviews
