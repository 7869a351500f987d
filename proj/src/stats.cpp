#include "subviews/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <numeric>

#include "subviews/errors.hpp"

namespace subviews {

double chi2_upper_tail(double x, double df) {
  if (!(df >= 0.0)) throw ValidationError("degrees of freedom must be nonnegative");
  if (std::isnan(x)) throw ValidationError("chi-squared statistic is NaN");
  if (df == 0.0) return x > 0.0 ? 0.0 : 1.0;
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), x));
}

double chi2_quantile(double prob, double df) {
  return boost::math::quantile(boost::math::chi_squared(df), prob);
}

double normal_quantile(double prob) {
  return boost::math::quantile(boost::math::normal(), prob);
}

double normal_cdf(double x) { return boost::math::cdf(boost::math::normal(), x); }

double mean(const std::vector<double>& v) {
  if (v.empty()) return NAN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return NAN;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double kolmogorov_tail(double t) {
  if (t <= 0.0) return 1.0;
  if (t < 0.3) {
    // Alternating series converges slowly here; use the theta-function form
    // 1 - sqrt(2 pi)/t sum exp(-(2j-1)^2 pi^2 / (8 t^2)).
    const double pi = 3.14159265358979323846;
    double s = 0.0;
    for (int j = 1; j <= 50; ++j) {
      const double term = std::exp(-(2.0 * j - 1) * (2.0 * j - 1) * pi * pi / (8.0 * t * t));
      s += term;
      if (term < 1e-300) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / t * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int j = 1; j <= 200; ++j) {
    const double term = std::exp(-2.0 * j * j * t * t);
    s += (j % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

double ks_pvalue(double d, std::size_t n) {
  if (n == 0) throw ValidationError("KS test needs a nonempty sample");
  const double rn = std::sqrt(static_cast<double>(n));
  return kolmogorov_tail((rn + 0.12 + 0.11 / rn) * d);
}

double ks_uniform_pvalue(const std::vector<double>& sample) {
  const double d = ks_statistic(sample, [](double x) { return std::clamp(x, 0.0, 1.0); });
  return ks_pvalue(d, sample.size());
}

double ks_normal_pvalue(const std::vector<double>& sample) {
  return ks_pvalue(ks_statistic(sample, normal_cdf), sample.size());
}

double qq_slope(const QqPoints& qq) {
  const std::size_t m = qq.theoretical.size();
  if (m < 2) return NAN;
  const double mx = mean(qq.theoretical), my = mean(qq.empirical);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxy += (qq.theoretical[i] - mx) * (qq.empirical[i] - my);
    sxx += (qq.theoretical[i] - mx) * (qq.theoretical[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace subviews
