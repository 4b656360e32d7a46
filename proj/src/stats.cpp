#include "embryolab/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace embryolab {

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 1000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("incomplete_beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double beta_quantile(double p, double a, double b, double tolerance) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("beta_quantile: p must lie in [0, 1]");
  double lo = 0.0, hi = 1.0;
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (incomplete_beta(a, b, mid) < p) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

Interval clopper_pearson(int k, int n, double alpha) {
  if (n < 1) throw std::invalid_argument("clopper_pearson: n must be at least 1");
  if (k < 0 || k > n) throw std::invalid_argument("clopper_pearson: k must lie in [0, n]");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("clopper_pearson: alpha must lie in (0, 1)");
  Interval out;
  out.lower = k == 0 ? 0.0 : beta_quantile(alpha / 2.0, k, n - k + 1);
  out.upper = k == n ? 1.0 : beta_quantile(1.0 - alpha / 2.0, k + 1, n - k);
  return out;
}

double chance_upper_bound(int n, double alpha) {
  return clopper_pearson(static_cast<int>(std::lround(n / 3.0)), n, alpha).upper;
}

}  // namespace embryolab

namespace embryolab {

int binomial_quantile(double q, int n, double p) {
  if (n < 0 || !(p >= 0.0 && p <= 1.0) || !(q >= 0.0 && q <= 1.0))
    throw std::invalid_argument("binomial_quantile: invalid arguments");
  double cdf = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double log_pmf = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                           (k > 0 ? k * std::log(p) : 0.0) + (n - k > 0 ? (n - k) * std::log1p(-p) : 0.0);
    cdf += std::exp(log_pmf);
    // Small slack absorbs rounding in the running sum, matching the usual library convention.
    if (cdf >= q * (1.0 - 64 * std::numeric_limits<double>::epsilon())) return k;
  }
  return n;
}

Interval chance_interval(int n, double p, double alpha) {
  if (n < 1) throw std::invalid_argument("chance_interval: n must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("chance_interval: alpha must lie in (0, 1)");
  return {binomial_quantile(alpha / 2.0, n, p) / static_cast<double>(n),
          binomial_quantile(1.0 - alpha / 2.0, n, p) / static_cast<double>(n)};
}

}  // namespace embryolab
