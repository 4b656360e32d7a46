#pragma once

#include <utility>

namespace embryolab {

/// Regularized incomplete beta I_x(a, b), via Lentz's continued fraction.
double incomplete_beta(double a, double b, double x);

/// Smallest x in [0, 1] with I_x(a, b) >= p, by bisection to `tolerance`.
double beta_quantile(double p, double a, double b, double tolerance = 1e-12);

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
};

/// Exact (Clopper-Pearson) two-sided interval for k successes in n trials. Lower is 0
/// when k = 0 and upper is 1 when k = n. Throws std::invalid_argument unless
/// 0 <= k <= n, n >= 1 and 0 < alpha < 1.
Interval clopper_pearson(int k, int n, double alpha = 0.05);

/// Upper bound of the interval around chance (k = round(n / 3)) for n three-way trials.
double chance_upper_bound(int n, double alpha = 0.05);

/// Equal-tailed region of Binomial(n, p) divided by n: lower = q(alpha/2)/n and
/// upper = q(1 - alpha/2)/n with q the binomial quantile function. For n = 51 and
/// p = 1/3 this is [11/51, 24/51].
Interval chance_interval(int n, double p = 1.0 / 3.0, double alpha = 0.05);

/// Binomial quantile: smallest k with P(X <= k) >= q.
int binomial_quantile(double q, int n, double p);

}  // namespace embryolab
