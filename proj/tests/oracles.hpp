#pragma once

// Independent reference implementations used as test oracles. Nothing here calls the
// library's statistics or analysis code.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "embryolab/dataset.hpp"
#include "embryolab/trial_log.hpp"

namespace oracle {

inline double binom_pmf(int k, int n, double p) {
  if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return k == n ? 1.0 : 0.0;
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
                  (n - k) * std::log1p(-p));
}

inline double binom_cdf(int k, int n, double p) {
  double s = 0.0;
  for (int i = 0; i <= k; ++i) s += binom_pmf(i, n, p);
  return s;
}

inline double binom_sf(int k, int n, double p) {  // P(X >= k)
  double s = 0.0;
  for (int i = k; i <= n; ++i) s += binom_pmf(i, n, p);
  return s;
}

/// Exact interval bounds found by bisection on the tail sums.
inline double cp_upper(int k, int n, double alpha = 0.05) {
  if (k == n) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (binom_cdf(k, n, mid) > alpha / 2 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double cp_lower(int k, int n, double alpha = 0.05) {
  if (k == 0) return 0.0;
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (binom_sf(k, n, mid) < alpha / 2 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Brute-force per-epoch statistics recounted from raw records.
struct Recount {
  std::vector<double> train, test;               // accuracy per epoch
  std::vector<double> gain;                      // efficiency
  std::optional<std::pair<int, int>> lag_epochs;  // (onset, peak)
  std::optional<double> delta_g;
  std::vector<double> perspective, object;       // split accuracies
};

inline Recount recount(const std::vector<const embryolab::SessionLog*>& logs, const embryolab::DatasetManifest* manifest,
                       double train_bound) {
  using embryolab::Phase;
  Recount rc;
  const int epochs = 6;
  rc.train.assign(epochs, 0.0);
  rc.test.assign(epochs, 0.0);
  rc.perspective.assign(epochs, 0.0);
  rc.object.assign(epochs, 0.0);
  std::map<std::string, embryolab::TestKind> kinds;
  if (manifest)
    for (const auto& set : manifest->test_sets)
      for (const auto& t : set) kinds[t.ref.image_id] = t.kind;
  for (const auto* log : logs) {
    for (int e = 1; e <= epochs; ++e) {
      int tr = 0, trn = 0, te = 0, ten = 0, np = 0, npn = 0, no = 0, non = 0;
      for (const auto& r : log->records) {
        if (r.epoch != e) continue;
        const bool ok = r.response_label == r.true_label;
        if (r.phase == Phase::Train) {
          ++trn;
          tr += ok;
        } else {
          ++ten;
          te += ok;
          if (manifest) {
            if (kinds.at(r.image_id) == embryolab::TestKind::NovelPerspective) {
              ++npn;
              np += ok;
            } else {
              ++non;
              no += ok;
            }
          }
        }
      }
      rc.train[e - 1] += static_cast<double>(tr) / trn / logs.size();
      rc.test[e - 1] += static_cast<double>(te) / ten / logs.size();
      if (manifest) {
        rc.perspective[e - 1] += static_cast<double>(np) / npn / logs.size();
        rc.object[e - 1] += static_cast<double>(no) / non / logs.size();
      }
    }
  }
  for (int e = 0; e < epochs; ++e) rc.gain.push_back((rc.test[e] - (e ? rc.test[e - 1] : 1.0 / 3.0)) / 36.0);
  int onset = 0;
  for (int e = epochs; e >= 1; --e)
    if (rc.train[e - 1] > train_bound) onset = e;
  int peak = 1;
  for (int e = 1; e <= epochs; ++e) {
    bool at_max = true;
    for (int j = 1; j < e; ++j) at_max = at_max && rc.test[e - 1] >= rc.test[j - 1] - 1e-12;
    if (at_max) peak = e;
  }
  if (onset) {
    rc.lag_epochs = std::make_pair(onset, peak);
    if (peak >= onset) {
      double s = 0.0;
      for (int e = onset; e <= peak; ++e) s += rc.train[e - 1] - rc.test[e - 1];
      rc.delta_g = s / (peak - onset + 1);
    }
  }
  return rc;
}

}  // namespace oracle
