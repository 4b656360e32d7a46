#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "embryolab/analysis.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace embryolab;

namespace {

SessionLog constant_log(const DatasetManifest& m, bool train_ok, bool test_ok) {
  Rng rng(5);
  auto log = testsupport::random_log(rng, m, "obs", 0, 0.5, 0.5);
  for (auto& r : log.records) {
    r.correct = r.phase == Phase::Train ? train_ok : test_ok;
    r.response_label = r.correct ? r.true_label : (r.true_label + 1) % 3;
  }
  return log;
}

// Training log whose correctness follows p(t) for trial t of 216.
SessionLog shaped_log(const DatasetManifest& m, auto p) {
  Rng rng(9);
  auto log = testsupport::random_log(rng, m, "shaped", 0, 0.5, 0.5);
  int t = 0;
  double owed = 0.0;
  for (auto& r : log.records) {
    if (r.phase != Phase::Train) continue;
    owed += p(t++);  // deterministic dithering keeps the running proportion on target
    r.correct = owed >= 1.0;
    if (r.correct) owed -= 1.0;
    r.response_label = r.correct ? r.true_label : (r.true_label + 1) % 3;
  }
  return log;
}

LearningCurves curves(std::vector<double> train, std::vector<double> test) {
  LearningCurves c;
  c.observer_id = "synthetic";
  c.acc_train = std::move(train);
  c.acc_test = std::move(test);
  c.best_epoch = best_epoch(c.acc_test);
  return c;
}

}  // namespace

TEST_CASE("moving average") {
  const std::vector<double> a{1, 0, 1, 0};
  CHECK(moving_average(a, 2) == std::vector<double>{0.5, 0.5, 0.5});
  const std::vector<double> flat(20, 0.25);
  for (double v : moving_average(flat, 6)) CHECK(v == 0.25);
  const std::vector<double> b{1, 2, 3, 6};
  CHECK(moving_average(b, 4) == std::vector<double>{3.0});
  CHECK_THROWS_AS(moving_average(b, 5), AnalysisError);
  CHECK_THROWS_AS(moving_average(b, 0), AnalysisError);
}

TEST_CASE("epoch curves") {
  const auto m = testsupport::synthetic_manifest();
  const auto all = epoch_curves(constant_log(m, true, true));
  for (std::size_t e = 0; e < 6; ++e) {
    CHECK(all.acc_train[e] == 1.0);
    CHECK(all.acc_test[e] == 1.0);
  }
  CHECK(all.best_epoch == 1);

  Rng rng(3);
  auto log = testsupport::random_log(rng, m, "o", 0);
  const auto c = epoch_curves(log);
  const auto rc = oracle::recount({&log}, &m, 2.0);
  for (std::size_t e = 0; e < 6; ++e) {
    CHECK(c.acc_train[e] == doctest::Approx(rc.train[e]).epsilon(1e-15));
    CHECK(c.acc_test[e] == doctest::Approx(rc.test[e]).epsilon(1e-15));
  }
  for (double a : c.acc_test) CHECK(c.acc_test[c.best_epoch - 1] >= a);

  // order-free: shuffle records within each epoch
  auto shuffled = log;
  Rng sh(4);
  for (int e = 0; e < 6; ++e) {
    auto first = shuffled.records.begin() + e * 87;
    std::vector<TrialRecord> block(first, first + 87);
    sh.shuffle(block);
    std::copy(block.begin(), block.end(), first);
  }
  const auto c2 = epoch_curves(shuffled);
  CHECK(c2.acc_train == c.acc_train);
  CHECK(c2.acc_test == c.acc_test);
  CHECK(generalisation_lag(c2).delta_g == generalisation_lag(c).delta_g);

  auto partial = log;
  partial.records.resize(200);
  CHECK_THROWS_AS(epoch_curves(partial), AnalysisError);
}

TEST_CASE("data efficiency") {
  auto c = curves({.5, .6, .7, .8, .9, 1}, {0.47, 0.5, 0.5, 0.5, 0.6, 0.55});
  const auto s = data_efficiency(c);
  REQUIRE(s.gain.size() == 6);
  CHECK(s.gain[0] == doctest::Approx((0.47 - 1.0 / 3.0) / 36).epsilon(1e-12));
  CHECK(s.gain[0] == doctest::Approx(0.003796).epsilon(1e-3));
  CHECK(s.gain[2] == 0.0);
  CHECK(s.gain[3] == 0.0);
  CHECK(s.gain[5] < 0.0);
  double sum = 0.0;
  for (double g : s.gain) sum += g * 36;
  CHECK(sum == doctest::Approx(0.55 - 1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("generalisation lag") {
  // identical trajectories above chance
  auto same = curves({.6, .7, .8, .85, .9, .95}, {.6, .7, .8, .85, .9, .95});
  auto lag = generalisation_lag(same);
  REQUIRE(lag.computable());
  CHECK(lag.delta_g == 0.0);
  CHECK(lag.epochs->label() == "1-6");

  // onset at 2 (0.5 is below the n=36 bound of about 0.51), peak at 5
  auto c = curves({.5, .7, .9, .95, 1, 1}, {.4, .5, .6, .65, .7, .6});
  lag = generalisation_lag(c);
  REQUIRE(lag.computable());
  CHECK(*lag.epochs == EpochInterval{2, 5});
  CHECK(lag.delta_g == doctest::Approx((0.2 + 0.3 + 0.3 + 0.3) / 4).epsilon(1e-14));

  // never above chance -> not computable, not zero
  auto flat = curves({.3, .35, .4, .33, .3, .5}, {.3, .3, .3, .3, .3, .3});
  lag = generalisation_lag(flat);
  CHECK_FALSE(lag.computable());
  CHECK_FALSE(lag.epochs.has_value());
  CHECK(std::isnan(lag.delta_g));

  // test peak before the onset: interval reported, no epochs in it
  auto early = curves({.3, .3, .3, .8, .9, .9}, {.5, .6, .4, .4, .4, .4});
  lag = generalisation_lag(early);
  REQUIRE(lag.epochs.has_value());
  CHECK(*lag.epochs == EpochInterval{4, 2});
  CHECK_FALSE(lag.computable());

  // the binomial-quantile rule reads 0.505 as above chance (bound 18/36)
  auto borderline = curves({.505, .7, .9, .95, 1, 1}, {.4, .5, .6, .65, .7, .6});
  CHECK(generalisation_lag(borderline, ChanceRule::ClopperPearson).epochs->first == 2);
  CHECK(generalisation_lag(borderline, ChanceRule::BinomialQuantile).epochs->first == 1);
}

TEST_CASE("generalisation lag sign") {
  Rng rng(77);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> tr(6), te(6);
    for (int e = 0; e < 6; ++e) {
      te[e] = rng.uniform(0.2, 0.9);
      tr[e] = std::min(1.0, te[e] + rng.uniform(0.0, 0.3));
    }
    const auto lag = generalisation_lag(curves(tr, te));
    if (lag.computable()) CHECK(lag.delta_g >= 0.0);
  }
}

TEST_CASE("split test accuracy") {
  const auto m = testsupport::synthetic_manifest();
  const auto all = split_test_accuracy(constant_log(m, true, true), m);
  for (std::size_t e = 0; e < 6; ++e) {
    CHECK(all.novel_perspective[e] == 1.0);
    CHECK(all.novel_object[e] == 1.0);
    CHECK(all.perspective_count[e] == 24);
    CHECK(all.object_count[e] == 27);
  }
  auto log = constant_log(m, true, true);
  for (auto& r : log.records)
    if (r.phase == Phase::Test && m.kind_of(r.image_id) == TestKind::NovelObject) {
      r.correct = false;
      r.response_label = (r.true_label + 2) % 3;
    }
  const auto s = split_test_accuracy(log, m);
  for (std::size_t e = 0; e < 6; ++e) {
    CHECK(s.novel_perspective[e] == 1.0);
    CHECK(s.novel_object[e] == 0.0);
  }
  log.records[40].image_id = "Lauz_999_p0_y0";
  CHECK_THROWS_AS(split_test_accuracy(log, m), AnalysisError);
}

TEST_CASE("split test accuracy under random responding stays inside the chance interval") {
  const auto m = testsupport::synthetic_manifest();
  const auto np = clopper_pearson(8, 24), no = clopper_pearson(9, 27);
  int inside = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    const auto s = split_test_accuracy(testsupport::random_log(rng, m, "r", 0, 1.0 / 3.0, 1.0 / 3.0), m);
    ++total;
    inside += s.novel_perspective[0] >= np.lower && s.novel_perspective[0] <= np.upper && s.novel_object[0] >= no.lower &&
              s.novel_object[0] <= no.upper;
  }
  CHECK(static_cast<double>(inside) / total >= 0.9);
  MESSAGE("both series inside the interval in " << inside << " of " << total << " seeds");
}

TEST_CASE("inclusion filter") {
  const auto m = testsupport::synthetic_manifest();
  // correct from the very first trial: prior familiarity
  auto expert = inclusion_filter(constant_log(m, true, true));
  CHECK_FALSE(expert.started_at_chance);
  CHECK_FALSE(expert.included());

  // chance throughout: never learned
  auto chance = inclusion_filter(shaped_log(m, [](int) { return 1.0 / 3.0; }));
  CHECK(chance.started_at_chance);
  CHECK_FALSE(chance.learned);

  // ramp from chance to perfect
  auto ramp = inclusion_filter(shaped_log(m, [](int t) { return 1.0 / 3.0 + (2.0 / 3.0) * std::min(1.0, t / 150.0); }));
  CHECK(ramp.started_at_chance);
  CHECK(ramp.learned);
  CHECK(ramp.included());
  // evidence reproduces the flags with the tail-sum oracle
  const int k = static_cast<int>(std::lround(ramp.mean_accuracy * 12));
  CHECK(ramp.chance_upper == doctest::Approx(oracle::cp_upper(4, 12)).epsilon(1e-9));
  CHECK(ramp.mean_interval.lower == doctest::Approx(oracle::cp_lower(k, 12)).epsilon(1e-9));
  CHECK(ramp.mean_interval.upper == doctest::Approx(oracle::cp_upper(k, 12)).epsilon(1e-9));
  CHECK(ramp.started_at_chance == (ramp.first_window <= oracle::cp_upper(4, 12)));
  CHECK(ramp.learned == (ramp.first_window < oracle::cp_lower(k, 12) && ramp.last_window > oracle::cp_upper(k, 12)));

  SessionLog tiny{"t", 0, {}, {}};
  tiny.records.resize(5);
  CHECK_THROWS_AS(inclusion_filter(tiny), AnalysisError);
}

TEST_CASE("metrics equal the brute-force recount on random logs") {
  const auto m = testsupport::synthetic_manifest();
  const double bound = oracle::cp_upper(12, 36);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(derive_key(seed, {1}));
    std::vector<SessionLog> logs;
    const int runs = 1 + static_cast<int>(rng.below(4));
    for (int r = 0; r < runs; ++r) logs.push_back(testsupport::random_log(rng, m, "obs", r));
    std::vector<const SessionLog*> ptrs;
    std::vector<LearningCurves> per;
    for (const auto& l : logs) {
      ptrs.push_back(&l);
      per.push_back(epoch_curves(l));
    }
    const auto agg = aggregate_curves(per, "obs");
    const auto rc = oracle::recount(ptrs, &m, bound);
    const auto eff = data_efficiency(agg);
    const auto lag = generalisation_lag(agg);
    for (std::size_t e = 0; e < 6; ++e) {
      CHECK(std::abs(agg.acc_train[e] - rc.train[e]) <= 1e-12);
      CHECK(std::abs(agg.acc_test[e] - rc.test[e]) <= 1e-12);
      CHECK(std::abs(eff.gain[e] - rc.gain[e]) <= 1e-12);
    }
    CHECK(lag.epochs.has_value() == rc.lag_epochs.has_value());
    if (lag.epochs && rc.lag_epochs) {
      CHECK(lag.epochs->first == rc.lag_epochs->first);
      CHECK(lag.epochs->last == rc.lag_epochs->second);
    }
    CHECK(lag.computable() == rc.delta_g.has_value());
    if (lag.computable() && rc.delta_g) CHECK(std::abs(lag.delta_g - *rc.delta_g) <= 1e-12);
  }
}
