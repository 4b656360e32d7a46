#include "embryolab/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace embryolab {

double chance_upper(int n, ChanceRule rule, double alpha) {
  return rule == ChanceRule::ClopperPearson ? chance_upper_bound(n, alpha) : chance_interval(n, 1.0 / 3.0, alpha).upper;
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window < 1) throw AnalysisError("moving_average: window must be at least 1");
  if (window > values.size())
    throw AnalysisError("moving_average: window " + std::to_string(window) + " exceeds series length " +
                        std::to_string(values.size()));
  std::vector<double> out;
  out.reserve(values.size() - window + 1);
  for (std::size_t i = 0; i + window <= values.size(); ++i) {
    // Direct summation per window keeps every value independent of earlier rounding.
    double sum = 0.0;
    for (std::size_t j = i; j < i + window; ++j) sum += values[j];
    out.push_back(sum / static_cast<double>(window));
  }
  return out;
}

int best_epoch(std::span<const double> acc_test) {
  if (acc_test.empty()) throw AnalysisError("best_epoch: empty curve");
  return static_cast<int>(std::max_element(acc_test.begin(), acc_test.end()) - acc_test.begin()) + 1;
}

LearningCurves epoch_curves(const SessionLog& log, const Protocol& protocol) {
  LearningCurves c;
  c.observer_id = log.observer_id;
  c.n_train = protocol.train_per_epoch;
  c.n_test = protocol.test_per_epoch;
  std::vector<int> train_correct(protocol.epochs, 0), test_correct(protocol.epochs, 0);
  std::vector<int> train_seen(protocol.epochs, 0), test_seen(protocol.epochs, 0);
  for (const auto& r : log.records) {
    if (r.epoch < 1 || r.epoch > protocol.epochs) throw AnalysisError("record epoch " + std::to_string(r.epoch) + " out of range");
    const auto e = static_cast<std::size_t>(r.epoch - 1);
    auto& seen = r.phase == Phase::Train ? train_seen : test_seen;
    auto& correct = r.phase == Phase::Train ? train_correct : test_correct;
    ++seen[e];
    correct[e] += r.correct ? 1 : 0;
  }
  for (int e = 0; e < protocol.epochs; ++e) {
    if (train_seen[e] != protocol.train_per_epoch || test_seen[e] != protocol.test_per_epoch)
      throw AnalysisError("epoch " + std::to_string(e + 1) + " of '" + log.observer_id + "' run " +
                          std::to_string(log.run) + " is incomplete (" + std::to_string(train_seen[e]) + " train, " +
                          std::to_string(test_seen[e]) + " test records)");
    c.acc_train.push_back(static_cast<double>(train_correct[e]) / protocol.train_per_epoch);
    c.acc_test.push_back(static_cast<double>(test_correct[e]) / protocol.test_per_epoch);
  }
  c.best_epoch = best_epoch(c.acc_test);
  return c;
}

LearningCurves aggregate_curves(std::span<const LearningCurves> curves, const std::string& observer_id) {
  if (curves.empty()) throw AnalysisError("aggregate_curves: no curves");
  LearningCurves out;
  out.observer_id = observer_id;
  out.n_train = curves.front().n_train;
  out.n_test = curves.front().n_test;
  const auto epochs = curves.front().epochs();
  out.acc_train.assign(epochs, 0.0);
  out.acc_test.assign(epochs, 0.0);
  for (const auto& c : curves) {
    if (c.epochs() != epochs || c.acc_train.size() != epochs) throw AnalysisError("aggregate_curves: epoch counts differ");
    for (std::size_t e = 0; e < epochs; ++e) {
      out.acc_train[e] += c.acc_train[e];
      out.acc_test[e] += c.acc_test[e];
    }
  }
  for (std::size_t e = 0; e < epochs; ++e) {
    out.acc_train[e] /= static_cast<double>(curves.size());
    out.acc_test[e] /= static_cast<double>(curves.size());
  }
  out.best_epoch = best_epoch(out.acc_test);
  return out;
}

EfficiencySeries data_efficiency(const LearningCurves& curves) {
  if (curves.acc_test.empty() || curves.n_train < 1) throw AnalysisError("data_efficiency: invalid curves");
  EfficiencySeries s;
  s.n_training_images = curves.n_train;
  double previous = 1.0 / 3.0;
  for (double acc : curves.acc_test) {
    s.gain.push_back((acc - previous) / curves.n_train);
    previous = acc;
  }
  return s;
}

std::string EpochInterval::label() const { return std::to_string(first) + "-" + std::to_string(last); }

GeneralisationLag generalisation_lag(const LearningCurves& curves, ChanceRule rule) {
  const auto n = curves.epochs();
  if (n == 0 || curves.acc_train.size() != n) throw AnalysisError("generalisation_lag: invalid curves");
  const double bound = chance_upper(curves.n_train, rule);
  GeneralisationLag out;
  int first = 0;
  for (std::size_t i = 0; i < n && first == 0; ++i)
    if (curves.acc_train[i] > bound) first = static_cast<int>(i) + 1;
  int last = 0;
  double running_max = -1.0;
  for (std::size_t i = 0; i < n; ++i)
    // Equal accuracies can differ in the last bits depending on how the runs were averaged.
    if (curves.acc_test[i] >= running_max - 1e-12) {
      running_max = std::max(running_max, curves.acc_test[i]);
      last = static_cast<int>(i) + 1;
    }
  if (first == 0) return out;
  out.epochs = EpochInterval{first, last};
  if (last < first) return out;
  double sum = 0.0;
  for (int e = first; e <= last; ++e) sum += curves.acc_train[e - 1] - curves.acc_test[e - 1];
  out.delta_g = sum / out.epochs->size();
  return out;
}

SplitAccuracy split_test_accuracy(const SessionLog& log, const DatasetManifest& manifest) {
  const std::size_t epochs = manifest.test_sets.size();
  std::vector<int> np_correct(epochs, 0), no_correct(epochs, 0);
  SplitAccuracy out;
  out.perspective_count.assign(epochs, 0);
  out.object_count.assign(epochs, 0);
  for (const auto& r : log.records) {
    if (r.phase != Phase::Test) continue;
    if (r.epoch < 1 || static_cast<std::size_t>(r.epoch) > epochs)
      throw AnalysisError("test record epoch " + std::to_string(r.epoch) + " has no test set");
    const auto kind = manifest.kind_of(r.image_id);
    if (!kind) throw AnalysisError("test image '" + r.image_id + "' carries no novel_perspective/novel_object tag");
    const auto e = static_cast<std::size_t>(r.epoch - 1);
    if (*kind == TestKind::NovelPerspective) {
      ++out.perspective_count[e];
      np_correct[e] += r.correct ? 1 : 0;
    } else {
      ++out.object_count[e];
      no_correct[e] += r.correct ? 1 : 0;
    }
  }
  for (std::size_t e = 0; e < epochs; ++e) {
    if (out.perspective_count[e] == 0 && out.object_count[e] == 0) break;  // partial log
    out.novel_perspective.push_back(out.perspective_count[e] ? static_cast<double>(np_correct[e]) / out.perspective_count[e] : 0.0);
    out.novel_object.push_back(out.object_count[e] ? static_cast<double>(no_correct[e]) / out.object_count[e] : 0.0);
  }
  return out;
}

InclusionReport inclusion_filter(const SessionLog& log, std::size_t window, ChanceRule rule) {
  std::vector<double> flags;
  for (const auto& r : log.records)
    if (r.phase == Phase::Train) flags.push_back(r.correct ? 1.0 : 0.0);
  if (flags.size() < window)
    throw AnalysisError("inclusion_filter: " + std::to_string(flags.size()) + " training trials are fewer than the window " +
                        std::to_string(window));
  const auto ma = moving_average(flags, window);
  InclusionReport rep;
  rep.observer_id = log.observer_id;
  rep.run = log.run;
  rep.window = window;
  rep.first_window = ma.front();
  rep.last_window = ma.back();
  const int w = static_cast<int>(window);
  rep.chance_upper = chance_upper(w, rule);
  double sum = 0.0;
  for (double f : flags) sum += f;
  rep.mean_accuracy = sum / static_cast<double>(flags.size());
  rep.mean_interval = clopper_pearson(static_cast<int>(std::lround(rep.mean_accuracy * w)), w);
  rep.started_at_chance = rep.first_window <= rep.chance_upper;
  rep.learned = rep.first_window < rep.mean_interval.lower && rep.last_window > rep.mean_interval.upper;
  return rep;
}

}  // namespace embryolab
