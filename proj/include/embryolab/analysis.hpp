#pragma once

#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "embryolab/dataset.hpp"
#include "embryolab/stats.hpp"
#include "embryolab/trial_log.hpp"

namespace embryolab {

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// How "significantly above chance" is decided for a proportion over n trials.
enum class ChanceRule {
  ClopperPearson,    ///< upper bound of clopper_pearson(round(n / 3), n)
  BinomialQuantile,  ///< upper bound of chance_interval(n)
};

double chance_upper(int n, ChanceRule rule = ChanceRule::ClopperPearson, double alpha = 0.05);

/// Trailing-window means: output[i] is the mean of values[i .. i + window - 1].
std::vector<double> moving_average(std::span<const double> values, std::size_t window);

/// Per-epoch accuracies of one observer (or an aggregate of several).
struct LearningCurves {
  std::string observer_id;
  std::vector<double> acc_train;  // index 0 = epoch 1
  std::vector<double> acc_test;
  int n_train = kTrainingImages;
  int n_test = kTestImagesPerSet;
  int best_epoch = 1;  // 1-based argmax of acc_test, earliest on ties

  std::size_t epochs() const noexcept { return acc_test.size(); }
};

LearningCurves epoch_curves(const SessionLog& log, const Protocol& protocol = {});

/// Mean of per-observer (or per-run) accuracies, epoch by epoch.
LearningCurves aggregate_curves(std::span<const LearningCurves> curves, const std::string& observer_id);

/// 1-based argmax of test accuracy, earliest on ties.
int best_epoch(std::span<const double> acc_test);

struct EfficiencySeries {
  /// gain[i] = (acc_test[i] - acc_test[i - 1]) / n_train with acc_test before epoch 1 = 1/3.
  std::vector<double> gain;
  int n_training_images = kTrainingImages;
};

EfficiencySeries data_efficiency(const LearningCurves& curves);

struct EpochInterval {
  int first = 0;
  int last = 0;
  int size() const noexcept { return last - first + 1; }
  /// "2-6" style label.
  std::string label() const;
  friend bool operator==(const EpochInterval&, const EpochInterval&) = default;
};

struct GeneralisationLag {
  /// Onset and peak epochs. Unset when training accuracy never exceeds chance.
  /// When the test peak precedes the onset the interval is reported as is but holds no epochs.
  std::optional<EpochInterval> epochs;
  double delta_g = std::numeric_limits<double>::quiet_NaN();
  bool computable() const noexcept { return epochs && epochs->last >= epochs->first; }
};

/// E runs from the first epoch whose training accuracy exceeds the chance upper bound
/// (n = n_train) through the last epoch whose test accuracy reaches its running maximum;
/// delta G is the mean of train minus test accuracy over E.
GeneralisationLag generalisation_lag(const LearningCurves& curves, ChanceRule rule = ChanceRule::ClopperPearson);

struct SplitAccuracy {
  std::vector<double> novel_perspective;  // per epoch
  std::vector<double> novel_object;
  std::vector<int> perspective_count;
  std::vector<int> object_count;
};

/// Test accuracy split by test-image kind. Throws AnalysisError for test images the
/// manifest does not tag.
SplitAccuracy split_test_accuracy(const SessionLog& log, const DatasetManifest& manifest);

struct InclusionReport {
  std::string observer_id;
  int run = 0;
  bool started_at_chance = false;
  bool learned = false;
  std::size_t window = 12;
  double first_window = 0.0;
  double last_window = 0.0;
  double chance_upper = 0.0;      // bound for round(window / 3) of window
  double mean_accuracy = 0.0;     // over all training trials
  Interval mean_interval;          // clopper_pearson(round(mean * window), window)
  bool included() const noexcept { return started_at_chance && learned; }
};

/// Starts at chance when the first windowed training accuracy does not exceed the
/// chance upper bound; learned when the first window lies below and the last window
/// above the interval around the observer's own mean training accuracy.
InclusionReport inclusion_filter(const SessionLog& log, std::size_t window = 12,
                                 ChanceRule rule = ChanceRule::ClopperPearson);

}  // namespace embryolab
