#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "embryolab/analysis.hpp"

namespace embryolab {

inline const std::vector<std::size_t> kTrainWindows{6, 12, 24, 36};
inline const std::vector<std::size_t> kTestWindows{12, 24, 51};

/// Row of the optional model-metadata table joined onto the lag table.
struct ModelMetadata {
  std::string name;
  std::optional<double> top1;
  std::optional<double> parameters;
};

/// Reads `name,top1,parameters` (header required; empty cells allowed).
std::vector<ModelMetadata> read_model_metadata(const std::filesystem::path& path);

struct AnalyzeOptions {
  ChanceRule rule = ChanceRule::ClopperPearson;
  /// Drop logs that fail inclusion_filter before aggregation.
  bool apply_inclusion = false;
  /// When non-empty, the inclusion filter applies only to these groups.
  std::set<std::string> inclusion_groups;
  /// observer_id -> group name; unmapped observers form their own group.
  std::map<std::string, std::string> groups;
};

struct ObserverSummary {
  std::string name;
  std::size_t logs = 0;
  LearningCurves curves;
  EfficiencySeries efficiency;
  GeneralisationLag lag;
  std::optional<SplitAccuracy> split;  // mean over logs, when a manifest is given
};

struct AnalysisResult {
  std::vector<InclusionReport> inclusion;  // one per input log
  std::vector<ObserverSummary> observers;  // sorted by name
};

AnalysisResult analyze_logs(const std::vector<SessionLog>& logs, const DatasetManifest* manifest,
                            const AnalyzeOptions& options = {});

void write_curves_csv(const AnalysisResult& result, const std::filesystem::path& path);
void write_lag_table_csv(const AnalysisResult& result, const std::filesystem::path& path,
                         const std::vector<ModelMetadata>& metadata = {});
void write_efficiency_csv(const AnalysisResult& result, const std::filesystem::path& path);
void write_split_csv(const AnalysisResult& result, const std::filesystem::path& path);
void write_inclusion_csv(const AnalysisResult& result, const std::filesystem::path& path);
/// Moving averages of each log's correctness flags, per phase and window.
void write_moving_average_csv(const std::vector<SessionLog>& logs, const std::filesystem::path& path);

/// Train (dashed) and test (solid) trajectories with the chance interval for n_train shaded.
std::string curves_svg(const std::vector<ObserverSummary>& observers, ChanceRule rule = ChanceRule::ClopperPearson);
/// Delta G against top-1 accuracy; circle area follows the parameter count.
std::string lag_scatter_svg(const AnalysisResult& result, const std::vector<ModelMetadata>& metadata);

/// Writes every table and plot into `dir` and returns the written paths.
std::vector<std::filesystem::path> write_report(const AnalysisResult& result, const std::vector<SessionLog>& logs,
                                                const std::filesystem::path& dir,
                                                const std::vector<ModelMetadata>& metadata = {},
                                                ChanceRule rule = ChanceRule::ClopperPearson);

}  // namespace embryolab
