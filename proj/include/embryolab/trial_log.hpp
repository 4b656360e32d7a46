#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace embryolab {

struct DatasetManifest;

enum class Phase : std::uint8_t { Train, Test };
std::string_view phase_name(Phase phase) noexcept;

/// Block sizes of the train/test protocol.
struct Protocol {
  int epochs = 6;
  int train_per_epoch = 36;
  int test_per_epoch = 51;

  std::size_t total_records() const noexcept {
    return static_cast<std::size_t>(epochs) * static_cast<std::size_t>(train_per_epoch + test_per_epoch);
  }
};

/// One observation in the shared log schema. Labels are category indices 0..2.
struct TrialRecord {
  std::string observer_id;
  int run = 0;
  Phase phase = Phase::Train;
  int epoch = 1;        // 1-based
  int trial_index = 0;  // 0-based position inside its (epoch, phase) block
  std::string image_id;
  int true_label = 0;
  int response_label = 0;
  std::array<double, 3> scores{};
  bool correct = false;
  /// Wall-clock milliseconds since the Unix epoch when the record was written, if known.
  std::optional<std::int64_t> timestamp_ms;
  std::optional<double> response_time_ms;
  /// Free-form audit payload (client-measured onsets, focus flags). Null when absent.
  nlohmann::json audit;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// Digest of the learner's parameters around one evaluation phase.
struct EvaluationAudit {
  int epoch = 0;
  std::uint64_t before = 0;
  std::uint64_t after = 0;
  friend bool operator==(const EvaluationAudit&, const EvaluationAudit&) = default;
};

struct SessionLog {
  std::string observer_id;
  int run = 0;
  std::vector<TrialRecord> records;
  std::vector<EvaluationAudit> evaluation_audits;

  std::size_t count(Phase phase) const noexcept;
  friend bool operator==(const SessionLog&, const SessionLog&) = default;
};

class LogError : public std::runtime_error {
 public:
  LogError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

nlohmann::json to_json(const TrialRecord& record);
/// Throws LogError (without line information) on schema violations.
TrialRecord record_from_json(const nlohmann::json& j);

/// Checks protocol order: train block of epoch 1, test block of epoch 1, train block of
/// epoch 2, ... with consecutive trial indices. `first_line` maps record i to file line
/// first_line + i in error messages. Incomplete trailing blocks are accepted only when
/// `allow_incomplete` is set.
void validate_protocol_order(const std::vector<TrialRecord>& records, const Protocol& protocol,
                             bool allow_incomplete = false, std::size_t first_line = 1);

bool is_complete(const SessionLog& log, const Protocol& protocol = {});

void write_session_log(const SessionLog& log, const std::filesystem::path& path);
void append_session_log(const SessionLog& log, std::ostream& out);

struct IngestOptions {
  Protocol protocol;
  bool allow_incomplete = false;
  const DatasetManifest* manifest = nullptr;  // enables unknown-image warnings
};

struct IngestResult {
  std::vector<SessionLog> logs;
  std::vector<std::string> warnings;
};

/// Parses a JSON Lines file holding one or more (observer, run) logs, each in protocol order.
IngestResult read_session_logs(const std::filesystem::path& path, const IngestOptions& options = {});

/// Single-log variant; rejects files holding more than one (observer, run).
SessionLog ingest_external_log(const std::filesystem::path& path, const IngestOptions& options = {});

}  // namespace embryolab
