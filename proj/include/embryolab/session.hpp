#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "embryolab/dataset.hpp"
#include "embryolab/trial_log.hpp"

namespace embryolab {

inline constexpr int kProtocolVersion = 1;

struct ExperimentConfig {
  int fixation_ms = 400;
  int stimulus_ms = 300;
  int mask_ms = 300;
  int feedback_ms = 1000;
  int correction_ms = 1000;
  int epochs = 6;
  int practice_trials = 10;
  std::array<std::string, 3> labels{"Lauz", "Puns", "Eulf"};  // fixed on-screen order
  int display_size = kStimulusSize;
  /// Reject a second unfinished session for the same observer.
  bool exclusive_observer = true;
};

/// Throws std::invalid_argument for non-positive durations or counts.
void validate_config(const ExperimentConfig& config);

enum class SessionStatus { Practice, Training, Testing, Finished };
std::string_view status_name(SessionStatus status) noexcept;

enum class TrialKind { Practice, Train, Test };
std::string_view trial_kind_name(TrialKind kind) noexcept;

class SessionError : public std::runtime_error {
 public:
  enum class Code { NotFound, Conflict, BadRequest };
  SessionError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

/// Position of one trial in the full session sequence (practice first).
struct TrialSlot {
  TrialKind kind = TrialKind::Practice;
  int epoch = 0;        // 1-based; 0 for practice
  int trial_index = 0;  // 0-based within its block
};

/// Client-reported timing for one trial; stored in the record's audit payload.
struct ClientReport {
  std::optional<double> response_time_ms;
  nlohmann::json audit;  // measured onsets, focus flags, ...
};

struct FeedbackDirective {
  enum class Kind { None, Correct, Incorrect } kind = Kind::None;
  int chosen_label = 0;
  int correct_label = 0;  // meaningful only for Incorrect
  int highlight_ms = 0;
  int correction_ms = 0;
};

nlohmann::json to_json(const FeedbackDirective& directive);

struct SessionInfo {
  std::string session_id;
  std::string observer_id;
  SessionStatus status = SessionStatus::Practice;
  std::size_t answered = 0;  // including practice
  std::size_t total = 0;
  std::optional<TrialSlot> cursor;  // next unanswered trial; unset when finished
};

nlohmann::json to_json(const SessionInfo& info);

/// Durable session store rooted at a data directory:
///   <dir>/store.json                     asset token key
///   <dir>/sessions/<id>/meta.json        observer, seed, config
///   <dir>/sessions/<id>/records.jsonl    analysis records, fsync'd before acknowledgement
///   <dir>/sessions/<id>/practice.jsonl   practice responses, never exported
/// Stimulus paths in the manifest resolve against `asset_root`.
class SessionStore {
 public:
  SessionStore(std::filesystem::path data_dir, DatasetManifest manifest, std::filesystem::path asset_root,
               ExperimentConfig config = {});
  ~SessionStore();
  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  /// `seed` fixes the per-epoch shuffles; drawn from the OS when absent.
  SessionInfo create_session(const std::string& observer_id, std::optional<std::uint64_t> seed = std::nullopt);
  /// Trial descriptor; issuing the same unanswered trial twice is an error until it is answered.
  nlohmann::json next_trial(const std::string& session_id);
  FeedbackDirective submit_response(const std::string& session_id, const std::string& trial_id, int response_label,
                                    const ClientReport& report = {});
  SessionInfo info(const std::string& session_id) const;
  std::vector<SessionInfo> sessions() const;
  /// Throws Conflict for unfinished sessions unless `partial`.
  SessionLog export_session(const std::string& session_id, bool partial = false) const;

  /// PNG bytes for an opaque asset token from a trial descriptor. Throws NotFound.
  std::vector<std::uint8_t> asset(const std::string& token) const;

  const ExperimentConfig& config() const noexcept { return config_; }
  std::size_t trials_per_session() const noexcept;

 private:
  struct Session;
  struct AssetIndex;

  Session& find(const std::string& session_id) const;
  void restore();
  TrialSlot slot_at(std::size_t position) const;
  std::string stimulus_token(const std::string& image_id) const;

  std::filesystem::path data_dir_;
  DatasetManifest manifest_;
  std::filesystem::path asset_root_;
  ExperimentConfig config_;
  std::uint64_t token_key_ = 0;
  std::unique_ptr<AssetIndex> assets_;
  mutable std::mutex mutex_;  // guards sessions_ map structure only
  std::map<std::string, std::unique_ptr<Session>> sessions_;
};

/// Bundled practice stimulus k (0-based): circle, square or triangle on the stimulus background.
RgbImage practice_image(int k, int size = kStimulusSize);

}  // namespace embryolab
