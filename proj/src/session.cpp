#include "embryolab/session.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "embryolab/image.hpp"
#include "embryolab/render.hpp"
#include "embryolab/rng.hpp"

namespace embryolab {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

std::uint64_t os_random64() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

void fsync_path(const fs::path& path, int flags) {
  const int fd = ::open(path.c_str(), flags);
  if (fd < 0) throw std::runtime_error("cannot open " + path.string() + " for sync");
  ::fsync(fd);
  ::close(fd);
}

/// Write-then-rename so a crash leaves either the old or the new file.
void write_atomically(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!(out << text) || !out.flush()) throw std::runtime_error("cannot write " + tmp.string());
  }
  fsync_path(tmp, O_RDONLY);
  fs::rename(tmp, path);
  fsync_path(path.parent_path(), O_RDONLY | O_DIRECTORY);
}

/// Appends one line and fsyncs; on failure the file is cut back to its previous length.
void durable_append(int fd, const std::string& line) {
  const off_t before = ::lseek(fd, 0, SEEK_END);
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd, line.data() + done, line.size() - done);
    if (n <= 0) {
      if (::ftruncate(fd, before) != 0) {
      }
      throw std::runtime_error("append failed");
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    if (::ftruncate(fd, before) != 0) {
    }
    throw std::runtime_error("fsync failed");
  }
}

/// Reads complete JSON lines; a torn final line (never acknowledged) is cut off the file.
std::vector<json> read_journal(const fs::path& path) {
  std::vector<json> lines;
  if (!fs::exists(path)) return lines;
  std::ifstream in(path, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0, good = 0, line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) break;  // torn tail
    try {
      lines.push_back(json::parse(text.begin() + static_cast<std::ptrdiff_t>(pos), text.begin() + static_cast<std::ptrdiff_t>(nl)));
    } catch (const json::exception& e) {
      throw LogError(path.string() + ": " + e.what(), line_no);
    }
    pos = nl + 1;
    good = pos;
  }
  if (good < text.size()) fs::resize_file(path, good);
  return lines;
}

json config_json(const ExperimentConfig& c) {
  return {{"fixation_ms", c.fixation_ms}, {"stimulus_ms", c.stimulus_ms}, {"mask_ms", c.mask_ms},
          {"feedback_ms", c.feedback_ms}, {"correction_ms", c.correction_ms}, {"epochs", c.epochs},
          {"practice_trials", c.practice_trials}, {"labels", c.labels}, {"display_size", c.display_size}};
}

RgbImage fixation_image(int size) {
  RgbImage img(size, size, 128);
  const int c = size / 2, arm = std::max(4, size / 20), half = std::max(1, size / 112);
  for (int y = c - arm; y <= c + arm; ++y)
    for (int x = c - half; x <= c + half; ++x) {
      std::fill_n(img.at(x, y), 3, 0);
      std::fill_n(img.at(y, x), 3, 0);
    }
  return img;
}

}  // namespace

void validate_config(const ExperimentConfig& c) {
  for (int v : {c.fixation_ms, c.stimulus_ms, c.mask_ms, c.feedback_ms, c.correction_ms, c.epochs, c.display_size})
    if (v <= 0) throw std::invalid_argument("experiment config: durations, epochs and display size must be positive");
  if (c.practice_trials < 0) throw std::invalid_argument("experiment config: negative practice trial count");
}

std::string_view status_name(SessionStatus s) noexcept {
  switch (s) {
    case SessionStatus::Practice: return "practice";
    case SessionStatus::Training: return "training";
    case SessionStatus::Testing: return "testing";
    case SessionStatus::Finished: return "finished";
  }
  return "?";
}

std::string_view trial_kind_name(TrialKind k) noexcept {
  switch (k) {
    case TrialKind::Practice: return "practice";
    case TrialKind::Train: return "train";
    case TrialKind::Test: return "test";
  }
  return "?";
}

json to_json(const FeedbackDirective& d) {
  json j;
  switch (d.kind) {
    case FeedbackDirective::Kind::None:
      j["feedback"] = "none";
      break;
    case FeedbackDirective::Kind::Correct:
      j = {{"feedback", "correct"}, {"highlight", {{"label", d.chosen_label}, {"color", "green"}, {"duration_ms", d.highlight_ms}}}};
      break;
    case FeedbackDirective::Kind::Incorrect:
      j = {{"feedback", "incorrect"},
           {"highlight", {{"label", d.chosen_label}, {"color", "red"}, {"duration_ms", d.highlight_ms}}},
           {"correction", {{"label", d.correct_label}, {"duration_ms", d.correction_ms}}}};
      break;
  }
  return j;
}

json to_json(const SessionInfo& s) {
  json j{{"protocol_version", kProtocolVersion}, {"session_id", s.session_id}, {"observer_id", s.observer_id},
         {"status", status_name(s.status)}, {"answered", s.answered}, {"total", s.total}};
  if (s.cursor)
    j["cursor"] = {{"kind", trial_kind_name(s.cursor->kind)}, {"epoch", s.cursor->epoch}, {"trial_index", s.cursor->trial_index}};
  else
    j["cursor"] = nullptr;
  return j;
}

RgbImage practice_image(int k, int size) {
  RgbImage img(size, size, 128);
  const double c = (size - 1) / 2.0, r = size * 0.27;
  const int shape = k % 3;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dx = x - c, dy = y - c;
      bool inside = false;
      if (shape == 0) inside = dx * dx + dy * dy <= r * r;
      else if (shape == 1) inside = std::abs(dx) <= r * 0.85 && std::abs(dy) <= r * 0.85;
      else inside = dy <= r * 0.75 && dy >= -r && std::abs(dx) <= (dy + r) * 0.58;
      if (inside) std::fill_n(img.at(x, y), 3, static_cast<std::uint8_t>(205 - 25 * (k / 3 % 3)));
    }
  return img;
}

struct SessionStore::AssetIndex {
  std::unordered_map<std::string, fs::path> stimuli;  // token -> absolute path
  std::vector<std::uint8_t> fixation_png;
};

struct SessionStore::Session {
  std::string id;
  std::string observer_id;
  std::uint64_t seed = 0;
  std::mutex mutex;
  std::vector<TrialRecord> records;
  std::size_t practice_answered = 0;
  std::optional<std::size_t> outstanding;  // position of the issued, unanswered trial
  std::int64_t issued_ms = 0;
  std::vector<std::vector<std::size_t>> train_order, test_order, practice_order;
  int records_fd = -1;
  int practice_fd = -1;

  std::size_t answered() const noexcept { return practice_answered + records.size(); }
  ~Session() {
    if (records_fd >= 0) ::close(records_fd);
    if (practice_fd >= 0) ::close(practice_fd);
  }
};

namespace {

int open_journal(const fs::path& path) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw std::runtime_error("cannot open journal " + path.string());
  return fd;
}

}  // namespace

SessionStore::SessionStore(fs::path data_dir, DatasetManifest manifest, fs::path asset_root, ExperimentConfig config)
    : data_dir_(std::move(data_dir)),
      manifest_(std::move(manifest)),
      asset_root_(std::move(asset_root)),
      config_(std::move(config)),
      assets_(std::make_unique<AssetIndex>()) {
  validate_config(config_);
  validate_manifest(manifest_);
  if (static_cast<int>(manifest_.test_sets.size()) < config_.epochs)
    throw std::invalid_argument("manifest has " + std::to_string(manifest_.test_sets.size()) + " test sets for " +
                                std::to_string(config_.epochs) + " epochs");
  fs::create_directories(data_dir_ / "sessions");
  const auto store_file = data_dir_ / "store.json";
  if (fs::exists(store_file)) {
    std::ifstream in(store_file);
    token_key_ = json::parse(in).at("token_key").get<std::uint64_t>();
  } else {
    token_key_ = os_random64();
    write_atomically(store_file, json{{"protocol_version", kProtocolVersion}, {"token_key", token_key_}}.dump() + "\n");
  }
  auto index = [&](const ImageRef& ref) {
    const auto path = asset_root_ / image_path(ref);
    if (!fs::exists(path)) throw std::runtime_error("missing stimulus asset " + path.string());
    assets_->stimuli.emplace(stimulus_token(ref.image_id), path);
  };
  for (const auto& r : manifest_.training_set) index(r);
  for (int e = 0; e < config_.epochs; ++e)
    for (const auto& t : manifest_.test_sets[e]) index(t.ref);
  assets_->fixation_png = encode_png(fixation_image(config_.display_size));
  restore();
}

SessionStore::~SessionStore() = default;

std::size_t SessionStore::trials_per_session() const noexcept {
  return static_cast<std::size_t>(config_.practice_trials) +
         static_cast<std::size_t>(config_.epochs) * (manifest_.training_set.size() + manifest_.test_sets.front().size());
}

std::string SessionStore::stimulus_token(const std::string& image_id) const {
  const auto h = fnv1a(std::as_bytes(std::span(image_id.data(), image_id.size())));
  return "s" + hex64(derive_key(token_key_, {h}));
}

TrialSlot SessionStore::slot_at(std::size_t pos) const {
  const auto practice = static_cast<std::size_t>(config_.practice_trials);
  if (pos < practice) return {TrialKind::Practice, 0, static_cast<int>(pos)};
  const std::size_t n_train = manifest_.training_set.size(), n_test = manifest_.test_sets.front().size();
  const std::size_t q = pos - practice, block = n_train + n_test;
  const int epoch = static_cast<int>(q / block) + 1;
  const std::size_t r = q % block;
  if (r < n_train) return {TrialKind::Train, epoch, static_cast<int>(r)};
  return {TrialKind::Test, epoch, static_cast<int>(r - n_train)};
}

namespace {

std::vector<std::size_t> seeded_order(std::size_t n, std::uint64_t key) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(key);
  rng.shuffle(order);
  return order;
}

}  // namespace

SessionInfo SessionStore::create_session(const std::string& observer_id, std::optional<std::uint64_t> seed) {
  if (observer_id.empty()) throw SessionError(SessionError::Code::BadRequest, "observer_id must not be empty");
  std::unique_lock lock(mutex_);
  if (config_.exclusive_observer)
    for (const auto& [id, s] : sessions_)
      if (s->observer_id == observer_id) {
        std::lock_guard slock(s->mutex);
        if (s->answered() < trials_per_session())
          throw SessionError(SessionError::Code::Conflict, "observer '" + observer_id + "' already has active session " + id);
      }
  auto s = std::make_unique<Session>();
  s->observer_id = observer_id;
  s->seed = seed ? *seed : os_random64();
  do s->id = hex64(os_random64());
  while (sessions_.count(s->id) || fs::exists(data_dir_ / "sessions" / s->id));
  const auto dir = data_dir_ / "sessions" / s->id;
  fs::create_directories(dir);
  write_atomically(dir / "meta.json", json{{"protocol_version", kProtocolVersion},
                                           {"session_id", s->id},
                                           {"observer_id", observer_id},
                                           {"seed", s->seed},
                                           {"manifest_seed", manifest_.seed},
                                           {"created_ms", now_ms()},
                                           {"config", config_json(config_)}}
                                          .dump(2) + "\n");
  fsync_path(dir.parent_path(), O_RDONLY | O_DIRECTORY);
  for (int e = 1; e <= config_.epochs; ++e) {
    s->train_order.push_back(seeded_order(manifest_.training_set.size(), derive_key(s->seed, {label_hash("train"), static_cast<std::uint64_t>(e)})));
    s->test_order.push_back(seeded_order(manifest_.test_sets[e - 1].size(), derive_key(s->seed, {label_hash("test"), static_cast<std::uint64_t>(e)})));
  }
  s->practice_order.push_back(seeded_order(static_cast<std::size_t>(config_.practice_trials), derive_key(s->seed, {label_hash("practice")})));
  s->records_fd = open_journal(dir / "records.jsonl");
  s->practice_fd = open_journal(dir / "practice.jsonl");
  const std::string id = s->id;
  sessions_.emplace(id, std::move(s));
  lock.unlock();
  return info(id);
}

void SessionStore::restore() {
  for (const auto& entry : fs::directory_iterator(data_dir_ / "sessions")) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "meta.json")) continue;
    std::ifstream in(entry.path() / "meta.json");
    const auto meta = json::parse(in);
    const auto& cfg = meta.at("config");
    if (cfg.at("epochs").get<int>() != config_.epochs || cfg.at("practice_trials").get<int>() != config_.practice_trials)
      throw std::runtime_error("session " + entry.path().filename().string() + " was created with a different protocol");
    if (meta.at("manifest_seed").get<std::uint64_t>() != manifest_.seed)
      throw std::runtime_error("session " + entry.path().filename().string() + " belongs to a different manifest");
    auto s = std::make_unique<Session>();
    s->id = meta.at("session_id").get<std::string>();
    s->observer_id = meta.at("observer_id").get<std::string>();
    s->seed = meta.at("seed").get<std::uint64_t>();
    for (int e = 1; e <= config_.epochs; ++e) {
      s->train_order.push_back(seeded_order(manifest_.training_set.size(), derive_key(s->seed, {label_hash("train"), static_cast<std::uint64_t>(e)})));
      s->test_order.push_back(seeded_order(manifest_.test_sets[e - 1].size(), derive_key(s->seed, {label_hash("test"), static_cast<std::uint64_t>(e)})));
    }
    s->practice_order.push_back(seeded_order(static_cast<std::size_t>(config_.practice_trials), derive_key(s->seed, {label_hash("practice")})));
    s->practice_answered = read_journal(entry.path() / "practice.jsonl").size();
    for (const auto& j : read_journal(entry.path() / "records.jsonl")) s->records.push_back(record_from_json(j));
    if (s->practice_answered > static_cast<std::size_t>(config_.practice_trials) ||
        (!s->records.empty() && s->practice_answered != static_cast<std::size_t>(config_.practice_trials)))
      throw std::runtime_error("session " + s->id + ": inconsistent practice journal");
    validate_protocol_order(s->records, Protocol{config_.epochs, static_cast<int>(manifest_.training_set.size()),
                                                 static_cast<int>(manifest_.test_sets.front().size())},
                            true);
    s->records_fd = open_journal(entry.path() / "records.jsonl");
    s->practice_fd = open_journal(entry.path() / "practice.jsonl");
    sessions_.emplace(s->id, std::move(s));
  }
}

SessionStore::Session& SessionStore::find(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw SessionError(SessionError::Code::NotFound, "unknown session '" + session_id + "'");
  return *it->second;
}

namespace {

SessionInfo make_info(const std::string& id, const std::string& observer, std::size_t answered, std::size_t total,
                      const std::optional<TrialSlot>& cursor) {
  SessionInfo info{id, observer, SessionStatus::Finished, answered, total, cursor};
  if (cursor)
    info.status = cursor->kind == TrialKind::Practice ? SessionStatus::Practice
                  : cursor->kind == TrialKind::Train  ? SessionStatus::Training
                                                      : SessionStatus::Testing;
  return info;
}

}  // namespace

SessionInfo SessionStore::info(const std::string& session_id) const {
  auto& s = find(session_id);
  std::lock_guard lock(s.mutex);
  const auto total = trials_per_session();
  const auto answered = s.answered();
  return make_info(s.id, s.observer_id, answered, total, answered < total ? std::optional(slot_at(answered)) : std::nullopt);
}

std::vector<SessionInfo> SessionStore::sessions() const {
  std::vector<std::string> ids;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, s] : sessions_) ids.push_back(id);
  }
  std::vector<SessionInfo> out;
  for (const auto& id : ids) out.push_back(info(id));
  return out;
}

json SessionStore::next_trial(const std::string& session_id) {
  auto& s = find(session_id);
  std::lock_guard lock(s.mutex);
  const auto pos = s.answered();
  if (pos >= trials_per_session()) throw SessionError(SessionError::Code::Conflict, "session " + s.id + " is finished");
  if (s.outstanding)
    throw SessionError(SessionError::Code::Conflict, "trial t" + std::to_string(*s.outstanding) + " is still outstanding");
  const auto slot = slot_at(pos);
  std::string stimulus;
  if (slot.kind == TrialKind::Practice) {
    stimulus = "p" + std::to_string(s.practice_order[0][slot.trial_index]);
  } else {
    const auto& id = slot.kind == TrialKind::Train
                         ? manifest_.training_set[s.train_order[slot.epoch - 1][slot.trial_index]].image_id
                         : manifest_.test_sets[slot.epoch - 1][s.test_order[slot.epoch - 1][slot.trial_index]].ref.image_id;
    stimulus = stimulus_token(id);
  }
  const std::string prefix = "/v1/assets/";
  json options = json::array();
  for (int i = 0; i < 3; ++i) options.push_back({{"label", i}, {"name", config_.labels[i]}});
  s.outstanding = pos;
  s.issued_ms = now_ms();
  return {{"protocol_version", kProtocolVersion},
          {"session_id", s.id},
          {"trial_id", "t" + std::to_string(pos)},
          {"kind", trial_kind_name(slot.kind)},
          {"epoch", slot.epoch},
          {"trial_index", slot.trial_index},
          {"assets",
           {{"fixation", prefix + "fixation.png"},
            {"stimulus", prefix + stimulus + ".png"},
            {"mask", prefix + "m" + hex64(derive_key(s.seed, {label_hash("mask"), pos})) + ".png"}}},
          {"schedule", {{"fixation_ms", config_.fixation_ms}, {"stimulus_ms", config_.stimulus_ms}, {"mask_ms", config_.mask_ms}}},
          {"display_size", config_.display_size},
          {"options", options},
          {"feedback", slot.kind != TrialKind::Test},
          {"progress", {{"answered", pos}, {"total", trials_per_session()}}}};
}

FeedbackDirective SessionStore::submit_response(const std::string& session_id, const std::string& trial_id,
                                                int response_label, const ClientReport& report) {
  auto& s = find(session_id);
  std::lock_guard lock(s.mutex);
  std::size_t pos = 0;
  {
    std::size_t used = 0;
    bool ok = trial_id.size() > 1 && trial_id[0] == 't';
    if (ok) {
      try {
        pos = std::stoull(trial_id.substr(1), &used);
        ok = used == trial_id.size() - 1;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) throw SessionError(SessionError::Code::BadRequest, "unknown trial id '" + trial_id + "'");
  }
  if (pos < s.answered()) throw SessionError(SessionError::Code::Conflict, "trial " + trial_id + " was already answered");
  if (!s.outstanding || *s.outstanding != pos)
    throw SessionError(SessionError::Code::BadRequest, "trial " + trial_id + " is not outstanding");
  if (response_label < 0 || response_label > 2)
    throw SessionError(SessionError::Code::BadRequest, "response label " + std::to_string(response_label) + " is not among the options");

  const auto slot = slot_at(pos);
  const auto ts = now_ms();
  json audit{{"session_id", s.id}, {"trial_id", trial_id}, {"issued_ms", s.issued_ms}};
  if (!report.audit.is_null()) audit["client"] = report.audit;
  int true_label = 0;
  if (slot.kind == TrialKind::Practice) {
    true_label = static_cast<int>(s.practice_order[0][slot.trial_index] % 3);
    json line{{"trial_index", slot.trial_index}, {"practice_image", s.practice_order[0][slot.trial_index]},
              {"true_label", true_label}, {"response_label", response_label}, {"correct", true_label == response_label},
              {"timestamp_ms", ts}, {"audit", audit}};
    if (report.response_time_ms) line["response_time_ms"] = *report.response_time_ms;
    durable_append(s.practice_fd, line.dump() + "\n");
    ++s.practice_answered;
  } else {
    TrialRecord r;
    r.observer_id = s.observer_id;
    r.run = 0;
    r.phase = slot.kind == TrialKind::Train ? Phase::Train : Phase::Test;
    r.epoch = slot.epoch;
    r.trial_index = slot.trial_index;
    r.image_id = slot.kind == TrialKind::Train
                     ? manifest_.training_set[s.train_order[slot.epoch - 1][slot.trial_index]].image_id
                     : manifest_.test_sets[slot.epoch - 1][s.test_order[slot.epoch - 1][slot.trial_index]].ref.image_id;
    true_label = *manifest_.label_of(r.image_id);
    r.true_label = true_label;
    r.response_label = response_label;
    r.scores[response_label] = 1.0;
    r.correct = true_label == response_label;
    r.timestamp_ms = ts;
    r.response_time_ms = report.response_time_ms;
    r.audit = std::move(audit);
    durable_append(s.records_fd, to_json(r).dump() + "\n");
    s.records.push_back(std::move(r));
  }
  s.outstanding.reset();

  FeedbackDirective d;
  if (slot.kind == TrialKind::Test) return d;
  d.chosen_label = response_label;
  d.highlight_ms = config_.feedback_ms;
  if (true_label == response_label) {
    d.kind = FeedbackDirective::Kind::Correct;
  } else {
    d.kind = FeedbackDirective::Kind::Incorrect;
    d.correct_label = true_label;
    d.correction_ms = config_.correction_ms;
  }
  return d;
}

SessionLog SessionStore::export_session(const std::string& session_id, bool partial) const {
  auto& s = find(session_id);
  std::lock_guard lock(s.mutex);
  if (!partial && s.answered() < trials_per_session())
    throw SessionError(SessionError::Code::Conflict, "session " + s.id + " is not finished (" + std::to_string(s.answered()) +
                                                         " of " + std::to_string(trials_per_session()) + " trials answered)");
  return SessionLog{s.observer_id, 0, s.records, {}};
}

std::vector<std::uint8_t> SessionStore::asset(const std::string& token) const {
  if (token == "fixation") return assets_->fixation_png;
  if (token.size() == 17 && token[0] == 'm') {
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(token.substr(1), nullptr, 16);
    } catch (const std::exception&) {
      throw SessionError(SessionError::Code::NotFound, "unknown asset");
    }
    return encode_png(pink_noise_mask(seed, config_.display_size, config_.display_size).pixels);
  }
  if (token.size() > 1 && token[0] == 'p') {
    int k = -1;
    try {
      k = std::stoi(token.substr(1));
    } catch (const std::exception&) {
    }
    if (k < 0 || k >= config_.practice_trials || token != "p" + std::to_string(k))
      throw SessionError(SessionError::Code::NotFound, "unknown asset");
    return encode_png(practice_image(k, config_.display_size));
  }
  auto it = assets_->stimuli.find(token);
  if (it == assets_->stimuli.end()) throw SessionError(SessionError::Code::NotFound, "unknown asset");
  std::ifstream in(it->second, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace embryolab
