#include "embryolab/trial_log.hpp"

#include <fstream>
#include <map>
#include <span>

#include "embryolab/dataset.hpp"

namespace embryolab {

using nlohmann::json;

std::string_view phase_name(Phase phase) noexcept { return phase == Phase::Train ? "train" : "test"; }

std::size_t SessionLog::count(Phase phase) const noexcept {
  std::size_t n = 0;
  for (const auto& r : records) n += r.phase == phase ? 1 : 0;
  return n;
}

json to_json(const TrialRecord& r) {
  json j = {{"observer_id", r.observer_id},
            {"run", r.run},
            {"phase", phase_name(r.phase)},
            {"epoch", r.epoch},
            {"trial_index", r.trial_index},
            {"image_id", r.image_id},
            {"true_label", r.true_label},
            {"response_label", r.response_label},
            {"scores", r.scores},
            {"correct", r.correct}};
  if (r.timestamp_ms) j["timestamp_ms"] = *r.timestamp_ms;
  if (r.response_time_ms) j["response_time_ms"] = *r.response_time_ms;
  if (!r.audit.is_null()) j["audit"] = r.audit;
  return j;
}

TrialRecord record_from_json(const json& j) {
  if (!j.is_object()) throw LogError("record is not a JSON object");
  auto field = [&](const char* name) -> const json& {
    auto it = j.find(name);
    if (it == j.end()) throw LogError(std::string("missing field '") + name + "'");
    return *it;
  };
  TrialRecord r;
  try {
    r.observer_id = field("observer_id").get<std::string>();
    r.run = field("run").get<int>();
    const auto phase = field("phase").get<std::string>();
    if (phase == "train") r.phase = Phase::Train;
    else if (phase == "test") r.phase = Phase::Test;
    else throw LogError("phase must be 'train' or 'test', got '" + phase + "'");
    r.epoch = field("epoch").get<int>();
    r.trial_index = field("trial_index").get<int>();
    r.image_id = field("image_id").get<std::string>();
    r.true_label = field("true_label").get<int>();
    r.response_label = field("response_label").get<int>();
    const auto& scores = field("scores");
    if (!scores.is_array() || scores.size() != 3) throw LogError("scores must be an array of 3 numbers");
    for (std::size_t k = 0; k < 3; ++k) r.scores[k] = scores[k].get<double>();
    r.correct = field("correct").get<bool>();
    if (j.contains("timestamp_ms")) r.timestamp_ms = j["timestamp_ms"].get<std::int64_t>();
    if (j.contains("response_time_ms")) r.response_time_ms = j["response_time_ms"].get<double>();
    if (j.contains("audit")) r.audit = j["audit"];
  } catch (const json::exception& e) {
    throw LogError(std::string("bad field type: ") + e.what());
  }
  if (r.true_label < 0 || r.true_label > 2 || r.response_label < 0 || r.response_label > 2)
    throw LogError("labels must be in {0, 1, 2}");
  if (r.correct != (r.true_label == r.response_label)) throw LogError("'correct' disagrees with the labels");
  return r;
}

namespace {

void check_order(const std::vector<TrialRecord>& records, std::span<const std::size_t> lines, const Protocol& p,
                 bool allow_incomplete) {
  int epoch = 1;
  Phase phase = Phase::Train;
  int filled = 0;
  auto block_size = [&](Phase ph) { return ph == Phase::Train ? p.train_per_epoch : p.test_per_epoch; };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::size_t line = lines[i];
    if (r.observer_id != records.front().observer_id || r.run != records.front().run)
      throw LogError("record belongs to a different (observer, run)", line);
    if (filled == block_size(phase)) {
      // Advance to the next block.
      if (phase == Phase::Train) {
        phase = Phase::Test;
      } else {
        phase = Phase::Train;
        ++epoch;
      }
      filled = 0;
    }
    if (epoch > p.epochs) throw LogError("record beyond the final epoch " + std::to_string(p.epochs), line);
    if (r.phase != phase) {
      if (r.phase == Phase::Test)
        throw LogError("phase 'test' inside the training block of epoch " + std::to_string(epoch) + " (" +
                           std::to_string(filled) + " of " + std::to_string(p.train_per_epoch) + " training trials seen)",
                       line);
      throw LogError("phase 'train' inside the test block of epoch " + std::to_string(epoch), line);
    }
    if (r.epoch != epoch)
      throw LogError("expected epoch " + std::to_string(epoch) + ", found " + std::to_string(r.epoch), line);
    if (r.trial_index != filled)
      throw LogError("expected trial_index " + std::to_string(filled) + ", found " + std::to_string(r.trial_index), line);
    ++filled;
  }
  const bool complete = records.size() == p.total_records();
  if (!complete && !allow_incomplete)
    throw LogError("log is incomplete: " + std::to_string(records.size()) + " of " + std::to_string(p.total_records()) +
                   " records");
}

}  // namespace

void validate_protocol_order(const std::vector<TrialRecord>& records, const Protocol& protocol, bool allow_incomplete,
                             std::size_t first_line) {
  std::vector<std::size_t> lines(records.size());
  for (std::size_t i = 0; i < lines.size(); ++i) lines[i] = first_line + i;
  check_order(records, lines, protocol, allow_incomplete);
}

bool is_complete(const SessionLog& log, const Protocol& protocol) {
  try {
    validate_protocol_order(log.records, protocol, false);
    return true;
  } catch (const LogError&) {
    return false;
  }
}

void append_session_log(const SessionLog& log, std::ostream& out) {
  for (const auto& r : log.records) out << to_json(r).dump() << '\n';
}

void write_session_log(const SessionLog& log, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  append_session_log(log, out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

IngestResult read_session_logs(const std::filesystem::path& path, const IngestOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LogError("cannot open " + path.string());
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  IngestResult result;
  std::map<std::pair<std::string, int>, std::size_t> index;
  std::vector<std::vector<std::size_t>> lines;

  std::size_t pos = 0, lineno = 0;
  while (pos < content.size()) {
    ++lineno;
    const auto end = content.find('\n', pos);
    const bool terminated = end != std::string::npos;
    const std::string line = content.substr(pos, terminated ? end - pos : std::string::npos);
    pos = terminated ? end + 1 : content.size();
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw LogError(std::string(terminated ? "malformed JSON" : "truncated final line") + " (" + e.what() +
                         "); partial logs are refused",
                     lineno);
    }
    TrialRecord r;
    try {
      r = record_from_json(j);
    } catch (const LogError& e) {
      throw LogError(e.what(), lineno);
    }
    if (options.manifest && !options.manifest->label_of(r.image_id))
      result.warnings.push_back(path.string() + ":" + std::to_string(lineno) + ": unknown image id '" + r.image_id + "'");
    const auto key = std::make_pair(r.observer_id, r.run);
    auto [it, inserted] = index.emplace(key, result.logs.size());
    if (inserted) {
      result.logs.push_back(SessionLog{r.observer_id, r.run, {}, {}});
      lines.emplace_back();
    }
    result.logs[it->second].records.push_back(std::move(r));
    lines[it->second].push_back(lineno);
  }
  if (result.logs.empty()) throw LogError(path.string() + " holds no records");
  for (std::size_t i = 0; i < result.logs.size(); ++i)
    check_order(result.logs[i].records, lines[i], options.protocol, options.allow_incomplete);
  return result;
}

SessionLog ingest_external_log(const std::filesystem::path& path, const IngestOptions& options) {
  auto result = read_session_logs(path, options);
  if (result.logs.size() != 1)
    throw LogError(path.string() + " holds " + std::to_string(result.logs.size()) + " (observer, run) logs, expected 1");
  return std::move(result.logs.front());
}

}  // namespace embryolab
