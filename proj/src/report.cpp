#include "embryolab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace embryolab {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw AnalysisError("cannot write " + path.string());
  return out;
}

std::string fmt(double v, int digits = 6) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else if (c != '\r') {
      cells.back() += c;
    }
  }
  return cells;
}

std::optional<double> parse_optional(const std::string& s, const std::string& what, std::size_t line) {
  if (s.empty() || s == "NA") return std::nullopt;
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw AnalysisError("metadata line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
  }
}

const ModelMetadata* find_metadata(const std::vector<ModelMetadata>& metadata, const std::string& name) {
  auto it = std::find_if(metadata.begin(), metadata.end(), [&](const ModelMetadata& m) { return m.name == name; });
  return it == metadata.end() ? nullptr : &*it;
}

std::vector<double> correctness(const SessionLog& log, Phase phase) {
  std::vector<double> flags;
  for (const auto& r : log.records)
    if (r.phase == phase) flags.push_back(r.correct ? 1.0 : 0.0);
  return flags;
}

const char* kPalette[] = {"#d6336c", "#1c7c7d", "#e0a526", "#4263eb", "#5c940d", "#7048e8", "#868e96", "#c2255c"};

}  // namespace

std::vector<ModelMetadata> read_model_metadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw AnalysisError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw AnalysisError("metadata file " + path.string() + " is empty");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> int {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw AnalysisError("metadata header lacks column '" + name + "'");
    return static_cast<int>(it - header.begin());
  };
  const int c_name = column("name"), c_top1 = column("top1"), c_params = column("parameters");
  std::vector<ModelMetadata> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    cells.resize(std::max<std::size_t>(cells.size(), header.size()));
    rows.push_back({cells[c_name], parse_optional(cells[c_top1], "top1", n), parse_optional(cells[c_params], "parameters", n)});
  }
  return rows;
}

AnalysisResult analyze_logs(const std::vector<SessionLog>& logs, const DatasetManifest* manifest,
                            const AnalyzeOptions& options) {
  AnalysisResult result;
  std::map<std::string, std::vector<const SessionLog*>> grouped;
  for (const auto& log : logs) {
    auto rep = inclusion_filter(log, 12, options.rule);
    auto g = options.groups.find(log.observer_id);
    const auto& group = g == options.groups.end() ? log.observer_id : g->second;
    const bool filtered = options.apply_inclusion && (options.inclusion_groups.empty() || options.inclusion_groups.count(group));
    const bool keep = !filtered || rep.included();
    result.inclusion.push_back(std::move(rep));
    if (keep) grouped[group].push_back(&log);
  }
  for (const auto& [name, members] : grouped) {
    ObserverSummary s;
    s.name = name;
    s.logs = members.size();
    std::vector<LearningCurves> curves;
    for (const auto* log : members) curves.push_back(epoch_curves(*log));
    s.curves = aggregate_curves(curves, name);
    s.efficiency = data_efficiency(s.curves);
    s.lag = generalisation_lag(s.curves, options.rule);
    if (manifest) {
      SplitAccuracy mean;
      for (const auto* log : members) {
        const auto one = split_test_accuracy(*log, *manifest);
        if (mean.novel_perspective.empty()) {
          mean = one;
          continue;
        }
        for (std::size_t e = 0; e < std::min(mean.novel_perspective.size(), one.novel_perspective.size()); ++e) {
          mean.novel_perspective[e] += one.novel_perspective[e];
          mean.novel_object[e] += one.novel_object[e];
        }
      }
      for (auto* series : {&mean.novel_perspective, &mean.novel_object})
        for (auto& v : *series) v /= static_cast<double>(members.size());
      s.split = std::move(mean);
    }
    result.observers.push_back(std::move(s));
  }
  return result;
}

void write_curves_csv(const AnalysisResult& result, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "observer,logs,epoch,acc_train,acc_test,best_epoch\n";
  for (const auto& o : result.observers)
    for (std::size_t e = 0; e < o.curves.epochs(); ++e)
      out << csv_cell(o.name) << ',' << o.logs << ',' << e + 1 << ',' << fmt(o.curves.acc_train[e]) << ','
          << fmt(o.curves.acc_test[e]) << ',' << o.curves.best_epoch << '\n';
}

void write_lag_table_csv(const AnalysisResult& result, const std::filesystem::path& path,
                         const std::vector<ModelMetadata>& metadata) {
  auto out = open_out(path);
  out << "Observer,DeltaG,Epochs";
  if (!metadata.empty()) out << ",top1,parameters";
  out << '\n';
  for (const auto& o : result.observers) {
    out << csv_cell(o.name) << ',' << (o.lag.computable() ? fmt(o.lag.delta_g, 3) : "NA") << ','
        << (o.lag.epochs ? o.lag.epochs->label() : "NA");
    if (!metadata.empty()) {
      const auto* m = find_metadata(metadata, o.name);
      out << ',' << (m && m->top1 ? fmt(*m->top1, 4) : "") << ',' << (m && m->parameters ? fmt(*m->parameters, 0) : "");
    }
    out << '\n';
  }
}

void write_efficiency_csv(const AnalysisResult& result, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "observer,epoch,gain_per_image\n";
  for (const auto& o : result.observers)
    for (std::size_t e = 0; e < o.efficiency.gain.size(); ++e)
      out << csv_cell(o.name) << ',' << e + 1 << ',' << fmt(o.efficiency.gain[e], 8) << '\n';
}

void write_split_csv(const AnalysisResult& result, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "observer,epoch,novel_perspective,novel_object\n";
  for (const auto& o : result.observers) {
    if (!o.split) continue;
    for (std::size_t e = 0; e < o.split->novel_perspective.size(); ++e)
      out << csv_cell(o.name) << ',' << e + 1 << ',' << fmt(o.split->novel_perspective[e]) << ','
          << fmt(o.split->novel_object[e]) << '\n';
  }
}

void write_inclusion_csv(const AnalysisResult& result, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "observer,run,window,first_window,last_window,chance_upper,mean_accuracy,mean_lower,mean_upper,"
         "started_at_chance,learned,included\n";
  for (const auto& r : result.inclusion)
    out << csv_cell(r.observer_id) << ',' << r.run << ',' << r.window << ',' << fmt(r.first_window) << ','
        << fmt(r.last_window) << ',' << fmt(r.chance_upper) << ',' << fmt(r.mean_accuracy) << ','
        << fmt(r.mean_interval.lower) << ',' << fmt(r.mean_interval.upper) << ',' << r.started_at_chance << ','
        << r.learned << ',' << r.included() << '\n';
}

void write_moving_average_csv(const std::vector<SessionLog>& logs, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "observer,run,phase,window,position,accuracy\n";
  for (const auto& log : logs)
    for (Phase phase : {Phase::Train, Phase::Test}) {
      const auto flags = correctness(log, phase);
      for (std::size_t w : phase == Phase::Train ? kTrainWindows : kTestWindows) {
        if (w > flags.size()) continue;
        const auto ma = moving_average(flags, w);
        for (std::size_t i = 0; i < ma.size(); ++i)
          out << csv_cell(log.observer_id) << ',' << log.run << ',' << phase_name(phase) << ',' << w << ','
              << i + w << ',' << fmt(ma[i]) << '\n';
      }
    }
}

std::string curves_svg(const std::vector<ObserverSummary>& observers, ChanceRule rule) {
  const double W = 640, H = 420, left = 60, right = 170, top = 30, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  std::size_t epochs = 1;
  int n_train = kTrainingImages;
  for (const auto& o : observers) {
    epochs = std::max(epochs, o.curves.epochs());
    n_train = o.curves.n_train;
  }
  auto x = [&](double epoch) { return left + (epochs > 1 ? (epoch - 1) / static_cast<double>(epochs - 1) : 0.5) * pw; };
  auto y = [&](double acc) { return top + (1.0 - acc) * ph; };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const Interval band{rule == ChanceRule::ClopperPearson
                          ? clopper_pearson(static_cast<int>(std::lround(n_train / 3.0)), n_train).lower
                          : chance_interval(n_train).lower,
                      chance_upper(n_train, rule)};
  s << "<rect x=\"" << left << "\" y=\"" << fmt(y(band.upper), 2) << "\" width=\"" << pw << "\" height=\""
    << fmt(y(band.lower) - y(band.upper), 2) << "\" fill=\"#adb5bd\" fill-opacity=\"0.35\"/>\n";
  for (int t = 0; t <= 10; t += 2) {
    const double a = t / 10.0;
    s << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << fmt(y(a), 2) << "\" y2=\"" << fmt(y(a), 2)
      << "\" stroke=\"#e9ecef\"/>\n";
    s << "<text x=\"" << left - 8 << "\" y=\"" << fmt(y(a) + 4, 2) << "\" text-anchor=\"end\">" << fmt(a, 1) << "</text>\n";
  }
  for (std::size_t e = 1; e <= epochs; ++e)
    s << "<text x=\"" << fmt(x(e), 2) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << e << "</text>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">epoch</text>\n";
  s << "<text transform=\"rotate(-90)\" x=\"" << -(top + ph / 2) << "\" y=\"16\" text-anchor=\"middle\">accuracy</text>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#495057\"/>\n";
  std::size_t i = 0;
  for (const auto& o : observers) {
    const char* colour = kPalette[i % std::size(kPalette)];
    for (bool train : {true, false}) {
      const auto& series = train ? o.curves.acc_train : o.curves.acc_test;
      s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\"" << (train ? " stroke-dasharray=\"6 4\"" : "")
        << " points=\"";
      for (std::size_t e = 0; e < series.size(); ++e) s << fmt(x(e + 1), 2) << ',' << fmt(y(series[e]), 2) << ' ';
      s << "\"/>\n";
    }
    const double ly = top + 14 + 18.0 * static_cast<double>(i);
    s << "<line x1=\"" << left + pw + 12 << "\" x2=\"" << left + pw + 36 << "\" y1=\"" << ly << "\" y2=\"" << ly
      << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << left + pw + 42 << "\" y=\"" << ly + 4 << "\">" << o.name << "</text>\n";
    ++i;
  }
  s << "</svg>\n";
  return s.str();
}

std::string lag_scatter_svg(const AnalysisResult& result, const std::vector<ModelMetadata>& metadata) {
  struct Point {
    std::string name;
    double top1, lag, params;
  };
  std::vector<Point> points;
  double max_params = 0.0;
  for (const auto& o : result.observers) {
    const auto* m = find_metadata(metadata, o.name);
    if (!m || !m->top1 || !o.lag.computable()) continue;
    points.push_back({o.name, *m->top1, o.lag.delta_g, m->parameters.value_or(0.0)});
    max_params = std::max(max_params, points.back().params);
  }
  const double W = 560, H = 420, left = 60, top = 30, pw = 460, ph = 330;
  double x_lo = 1.0, x_hi = 0.0, y_hi = 0.05;
  for (const auto& p : points) {
    x_lo = std::min(x_lo, p.top1);
    x_hi = std::max(x_hi, p.top1);
    y_hi = std::max(y_hi, p.lag);
  }
  if (x_lo >= x_hi) {
    x_lo -= 0.05;
    x_hi += 0.05;
  }
  auto x = [&](double v) { return left + (v - x_lo) / (x_hi - x_lo) * pw * 0.9 + pw * 0.05; };
  auto y = [&](double v) { return top + (1.0 - v / (y_hi * 1.1)) * ph; };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#495057\"/>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 14 << "\" text-anchor=\"middle\">top-1 accuracy</text>\n";
  s << "<text transform=\"rotate(-90)\" x=\"" << -(top + ph / 2) << "\" y=\"16\" text-anchor=\"middle\">delta G</text>\n";
  for (const auto& p : points) {
    const double r = max_params > 0 ? 4.0 + 20.0 * std::sqrt(p.params / max_params) : 6.0;
    s << "<circle cx=\"" << fmt(x(p.top1), 2) << "\" cy=\"" << fmt(y(p.lag), 2) << "\" r=\"" << fmt(r, 2)
      << "\" fill=\"#1c7c7d\" fill-opacity=\"0.5\" stroke=\"#1c7c7d\"/>\n";
    s << "<text x=\"" << fmt(x(p.top1) + r + 3, 2) << "\" y=\"" << fmt(y(p.lag) + 4, 2) << "\">" << p.name << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<std::filesystem::path> write_report(const AnalysisResult& result, const std::vector<SessionLog>& logs,
                                                const std::filesystem::path& dir,
                                                const std::vector<ModelMetadata>& metadata, ChanceRule rule) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written{dir / "curves.csv", dir / "generalisation_lag.csv", dir / "efficiency.csv",
                                             dir / "inclusion.csv", dir / "moving_average.csv", dir / "curves.svg"};
  write_curves_csv(result, written[0]);
  write_lag_table_csv(result, written[1], metadata);
  write_efficiency_csv(result, written[2]);
  write_inclusion_csv(result, written[3]);
  write_moving_average_csv(logs, written[4]);
  open_out(written[5]) << curves_svg(result.observers, rule);
  if (std::any_of(result.observers.begin(), result.observers.end(), [](const auto& o) { return o.split.has_value(); })) {
    written.push_back(dir / "split.csv");
    write_split_csv(result, written.back());
  }
  if (!metadata.empty()) {
    written.push_back(dir / "lag_scatter.svg");
    open_out(written.back()) << lag_scatter_svg(result, metadata);
  }
  return written;
}

}  // namespace embryolab
