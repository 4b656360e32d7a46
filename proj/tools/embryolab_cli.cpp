// embryolab: gen -> dataset -> train -> analyze, plus ingest and serve.

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "embryolab/pipeline.hpp"
#include "embryolab/report.hpp"
#include "embryolab/server.hpp"
#include "embryolab/session.hpp"

namespace fs = std::filesystem;
using namespace embryolab;

namespace {

SessionServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

fs::path default_out() {
  if (const char* env = std::getenv("EMBRYOLAB_DATA_DIR"); env && *env) return env;
  return "embryolab-data";
}

std::map<std::string, std::string> read_groups(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::map<std::string, std::string> groups;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("observer", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("group file line without comma: " + line);
    groups[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return groups;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Novel-object learning pipeline: mesh growth, rendering, dataset, learner, analysis, session service"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  fs::path out = default_out();
  unsigned threads = 0;
  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--out", out, "data directory (default $EMBRYOLAB_DATA_DIR or ./embryolab-data)");
    cmd->add_option("--threads", threads, "worker threads (0 = all cores)");
  };

  auto* gen = app.add_subcommand("gen", "grow the taxonomy and render every view");
  common(gen);
  GenOptions gen_opts;
  gen->add_option("--masks", gen_opts.masks, "pink-noise masks to write")->check(CLI::NonNegativeNumber);
  gen->add_flag("--force", gen_opts.force, "regenerate even when outputs match");

  auto* dataset = app.add_subcommand("dataset", "SSIM-filter the renderings and compose the splits");
  common(dataset);

  auto* train = app.add_subcommand("train", "run the built-in learner on the manifest");
  common(train);
  TrainOptions train_opts;
  train->add_option("--runs", train_opts.session.runs)->check(CLI::PositiveNumber);
  train->add_option("--epochs", train_opts.session.epochs)->check(CLI::Range(1, kEpochs));
  train->add_option("--batch", train_opts.session.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--lr", train_opts.session.learning_rate)->check(CLI::PositiveNumber);
  train->add_option("--observer", train_opts.session.observer_id);

  auto* ingest = app.add_subcommand("ingest", "validate external JSON Lines logs and copy them into <out>/logs");
  common(ingest);
  std::vector<fs::path> ingest_files;
  bool allow_incomplete = false;
  ingest->add_option("files", ingest_files)->required()->check(CLI::ExistingFile);
  ingest->add_flag("--allow-incomplete", allow_incomplete);

  auto* analyze = app.add_subcommand("analyze", "curves, generalisation lag, efficiency, split and inclusion reports");
  common(analyze);
  std::vector<fs::path> analyze_files;
  fs::path report_dir, metadata_file, group_file;
  bool inclusion = false;
  std::string chance = "clopper-pearson";
  analyze->add_option("logs", analyze_files, "log files (default: <out>/logs/*.jsonl)")->check(CLI::ExistingFile);
  analyze->add_option("--report", report_dir, "report directory (default <out>/report)");
  analyze->add_option("--metadata", metadata_file, "CSV name,top1,parameters joined onto the lag table")->check(CLI::ExistingFile);
  analyze->add_option("--groups", group_file, "CSV observer,group for aggregation")->check(CLI::ExistingFile);
  std::vector<std::string> inclusion_groups;
  analyze->add_flag("--inclusion", inclusion, "drop logs failing the inclusion filter before aggregation");
  analyze->add_option("--inclusion-group", inclusion_groups, "restrict --inclusion to these groups");
  analyze->add_option("--chance", chance, "chance bound rule")->check(CLI::IsMember({"clopper-pearson", "binomial-quantile"}));

  auto* serve = app.add_subcommand("serve", "run the session service for live observers");
  common(serve);
  std::string addr = "127.0.0.1:8080";
  ExperimentConfig exp;
  serve->add_option("--addr", addr, "host:port");
  serve->add_option("--practice", exp.practice_trials)->check(CLI::NonNegativeNumber);
  serve->add_flag("!--allow-concurrent-observer", exp.exclusive_observer, "allow several open sessions per observer");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      gen_opts.threads = threads;
      const auto s = run_gen(seed, out, gen_opts);
      std::cout << (s.skipped ? "up to date: " : "generated: ") << s.meshes << " meshes, " << s.renderings
                << " renderings (coverage " << s.min_coverage << ".." << s.max_coverage << "), " << s.masks << " masks, digest " << std::hex << s.digest << std::dec << '\n';
    } else if (*dataset) {
      const auto m = run_dataset(seed, out, threads);
      std::size_t test = 0;
      for (const auto& t : m.test_sets) test += t.size();
      std::cout << "pool " << m.pool.size() << ", training " << m.training_set.size() << ", test sets "
                << m.test_sets.size() << " (" << test << " images) -> " << (out / "manifest.jsonl").string() << '\n';
    } else if (*train) {
      train_opts.session.threads = threads;
      const auto logs = run_train(seed, out, train_opts);
      const auto manifest = read_manifest(out / "manifest.jsonl");
      const auto result = analyze_logs(logs, &manifest);
      const auto& c = result.observers.front().curves;
      std::cout << logs.size() << " runs logged under " << (out / "logs").string() << "\nepoch  train   test\n";
      for (std::size_t e = 0; e < c.epochs(); ++e)
        std::printf("%5zu  %.3f  %.3f\n", e + 1, c.acc_train[e], c.acc_test[e]);
    } else if (*ingest) {
      std::optional<DatasetManifest> manifest;
      if (fs::exists(out / "manifest.jsonl")) manifest = read_manifest(out / "manifest.jsonl");
      fs::create_directories(out / "logs");
      int failures = 0;
      for (const auto& f : ingest_files) {
        try {
          IngestOptions opt;
          opt.allow_incomplete = allow_incomplete;
          opt.manifest = manifest ? &*manifest : nullptr;
          const auto res = read_session_logs(f, opt);
          for (const auto& w : res.warnings) std::cerr << f.string() << ": warning: " << w << '\n';
          for (const auto& log : res.logs) {
            std::cout << f.string() << ": " << log.observer_id << " run " << log.run << ", " << log.records.size()
                      << " records\n";
          }
          fs::copy_file(f, out / "logs" / f.filename(), fs::copy_options::overwrite_existing);
        } catch (const std::exception& e) {
          std::cerr << f.string() << ": " << e.what() << '\n';
          ++failures;
        }
      }
      return failures ? 1 : 0;
    } else if (*analyze) {
      if (analyze_files.empty() && fs::exists(out / "logs"))
        for (const auto& e : fs::directory_iterator(out / "logs"))
          if (e.path().extension() == ".jsonl") analyze_files.push_back(e.path());
      std::sort(analyze_files.begin(), analyze_files.end());
      if (analyze_files.empty()) throw std::runtime_error("no logs to analyze");
      std::optional<DatasetManifest> manifest;
      if (fs::exists(out / "manifest.jsonl")) manifest = read_manifest(out / "manifest.jsonl");
      std::vector<SessionLog> logs;
      int failures = 0;
      for (const auto& f : analyze_files) {
        try {
          IngestOptions opt;
          opt.manifest = manifest ? &*manifest : nullptr;
          auto res = read_session_logs(f, opt);
          for (const auto& w : res.warnings) std::cerr << f.string() << ": warning: " << w << '\n';
          for (auto& l : res.logs) logs.push_back(std::move(l));
        } catch (const std::exception& e) {
          std::cerr << f.string() << ": " << e.what() << '\n';
          ++failures;
        }
      }
      if (failures) return 1;
      AnalyzeOptions opt;
      opt.apply_inclusion = inclusion;
      opt.inclusion_groups.insert(inclusion_groups.begin(), inclusion_groups.end());
      opt.rule = chance == "clopper-pearson" ? ChanceRule::ClopperPearson : ChanceRule::BinomialQuantile;
      if (!group_file.empty()) opt.groups = read_groups(group_file);
      const auto result = analyze_logs(logs, manifest ? &*manifest : nullptr, opt);
      const auto metadata = metadata_file.empty() ? std::vector<ModelMetadata>{} : read_model_metadata(metadata_file);
      if (report_dir.empty()) report_dir = out / "report";
      for (const auto& p : write_report(result, logs, report_dir, metadata, opt.rule)) std::cout << p.string() << '\n';
      std::cout << "Observer,DeltaG,Epochs\n";
      for (const auto& o : result.observers)
        std::cout << o.name << ',' << (o.lag.computable() ? std::to_string(o.lag.delta_g) : "NA") << ','
                  << (o.lag.epochs ? o.lag.epochs->label() : "NA") << '\n';
    } else if (*serve) {
      const auto [host, port] = parse_address(addr);
      SessionStore store(out / "sessions_store", read_manifest(out / "manifest.jsonl"), out, exp);
      SessionServer server(store);
      const int bound = server.bind(host, port);
      if (bound < 0) throw std::runtime_error("cannot bind " + addr + " (port busy?)");
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on " << host << ':' << bound << std::endl;
      server.listen();
      g_server = nullptr;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
