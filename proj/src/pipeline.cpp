#include "embryolab/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "embryolab/embryo.hpp"
#include "embryolab/image.hpp"
#include "embryolab/parallel.hpp"
#include "embryolab/render.hpp"
#include "embryolab/rng.hpp"

namespace embryolab {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kGenFormat = 2;

std::vector<std::uint8_t> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string run_name(const std::string& observer, int run) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_run%02d", run);
  return observer + buf;
}

}  // namespace

StageSeeds stage_seeds(std::uint64_t master) noexcept {
  return {derive_key(master, {label_hash("gen")}), derive_key(master, {label_hash("dataset")}),
          derive_key(master, {label_hash("train")}), derive_key(master, {label_hash("masks")})};
}

std::uint64_t gen_outputs_digest(const fs::path& out) {
  std::vector<fs::path> files{out / "taxonomy.jsonl"};
  for (const char* dir : {"objects", "images", "masks"})
    if (fs::exists(out / dir))
      for (const auto& e : fs::recursive_directory_iterator(out / dir))
        if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : files) {
    const auto rel = fs::relative(f, out).generic_string();
    h = fnv1a(std::as_bytes(std::span(rel.data(), rel.size())), h);
    const auto bytes = slurp(f);
    h = fnv1a(std::as_bytes(std::span(bytes)), h);
  }
  return h;
}

GenSummary run_gen(std::uint64_t master_seed, const fs::path& out, const GenOptions& options) {
  const auto seeds = stage_seeds(master_seed);
  const auto record = out / "gen.json";
  if (!options.force && fs::exists(record)) {
    std::ifstream in(record);
    const auto j = json::parse(in, nullptr, false);
    if (!j.is_discarded() && j.value("format", 0) == kGenFormat && j.value("seed", std::uint64_t{0}) == master_seed &&
        j.value("masks", -1) == options.masks && j.value("digest", std::uint64_t{0}) == gen_outputs_digest(out))
      return {j["meshes"].get<std::size_t>(),  j["renderings"].get<std::size_t>(),  j["masks"].get<std::size_t>(),
              j["digest"].get<std::uint64_t>(), j["min_coverage"].get<double>(), j["max_coverage"].get<double>(),
              true};
  }
  for (const char* dir : {"objects", "images", "masks"}) fs::remove_all(out / dir);
  fs::remove(record);

  TaxonomyOptions topt;
  topt.threads = options.threads;
  const auto meshes = spawn_taxonomy(seeds.gen, topt);
  export_taxonomy(meshes, out);

  std::vector<const Mesh*> children;
  for (const auto& m : meshes)
    if (m.lineage.generation == kMaxGeneration) children.push_back(&m);
  for (Category c : kCategories) fs::create_directories(out / "images" / std::string(category_name(c)));
  std::vector<std::pair<double, double>> coverage(children.size());
  parallel_for(
      children.size(),
      [&](std::size_t i) {
        const auto& mesh = *children[i];
        coverage[i] = {1.0, 0.0};
        for (const auto& img : rotation_series(mesh)) {
          coverage[i].first = std::min(coverage[i].first, img.coverage);
          coverage[i].second = std::max(coverage[i].second, img.coverage);
          write_png(img.pixels, out / image_path(make_image_ref(img.object_id, *mesh.lineage.category, img.view)));
        }
      },
      options.threads);

  fs::create_directories(out / "masks");
  parallel_for(
      static_cast<std::size_t>(options.masks),
      [&](std::size_t i) {
        char name[32];
        std::snprintf(name, sizeof name, "mask_%03zu.png", i);
        write_png(pink_noise_mask(derive_key(seeds.masks, {i})).pixels, out / "masks" / name);
      },
      options.threads);

  GenSummary s{meshes.size(), children.size() * canonical_views().size(), static_cast<std::size_t>(options.masks),
               gen_outputs_digest(out), 1.0, 0.0, false};
  for (const auto& [lo, hi] : coverage) {
    s.min_coverage = std::min(s.min_coverage, lo);
    s.max_coverage = std::max(s.max_coverage, hi);
  }
  std::ofstream(record) << json{{"format", kGenFormat},         {"seed", master_seed},
                                {"meshes", s.meshes},           {"renderings", s.renderings},
                                {"masks", s.masks},             {"digest", s.digest},
                                {"min_coverage", s.min_coverage}, {"max_coverage", s.max_coverage}}
                               .dump(2)
                        << '\n';
  return s;
}

DatasetManifest run_dataset(std::uint64_t master_seed, const fs::path& out, unsigned threads) {
  const auto taxonomy = out / "taxonomy.jsonl";
  std::ifstream in(taxonomy);
  if (!in) throw DatasetError("missing " + taxonomy.string() + "; run gen first");
  std::vector<InitialRendering> initial;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    if (j.at("generation").get<int>() != kMaxGeneration) continue;
    const auto cat = parse_category(j.at("category").get<std::string>());
    if (!cat) throw DatasetError("taxonomy entry with unknown category: " + line);
    initial.push_back({j.at("object_id").get<std::string>(), *cat, RgbImage{}});
  }
  parallel_for(
      initial.size(),
      [&](std::size_t i) {
        const auto path = out / image_path(make_image_ref(initial[i].object_id, initial[i].category, ViewSpec{}));
        if (!fs::exists(path)) throw DatasetError("missing rendering " + path.string());
        initial[i].image = read_png(path);
      },
      threads);
  const auto report = filter_coherent(initial, threads);
  auto manifest = compose_splits(report, stage_seeds(master_seed).dataset);
  auto check = [&](const ImageRef& r) {
    if (!fs::exists(out / image_path(r))) throw DatasetError("missing rendering " + (out / image_path(r)).string());
  };
  for (const auto& r : manifest.pool) check(r);
  write_manifest(manifest, out / "manifest.jsonl");
  write_similarity_report(report, out / "similarity");
  return manifest;
}

ImageTable load_image_table(const DatasetManifest& manifest, const fs::path& root, const ModelConfig& config) {
  return build_image_table(manifest, config, [&](const ImageRef& ref) { return read_png(root / image_path(ref)); });
}

std::vector<SessionLog> run_train(std::uint64_t master_seed, const fs::path& out, TrainOptions options) {
  const auto manifest = read_manifest(out / "manifest.jsonl");
  const auto seeds = stage_seeds(master_seed);
  options.session.shuffle_seed = derive_key(seeds.train, {label_hash("shuffle")});
  options.model.init_seed = derive_key(seeds.train, {label_hash("init")});
  const auto images = load_image_table(manifest, out, options.model);
  auto logs = run_session(options.model, manifest, images, options.session);

  fs::create_directories(out / "logs");
  json audit = json::array();
  for (const auto& log : logs) {
    write_session_log(log, out / "logs" / (run_name(log.observer_id, log.run) + ".jsonl"));
    for (const auto& a : log.evaluation_audits)
      audit.push_back({{"run", log.run}, {"epoch", a.epoch}, {"before", a.before}, {"after", a.after}});
  }
  std::ofstream(out / "logs" / (options.session.observer_id + "_audit.json")) << audit.dump(1) << '\n';
  write_curves_csv(analyze_logs(logs, &manifest), out / "train_curves.csv");
  return logs;
}

}  // namespace embryolab
