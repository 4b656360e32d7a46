#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "embryolab/dataset.hpp"
#include "embryolab/learner.hpp"
#include "embryolab/report.hpp"

namespace embryolab {

/// Per-stage seeds fanned out from one master seed.
struct StageSeeds {
  std::uint64_t gen = 0;
  std::uint64_t dataset = 0;
  std::uint64_t train = 0;
  std::uint64_t masks = 0;
};

StageSeeds stage_seeds(std::uint64_t master_seed) noexcept;

struct GenOptions {
  unsigned threads = 0;
  int masks = 20;
  bool force = false;
};

struct GenSummary {
  std::size_t meshes = 0;
  std::size_t renderings = 0;
  std::size_t masks = 0;
  std::uint64_t digest = 0;
  double min_coverage = 0.0;  // silhouette coverage extremes over all renderings
  double max_coverage = 0.0;
  bool skipped = false;  // outputs already present with a matching digest
};

/// Taxonomy, meshes, 23 renderings per second-generation object and pink-noise masks under `out`:
///   taxonomy.jsonl, objects/<cat>/<id>.off, images/<cat>/<image_id>.png, masks/mask_<i>.png, gen.json
GenSummary run_gen(std::uint64_t master_seed, const std::filesystem::path& out, const GenOptions& options = {});

/// Digest over every file run_gen writes, read back from disk.
std::uint64_t gen_outputs_digest(const std::filesystem::path& out);

/// Reads the initial-view renderings of the second generation, filters by SSIM coherence
/// and writes manifest.jsonl plus similarity/*.csv.
DatasetManifest run_dataset(std::uint64_t master_seed, const std::filesystem::path& out, unsigned threads = 0);

/// Loads the manifest's images from `root` into learner tensors.
ImageTable load_image_table(const DatasetManifest& manifest, const std::filesystem::path& root, const ModelConfig& config);

struct TrainOptions {
  SessionOptions session;
  ModelConfig model;
};

/// Runs the learner and writes logs/<observer>_run<NN>.jsonl, the evaluation digest
/// audit (logs/<observer>_audit.json) and train_curves.csv.
std::vector<SessionLog> run_train(std::uint64_t master_seed, const std::filesystem::path& out, TrainOptions options = {});

}  // namespace embryolab
