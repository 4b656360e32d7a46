#pragma once

// Fixtures shared by unit and acceptance tests.

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "embryolab/dataset.hpp"
#include "embryolab/image.hpp"
#include "embryolab/rng.hpp"
#include "embryolab/trial_log.hpp"

namespace testsupport {

using namespace embryolab;

/// Similarity report whose kept lists hold `per_category` objects named like the taxonomy's.
inline SimilarityReport synthetic_report(int per_category = 50) {
  SimilarityReport rep;
  for (Category c : kCategories) {
    CategorySimilarity cs;
    cs.category = c;
    for (int i = 0; i < per_category; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s_%03d", std::string(category_name(c)).c_str(), i * 2);
      cs.object_ids.push_back(buf);
      cs.kept.push_back(buf);
    }
    rep.categories.push_back(std::move(cs));
  }
  return rep;
}

inline DatasetManifest synthetic_manifest(std::uint64_t seed = 11) { return compose_splits(synthetic_report(), seed); }

/// Writes a flat PNG for every training and test image of the manifest under `root`.
inline void write_placeholder_assets(const DatasetManifest& m, const std::filesystem::path& root, int size = 32) {
  auto put = [&](const ImageRef& r) {
    const auto path = root / image_path(r);
    if (std::filesystem::exists(path)) return;
    std::filesystem::create_directories(path.parent_path());
    RgbImage img(size, size, static_cast<std::uint8_t>(60 + 60 * category_index(r.category)));
    write_png(img, path);
  };
  for (const auto& r : m.training_set) put(r);
  for (const auto& set : m.test_sets)
    for (const auto& t : set) put(t.ref);
}

/// Complete protocol-order log with independent per-record correctness probabilities.
inline SessionLog random_log(Rng& rng, const DatasetManifest& m, const std::string& observer, int run,
                             double p_train = -1.0, double p_test = -1.0) {
  SessionLog log{observer, run, {}, {}};
  if (p_train < 0) p_train = rng.uniform(0.2, 1.0);
  if (p_test < 0) p_test = rng.uniform(0.2, 1.0);
  auto add = [&](Phase phase, int epoch, int index, const ImageRef& ref, double p) {
    TrialRecord r;
    r.observer_id = observer;
    r.run = run;
    r.phase = phase;
    r.epoch = epoch;
    r.trial_index = index;
    r.image_id = ref.image_id;
    r.true_label = category_index(ref.category);
    r.correct = rng.uniform() < p;
    r.response_label = r.correct ? r.true_label : (r.true_label + 1 + static_cast<int>(rng.below(2))) % 3;
    r.scores[r.response_label] = 1.0;
    log.records.push_back(std::move(r));
  };
  for (int e = 1; e <= kEpochs; ++e) {
    auto train = m.training_set;
    rng.shuffle(train);
    for (int i = 0; i < kTrainingImages; ++i) add(Phase::Train, e, i, train[i], p_train);
    for (int i = 0; i < kTestImagesPerSet; ++i) add(Phase::Test, e, i, m.test_sets[e - 1][i].ref, p_test);
  }
  return log;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("embryolab-" + name + "-" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsupport
