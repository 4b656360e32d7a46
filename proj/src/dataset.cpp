#include "embryolab/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "embryolab/parallel.hpp"
#include "embryolab/rng.hpp"
#include "embryolab/ssim.hpp"

namespace embryolab {

using nlohmann::json;

ImageRef make_image_ref(const std::string& object_id, Category category, const ViewSpec& view) {
  return {image_id(object_id, view), object_id, category, view};
}

std::filesystem::path image_path(const ImageRef& ref) {
  return std::filesystem::path("images") / std::string(category_name(ref.category)) / (ref.image_id + ".png");
}

std::string_view test_kind_name(TestKind kind) noexcept {
  return kind == TestKind::NovelPerspective ? "novel_perspective" : "novel_object";
}

std::optional<TestKind> parse_test_kind(std::string_view name) noexcept {
  if (name == "novel_perspective") return TestKind::NovelPerspective;
  if (name == "novel_object") return TestKind::NovelObject;
  return std::nullopt;
}

std::optional<int> DatasetManifest::label_of(const std::string& id) const {
  for (const auto& r : training_set)
    if (r.image_id == id) return category_index(r.category);
  for (const auto& set : test_sets)
    for (const auto& t : set)
      if (t.ref.image_id == id) return category_index(t.ref.category);
  return std::nullopt;
}

std::optional<TestKind> DatasetManifest::kind_of(const std::string& id) const {
  for (const auto& set : test_sets)
    for (const auto& t : set)
      if (t.ref.image_id == id) return t.kind;
  return std::nullopt;
}

std::vector<ViewSpec> perspective_test_views() {
  return {{-60, 0}, {-30, 0}, {30, 0}, {60, 0}, {0, -60}, {0, -30}, {0, 30}, {0, 60}};
}

std::vector<ViewSpec> training_views() { return {{0, 0}, {0, 90}}; }

void validate_manifest(const DatasetManifest& m) {
  auto fail = [](const std::string& what) { throw DatasetError("manifest invariant violated: " + what); };

  if (m.training_set.size() != static_cast<std::size_t>(kTrainingImages))
    fail("training set has " + std::to_string(m.training_set.size()) + " images, expected 36");
  if (m.test_sets.size() != static_cast<std::size_t>(kEpochs))
    fail("expected 6 test sets, found " + std::to_string(m.test_sets.size()));

  std::set<std::string> training_ids;
  std::map<Category, std::set<std::string>> train_objects;
  for (const auto& r : m.training_set) {
    if (!training_ids.insert(r.image_id).second) fail("duplicate training image " + r.image_id);
    const auto tv = training_views();
    if (std::find(tv.begin(), tv.end(), r.view) == tv.end()) fail("training image " + r.image_id + " has a non-training view");
    train_objects[r.category].insert(r.object_id);
  }
  for (auto c : kCategories)
    if (train_objects[c].size() != static_cast<std::size_t>(kTrainingObjectsPerCategory))
      fail(std::string(category_name(c)) + " has " + std::to_string(train_objects[c].size()) + " training objects");

  std::set<std::string> seen_test;
  std::map<Category, std::set<std::string>> used_train, used_unseen;
  const auto np_views = perspective_test_views();
  for (std::size_t s = 0; s < m.test_sets.size(); ++s) {
    const auto& set = m.test_sets[s];
    const std::string where = "test set " + std::to_string(s + 1);
    if (set.size() != static_cast<std::size_t>(kTestImagesPerSet))
      fail(where + " has " + std::to_string(set.size()) + " images");
    std::map<Category, std::map<std::string, std::vector<ViewSpec>>> by_object[2];
    for (const auto& t : set) {
      if (training_ids.contains(t.ref.image_id)) fail(where + " contains training image " + t.ref.image_id);
      if (!seen_test.insert(t.ref.image_id).second) fail(t.ref.image_id + " appears in more than one test slot");
      by_object[static_cast<int>(t.kind)][t.ref.category][t.ref.object_id].push_back(t.ref.view);
    }
    for (auto c : kCategories) {
      const auto& np = by_object[0][c];
      const auto& no = by_object[1][c];
      if (np.size() != 1 || no.size() != 1) fail(where + " must hold one trained and one unseen " + std::string(category_name(c)) + " object");
      const auto& [trained_id, trained_views] = *np.begin();
      const auto& [unseen_id, unseen_views] = *no.begin();
      if (!train_objects[c].contains(trained_id)) fail(where + ": " + trained_id + " is not a training object");
      if (train_objects[c].contains(unseen_id)) fail(where + ": " + unseen_id + " was used for training");
      auto sorted = [](std::vector<ViewSpec> v) { std::sort(v.begin(), v.end()); return v; };
      auto expected_no = np_views;
      expected_no.push_back({0, 0});
      if (sorted(trained_views) != sorted(np_views)) fail(where + ": wrong novel-perspective views for " + trained_id);
      if (sorted(unseen_views) != sorted(expected_no)) fail(where + ": wrong novel-object views for " + unseen_id);
      if (!used_train[c].insert(trained_id).second) fail(trained_id + " contributes to more than one test set");
      if (!used_unseen[c].insert(unseen_id).second) fail(unseen_id + " is unseen in more than one test set");
    }
  }
}

std::size_t SimilarityReport::kept_count() const noexcept {
  std::size_t n = 0;
  for (const auto& c : categories) n += c.kept.size();
  return n;
}

SimilarityReport filter_coherent(const std::vector<InitialRendering>& renderings, unsigned threads) {
  SimilarityReport report;
  for (auto c : kCategories) {
    std::vector<const InitialRendering*> members;
    for (const auto& r : renderings)
      if (r.category == c) members.push_back(&r);
    if (members.empty()) throw DatasetError("no renderings for category " + std::string(category_name(c)));
    std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return a->object_id < b->object_id; });
    for (auto* r : members)
      if (r->image.pixels.empty()) throw DatasetError("missing initial rendering for " + r->object_id);

    const std::size_t n = members.size();
    std::vector<std::unique_ptr<SsimPrepared>> prepared(n);
    parallel_for(n, [&](std::size_t i) { prepared[i] = std::make_unique<SsimPrepared>(members[i]->image); }, threads);

    CategorySimilarity cs;
    cs.category = c;
    cs.matrix.assign(n * n, 1.0);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    parallel_for(
        pairs.size(),
        [&](std::size_t p) {
          const auto [i, j] = pairs[p];
          const double s = ssim(*prepared[i], *prepared[j]);
          cs.matrix[i * n + j] = s;
          cs.matrix[j * n + i] = s;
        },
        threads);

    cs.mean_similarity.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      cs.object_ids.push_back(members[i]->object_id);
      if (n < 2) continue;
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) sum += cs.matrix[i * n + j];
      cs.mean_similarity[i] = sum / static_cast<double>(n - 1);
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cs.mean_similarity[a] > cs.mean_similarity[b]; });
    for (std::size_t k = 0; k < n / 2; ++k) cs.kept.push_back(cs.object_ids[order[k]]);
    report.categories.push_back(std::move(cs));
  }
  return report;
}

std::vector<ImageRef> coherent_pool(const SimilarityReport& report) {
  std::vector<ImageRef> pool;
  const auto views = canonical_views();
  for (const auto& cs : report.categories)
    for (const auto& id : cs.kept)
      for (const auto& v : views) pool.push_back(make_image_ref(id, cs.category, v));
  return pool;
}

DatasetManifest compose_splits(const SimilarityReport& report, std::uint64_t seed) {
  DatasetManifest m;
  m.seed = seed;
  m.pool = coherent_pool(report);
  m.test_sets.assign(kEpochs, {});

  for (const auto& cs : report.categories) {
    const auto name = std::string(category_name(cs.category));
    const std::size_t needed = 2 * kTrainingObjectsPerCategory;
    if (cs.kept.size() < needed)
      throw DatasetError("pool too small: " + name + " keeps " + std::to_string(cs.kept.size()) + " objects, need " +
                         std::to_string(needed));
    auto candidates = cs.kept;
    std::sort(candidates.begin(), candidates.end());
    Rng pick(derive_key(seed, {label_hash("objects"), static_cast<std::uint64_t>(cs.category)}));
    pick.shuffle(candidates);
    std::vector<std::string> trained(candidates.begin(), candidates.begin() + kTrainingObjectsPerCategory);
    std::vector<std::string> unseen(candidates.begin() + kTrainingObjectsPerCategory, candidates.begin() + needed);
    // Training objects enter the training set in sorted order; their test-set slot is a separate permutation.
    std::sort(trained.begin(), trained.end());
    for (const auto& id : trained)
      for (const auto& v : training_views()) m.training_set.push_back(make_image_ref(id, cs.category, v));
    Rng assign(derive_key(seed, {label_hash("assignment"), static_cast<std::uint64_t>(cs.category)}));
    assign.shuffle(trained);
    m.training_objects[cs.category] = trained;
    m.unseen_objects[cs.category] = unseen;
  }

  const auto np_views = perspective_test_views();
  for (int s = 0; s < kEpochs; ++s) {
    auto& set = m.test_sets[s];
    for (const auto& cs : report.categories) {
      const auto& trained = m.training_objects[cs.category][s];
      const auto& unseen = m.unseen_objects[cs.category][s];
      for (const auto& v : np_views) set.push_back({make_image_ref(trained, cs.category, v), TestKind::NovelPerspective});
      set.push_back({make_image_ref(unseen, cs.category, {0, 0}), TestKind::NovelObject});
      for (const auto& v : np_views) set.push_back({make_image_ref(unseen, cs.category, v), TestKind::NovelObject});
    }
  }
  validate_manifest(m);
  return m;
}

namespace {

json ref_json(const ImageRef& r) {
  return {{"image_id", r.image_id},       {"object_id", r.object_id},
          {"category", category_name(r.category)}, {"pitch", r.view.pitch_deg},
          {"yaw", r.view.yaw_deg},         {"path", image_path(r).generic_string()}};
}

ImageRef ref_from_json(const json& j) {
  auto cat = parse_category(j.at("category").get<std::string>());
  if (!cat) throw DatasetError("unknown category " + j.at("category").dump());
  ImageRef r;
  r.image_id = j.at("image_id").get<std::string>();
  r.object_id = j.at("object_id").get<std::string>();
  r.category = *cat;
  r.view = ViewSpec::normalized(j.at("pitch").get<int>(), j.at("yaw").get<int>());
  return r;
}

}  // namespace

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  json meta = {{"record", "meta"}, {"version", 1}, {"seed", m.seed}, {"epochs", m.test_sets.size()}};
  for (const auto& [c, ids] : m.training_objects) meta["training_objects"][std::string(category_name(c))] = ids;
  for (const auto& [c, ids] : m.unseen_objects) meta["unseen_objects"][std::string(category_name(c))] = ids;
  out << meta.dump() << '\n';
  for (const auto& r : m.pool) {
    auto j = ref_json(r);
    j["record"] = "pool";
    out << j.dump() << '\n';
  }
  for (const auto& r : m.training_set) {
    auto j = ref_json(r);
    j["record"] = "train";
    j["role"] = "train";
    out << j.dump() << '\n';
  }
  for (std::size_t s = 0; s < m.test_sets.size(); ++s)
    for (const auto& t : m.test_sets[s]) {
      auto j = ref_json(t.ref);
      j["record"] = "test";
      j["role"] = "test";
      j["test_set"] = s + 1;
      j["epoch"] = s + 1;
      j["kind"] = test_kind_name(t.kind);
      out << j.dump() << '\n';
    }
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot read manifest " + path.string());
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  bool saw_meta = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const auto record = j.at("record").get<std::string>();
      if (record == "meta") {
        saw_meta = true;
        m.seed = j.at("seed").get<std::uint64_t>();
        m.test_sets.assign(j.at("epochs").get<std::size_t>(), {});
        for (auto c : kCategories) {
          const auto name = std::string(category_name(c));
          if (j.contains("training_objects") && j["training_objects"].contains(name))
            m.training_objects[c] = j["training_objects"][name].get<std::vector<std::string>>();
          if (j.contains("unseen_objects") && j["unseen_objects"].contains(name))
            m.unseen_objects[c] = j["unseen_objects"][name].get<std::vector<std::string>>();
        }
      } else if (record == "pool") {
        m.pool.push_back(ref_from_json(j));
      } else if (record == "train") {
        m.training_set.push_back(ref_from_json(j));
      } else if (record == "test") {
        const auto s = j.at("test_set").get<std::size_t>();
        if (s < 1 || s > m.test_sets.size()) throw DatasetError("test_set index out of range");
        auto kind = parse_test_kind(j.at("kind").get<std::string>());
        if (!kind) throw DatasetError("unknown test kind");
        m.test_sets[s - 1].push_back({ref_from_json(j), *kind});
      } else {
        throw DatasetError("unknown record type '" + record + "'");
      }
    } catch (const std::exception& e) {
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!saw_meta) throw DatasetError(path.string() + ": missing meta record");
  validate_manifest(m);
  return m;
}

void write_similarity_report(const SimilarityReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream kept(dir / "kept.csv");
  kept << "category,rank,object_id,mean_ssim\n";
  for (const auto& cs : report.categories) {
    const auto name = std::string(category_name(cs.category));
    std::ofstream out(dir / ("similarity_" + name + ".csv"));
    out.precision(10);
    out << "object_id";
    for (const auto& id : cs.object_ids) out << ',' << id;
    out << '\n';
    const auto n = cs.object_ids.size();
    for (std::size_t i = 0; i < n; ++i) {
      out << cs.object_ids[i];
      for (std::size_t j = 0; j < n; ++j) out << ',' << cs.matrix[i * n + j];
      out << '\n';
    }
    kept.precision(10);
    for (std::size_t r = 0; r < cs.kept.size(); ++r) {
      const auto idx = static_cast<std::size_t>(
          std::find(cs.object_ids.begin(), cs.object_ids.end(), cs.kept[r]) - cs.object_ids.begin());
      kept << name << ',' << r + 1 << ',' << cs.kept[r] << ',' << cs.mean_similarity[idx] << '\n';
    }
  }
}

}  // namespace embryolab
