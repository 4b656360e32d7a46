#include <doctest.h>

#include <map>
#include <set>

#include "embryolab/dataset.hpp"
#include "support.hpp"

using namespace embryolab;

namespace {

// Invariants recomputed from scratch rather than through validate_manifest.
void check_split_properties(const DatasetManifest& m) {
  REQUIRE(m.training_set.size() == 36);
  REQUIRE(m.test_sets.size() == 6);
  std::set<std::string> train_ids, train_objects, all_test;
  std::map<Category, int> per_cat;
  for (const auto& r : m.training_set) {
    train_ids.insert(r.image_id);
    train_objects.insert(r.object_id);
    ++per_cat[r.category];
  }
  CHECK(train_ids.size() == 36);
  CHECK(train_objects.size() == 18);
  for (Category c : kCategories) CHECK(per_cat[c] == 12);
  std::set<std::string> seen_unseen;
  for (const auto& set : m.test_sets) {
    REQUIRE(set.size() == 51);
    int np = 0, no = 0;
    std::set<std::string> trained_in_set, unseen_in_set;
    for (const auto& t : set) {
      CHECK(all_test.insert(t.ref.image_id).second);  // pairwise disjoint
      CHECK_FALSE(train_ids.count(t.ref.image_id));
      if (t.kind == TestKind::NovelPerspective) {
        ++np;
        CHECK(train_objects.count(t.ref.object_id));
        trained_in_set.insert(t.ref.object_id);
      } else {
        ++no;
        CHECK_FALSE(train_objects.count(t.ref.object_id));
        unseen_in_set.insert(t.ref.object_id);
      }
    }
    CHECK(np == 24);
    CHECK(no == 27);
    CHECK(trained_in_set.size() == 3);
    CHECK(unseen_in_set.size() == 3);
    for (const auto& o : unseen_in_set) CHECK(seen_unseen.insert(o).second);
  }
  // pool membership
  std::set<std::string> pool;
  for (const auto& r : m.pool) pool.insert(r.image_id);
  for (const auto& id : train_ids) CHECK(pool.count(id));
  for (const auto& id : all_test) CHECK(pool.count(id));
}

}  // namespace

TEST_CASE("composed splits satisfy the manifest invariants for many seeds") {
  const auto report = testsupport::synthetic_report();
  for (std::uint64_t seed = 0; seed < 120; ++seed) {
    const auto m = compose_splits(report, seed);
    CHECK(m.pool.size() == 3450);
    check_split_properties(m);
    CHECK_NOTHROW(validate_manifest(m));
  }
  CHECK(compose_splits(report, 5) == compose_splits(report, 5));
  CHECK_FALSE(compose_splits(report, 5) == compose_splits(report, 6));
}

TEST_CASE("manifest round trip through JSON Lines") {
  const auto m = testsupport::synthetic_manifest(3);
  const auto dir = testsupport::temp_dir("manifest");
  write_manifest(m, dir / "manifest.jsonl");
  const auto back = read_manifest(dir / "manifest.jsonl");
  CHECK(back == m);
  CHECK(back.label_of(m.training_set[0].image_id) == category_index(m.training_set[0].category));
  CHECK(back.kind_of(m.test_sets[2][10].ref.image_id) == m.test_sets[2][10].kind);
  CHECK_FALSE(back.label_of("nope").has_value());
  std::filesystem::remove_all(dir);
}

TEST_CASE("validate_manifest rejects broken splits") {
  auto m = testsupport::synthetic_manifest();
  auto dup = m;
  dup.test_sets[1][0] = dup.test_sets[0][0];
  CHECK_THROWS_AS(validate_manifest(dup), DatasetError);
  auto leak = m;
  leak.test_sets[0][0].ref = leak.training_set[0];
  CHECK_THROWS_AS(validate_manifest(leak), DatasetError);
  auto short_train = m;
  short_train.training_set.pop_back();
  CHECK_THROWS_AS(validate_manifest(short_train), DatasetError);
  auto small = testsupport::synthetic_report(11);
  CHECK_THROWS_AS(compose_splits(small, 1), DatasetError);
}

TEST_CASE("coherence filter keeps the most typical half") {
  // Category members are gradients with a per-object offset; two outliers per category are noise.
  std::vector<InitialRendering> in;
  for (Category c : kCategories)
    for (int i = 0; i < 8; ++i) {
      RgbImage img(32, 32);
      Rng rng(derive_key(i, {static_cast<std::uint64_t>(c)}));
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          for (int k = 0; k < 3; ++k)
            img.at(x, y)[k] = i < 6 ? static_cast<std::uint8_t>(x * 6 + y * 2 + i) : static_cast<std::uint8_t>(rng.below(256));
      char id[16];
      std::snprintf(id, sizeof id, "%s_%03d", std::string(category_name(c)).c_str(), i);
      in.push_back({id, c, img});
    }
  const auto one = filter_coherent(in, 1);
  const auto many = filter_coherent(in, 3);
  REQUIRE(one.categories.size() == 3);
  CHECK(one.kept_count() == 12);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(one.categories[k].matrix == many.categories[k].matrix);
    CHECK(one.categories[k].kept == many.categories[k].kept);
    for (const auto& id : one.categories[k].kept) CHECK(id.substr(id.size() - 3) < "006");
    const auto n = one.categories[k].object_ids.size();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        CHECK(one.categories[k].matrix[i * n + j] == one.categories[k].matrix[j * n + i]);
  }
  CHECK(coherent_pool(one).size() == 12 * 23);
}
