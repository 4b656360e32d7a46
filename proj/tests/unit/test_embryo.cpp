#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <cstring>
#include <map>

#include "embryolab/embryo.hpp"
#include "support.hpp"

using namespace embryolab;

namespace {

// Brute-force manifold check: every undirected edge appears in exactly two faces, once in each direction.
bool brute_force_manifold(const Mesh& m) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const auto& f : m.faces)
    for (int i = 0; i < 3; ++i) ++directed[{f[i], f[(i + 1) % 3]}];
  for (const auto& [e, count] : directed) {
    if (count != 1) return false;
    auto it = directed.find({e.second, e.first});
    if (it == directed.end() || it->second != 1) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("icosahedron") {
  const auto ico = icosahedron();
  CHECK(ico.vertices.size() == 12);
  CHECK(ico.faces.size() == 20);
  CHECK(edge_count(ico) == 30);
  CHECK(static_cast<long>(ico.vertices.size()) - static_cast<long>(edge_count(ico)) + static_cast<long>(ico.faces.size()) == 2);
  CHECK(signed_volume(ico) > 0.0);
  CHECK(check_mesh(ico).ok());
  CHECK(ico.lineage.generation == 0);
  CHECK_FALSE(ico.lineage.parent_id.has_value());
}

TEST_CASE("zero growth preserves geometry") {
  const auto ico = icosahedron();
  for (std::uint64_t seed : {1, 99}) {
    const auto child = grow(ico, GrowthParams{}, seed);
    CHECK(same_geometry(child, ico));
    CHECK(child.lineage.generation == 1);
    CHECK(child.lineage.parent_id == ico.lineage.object_id);
  }
}

TEST_CASE("growth with the parent-generation parameters") {
  const auto ico = icosahedron();
  const auto a = grow(ico, kParentGenerationParams, 12345);
  const auto b = grow(ico, kParentGenerationParams, 12345);
  CHECK(a.vertices.size() == b.vertices.size());
  CHECK(std::memcmp(a.vertices.data(), b.vertices.data(), a.vertices.size() * sizeof(Vec3)) == 0);
  CHECK(a.faces == b.faces);
  CHECK(vertex_hausdorff(a, ico) > 0.0);
  CHECK(brute_force_manifold(a));
  CHECK(check_mesh(a).ok());
  CHECK(signed_volume(a) > 0.0);
  CHECK_FALSE(same_geometry(a, grow(ico, kParentGenerationParams, 12346)));
}

TEST_CASE("growth errors") {
  const auto ico = icosahedron();
  GrowthParams hydro = kParentGenerationParams;
  hydro.hydro_pcd = 1;
  CHECK_THROWS_AS(grow(ico, hydro, 1), GrowthError);
  const auto g1 = grow(ico, kParentGenerationParams, 1);
  const auto g2 = grow(g1, kSecondGenerationParams, 2);
  CHECK_THROWS_AS(grow(g2, kSecondGenerationParams, 3), GrowthError);
  Mesh broken = ico;
  broken.faces.pop_back();
  CHECK_THROWS(grow(broken, kSecondGenerationParams, 1));
}

TEST_CASE("small taxonomy: lineage, determinism, validity") {
  TaxonomyOptions opt;
  opt.children_per_parent = 4;
  const auto a = spawn_taxonomy(77, opt);
  const auto b = spawn_taxonomy(77, opt);
  REQUIRE(a.size() == 3 + 12);
  std::map<std::string, const Mesh*> by_id;
  for (const auto& m : a) by_id[m.lineage.object_id] = &m;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(same_geometry(a[i], b[i]));
    CHECK(a[i].lineage.object_id == b[i].lineage.object_id);
    CHECK(check_mesh(a[i]).ok());
    CHECK(brute_force_manifold(a[i]));
    const auto& lin = a[i].lineage;
    REQUIRE(lin.category.has_value());
    if (lin.generation == 1) {
      CHECK(lin.object_id == category_name(*lin.category));
    } else {
      CHECK(lin.generation == 2);
      REQUIRE(lin.parent_id.has_value());
      const auto* parent = by_id.at(*lin.parent_id);
      CHECK(parent->lineage.generation == 1);
      CHECK(parent->lineage.category == lin.category);
    }
  }
  CHECK(a[3].lineage.object_id == "Lauz_000");

  const auto dir = testsupport::temp_dir("taxonomy");
  const auto manifest = export_taxonomy(a, dir);
  std::ifstream in(manifest);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 15);
  const auto back = read_off(dir / "objects" / "Puns" / "Puns_002.off");
  CHECK(same_geometry(back, *by_id.at("Puns_002")));
  std::filesystem::remove_all(dir);
}

TEST_CASE("mesh checks flag defects") {
  auto m = icosahedron();
  m.vertices.push_back(m.vertices[0]);
  m.faces[0][0] = static_cast<std::uint32_t>(m.vertices.size() - 1);
  auto c = check_mesh(m);
  CHECK_FALSE(c.no_duplicate_vertices);
  auto flipped = icosahedron();
  for (auto& f : flipped.faces) std::swap(f[1], f[2]);
  CHECK_FALSE(check_mesh(flipped).positive_volume);
  auto out_of_range = icosahedron();
  out_of_range.faces[3][1] = 99;
  CHECK_FALSE(check_mesh(out_of_range).indices_in_range);
  CHECK_THROWS_AS(validate_mesh(out_of_range), MeshError);
}
