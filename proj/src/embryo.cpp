#include "embryolab/embryo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <queue>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "embryolab/parallel.hpp"
#include "embryolab/rng.hpp"

namespace embryolab {

namespace {

enum class EventKind : std::uint8_t { ThresholdGrowth, InteractionGrowth, ShrinkagePcd, ShrinkagePcdInteraction };

std::uint64_t undirected_key(std::uint32_t a, std::uint32_t b) noexcept {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

double face_area(const Mesh& m, const Face& f) noexcept {
  const auto& a = m.vertices[f[0]];
  return 0.5 * norm(cross(m.vertices[f[1]] - a, m.vertices[f[2]] - a));
}

Vec3 random_direction(Rng& rng) {
  for (;;) {
    Vec3 d{rng.normal(), rng.normal(), rng.normal()};
    if (norm(d) > 1e-6) return normalized(d);
  }
}

Vec3 sample_surface_point(const Mesh& m, Rng& rng) {
  std::vector<double> cumulative(m.faces.size());
  double total = 0.0;
  for (std::size_t i = 0; i < m.faces.size(); ++i) {
    total += face_area(m, m.faces[i]);
    cumulative[i] = total;
  }
  const double u = rng.uniform() * total;
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  const auto& f = m.faces[std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), m.faces.size() - 1)];
  const double r1 = std::sqrt(rng.uniform());
  const double r2 = rng.uniform();
  return m.vertices[f[0]] * (1.0 - r1) + m.vertices[f[1]] * (r1 * (1.0 - r2)) + m.vertices[f[2]] * (r1 * r2);
}

std::uint32_t nearest_vertex(const Mesh& m, const Vec3& p) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::uint32_t i = 0; i < m.vertices.size(); ++i) {
    const double d = distance(m.vertices[i], p);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

/// Splits the listed edges at their midpoints and re-triangulates every touched face
/// conformingly (1, 2 or 3 split edges). Orientation of every sub-triangle follows
/// its source face.
void split_edges(Mesh& m, const std::vector<std::uint64_t>& edges) {
  std::unordered_map<std::uint64_t, std::uint32_t> midpoint;
  midpoint.reserve(edges.size());
  for (auto key : edges) {
    const auto a = static_cast<std::uint32_t>(key >> 32);
    const auto b = static_cast<std::uint32_t>(key & 0xffffffffu);
    midpoint.emplace(key, static_cast<std::uint32_t>(m.vertices.size()));
    m.vertices.push_back((m.vertices[a] + m.vertices[b]) * 0.5);
  }

  std::vector<Face> out;
  out.reserve(m.faces.size() + 3 * edges.size());
  for (const auto& f : m.faces) {
    std::array<std::int64_t, 3> mid{-1, -1, -1};
    int splits = 0;
    for (int k = 0; k < 3; ++k) {
      auto it = midpoint.find(undirected_key(f[k], f[(k + 1) % 3]));
      if (it != midpoint.end()) {
        mid[k] = it->second;
        ++splits;
      }
    }
    if (splits == 0) {
      out.push_back(f);
    } else if (splits == 3) {
      const auto ab = static_cast<std::uint32_t>(mid[0]);
      const auto bc = static_cast<std::uint32_t>(mid[1]);
      const auto ca = static_cast<std::uint32_t>(mid[2]);
      out.push_back({f[0], ab, ca});
      out.push_back({ab, f[1], bc});
      out.push_back({ca, bc, f[2]});
      out.push_back({ab, bc, ca});
    } else if (splits == 1) {
      int k = 0;
      while (mid[k] < 0) ++k;
      const auto a = f[k], b = f[(k + 1) % 3], c = f[(k + 2) % 3];
      const auto mm = static_cast<std::uint32_t>(mid[k]);
      out.push_back({a, mm, c});
      out.push_back({mm, b, c});
    } else {
      int k = 0;
      while (mid[k] >= 0) ++k;  // the unsplit edge becomes (c, a)
      const auto a = f[(k + 1) % 3], b = f[(k + 2) % 3], c = f[k];
      const auto m1 = static_cast<std::uint32_t>(mid[(k + 1) % 3]);
      const auto m2 = static_cast<std::uint32_t>(mid[(k + 2) % 3]);
      out.push_back({m1, b, m2});
      if (distance(m.vertices[a], m.vertices[m2]) <= distance(m.vertices[m1], m.vertices[c])) {
        out.push_back({a, m1, m2});
        out.push_back({a, m2, c});
      } else {
        out.push_back({a, m1, c});
        out.push_back({m1, m2, c});
      }
    }
  }
  m.faces = std::move(out);
}

/// Subdivides faces near `center` until their edges are no longer than `target`.
void refine_around(Mesh& m, const Vec3& center, double radius, double target) {
  for (int iter = 0; iter < 16; ++iter) {
    std::vector<std::uint64_t> marked;
    std::unordered_set<std::uint64_t> seen;
    for (const auto& f : m.faces) {
      double longest = 0.0, closest = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 3; ++k) {
        longest = std::max(longest, distance(m.vertices[f[k]], m.vertices[f[(k + 1) % 3]]));
        closest = std::min(closest, distance(m.vertices[f[k]], center));
      }
      if (closest > radius + longest) continue;
      for (int k = 0; k < 3; ++k) {
        const auto a = f[k], b = f[(k + 1) % 3];
        if (distance(m.vertices[a], m.vertices[b]) <= target) continue;
        const auto key = undirected_key(a, b);
        if (seen.insert(key).second) marked.push_back(key);
      }
    }
    if (marked.empty()) return;
    split_edges(m, marked);
  }
}

/// Edge-path distances from `source` (seeded with `offset`), explored up to `limit`.
std::unordered_map<std::uint32_t, double> geodesic_ball(const Mesh& m, std::uint32_t source, double offset,
                                                        double limit) {
  std::vector<std::vector<std::uint32_t>> adjacency(m.vertices.size());
  for (const auto& f : m.faces)
    for (int k = 0; k < 3; ++k) adjacency[f[k]].push_back(f[(k + 1) % 3]);

  std::unordered_map<std::uint32_t, double> dist;
  using Item = std::pair<double, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[source] = offset;
  queue.push({offset, source});
  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[v] || d > limit) continue;
    for (auto w : adjacency[v]) {
      const double nd = d + distance(m.vertices[v], m.vertices[w]);
      if (nd > limit) continue;
      auto it = dist.find(w);
      if (it == dist.end() || nd < it->second) {
        dist[w] = nd;
        queue.push({nd, w});
      }
    }
  }
  return dist;
}

/// Umbrella-operator curvature estimate at a vertex, scaled so a sphere of radius R gives 1/R.
double umbrella_curvature(const Mesh& m, std::uint32_t v, const Vec3& normal) {
  Vec3 sum;
  double edge_sq = 0.0;
  int count = 0;
  for (const auto& f : m.faces)
    for (int k = 0; k < 3; ++k)
      if (f[k] == v) {
        const auto w = f[(k + 1) % 3];
        sum += m.vertices[w];
        edge_sq += dot(m.vertices[w] - m.vertices[v], m.vertices[w] - m.vertices[v]);
        ++count;
      }
  if (count == 0 || edge_sq <= 0.0) return 0.0;
  const Vec3 umbrella = sum * (1.0 / count) - m.vertices[v];
  return -2.0 * dot(umbrella, normal) / (edge_sq / count);
}

/// Merges vertices closer than the duplicate tolerance and drops faces that collapse.
void repair(Mesh& m) {
  const auto n = m.vertices.size();
  std::vector<std::uint32_t> remap(n);
  for (std::uint32_t i = 0; i < n; ++i) remap[i] = i;
  bool merged = false;
  for (const auto& f : m.faces)
    for (int k = 0; k < 3; ++k) {
      auto a = remap[f[k]], b = remap[f[(k + 1) % 3]];
      if (a != b && distance(m.vertices[a], m.vertices[b]) < kDuplicateVertexTolerance) {
        remap[std::max(a, b)] = std::min(a, b);
        merged = true;
      }
    }
  if (!merged) return;
  for (std::uint32_t i = 0; i < n; ++i)
    while (remap[i] != remap[remap[i]]) remap[i] = remap[remap[i]];
  std::vector<Face> faces;
  faces.reserve(m.faces.size());
  for (auto f : m.faces) {
    for (auto& idx : f) idx = remap[idx];
    if (f[0] != f[1] && f[1] != f[2] && f[0] != f[2]) faces.push_back(f);
  }
  // Compact unreferenced vertices.
  std::vector<std::int64_t> index(n, -1);
  std::vector<Vec3> vertices;
  for (auto& f : faces)
    for (auto& idx : f) {
      if (index[idx] < 0) {
        index[idx] = static_cast<std::int64_t>(vertices.size());
        vertices.push_back(m.vertices[idx]);
      }
      idx = static_cast<std::uint32_t>(index[idx]);
    }
  m.vertices = std::move(vertices);
  m.faces = std::move(faces);
}

/// One event attempt on `m`. Returns false when the sampled configuration is unusable.
bool apply_event(Mesh& m, EventKind kind, Rng& rng) {
  const double bound = bounding_radius(m);
  if (!(bound > 0.0)) return false;
  const double radius = kPatchRadiusFraction * bound;

  const bool interacting = kind == EventKind::InteractionGrowth || kind == EventKind::ShrinkagePcdInteraction;
  Vec3 center;
  if (interacting && !m.event_sites.empty()) {
    const auto& site = m.event_sites[rng.below(m.event_sites.size())];
    const Vec3 target = site + random_direction(rng) * rng.uniform(0.0, 1.5 * radius);
    center = m.vertices[nearest_vertex(m, target)];
  } else {
    center = sample_surface_point(m, rng);
  }

  refine_around(m, center, radius, radius / 3.0);

  const auto source = nearest_vertex(m, center);
  const auto ball = geodesic_ball(m, source, distance(m.vertices[source], center), radius);

  Vec3 normal;
  for (const auto& f : m.faces) {
    if (!ball.contains(f[0]) && !ball.contains(f[1]) && !ball.contains(f[2])) continue;
    const auto& a = m.vertices[f[0]];
    normal += cross(m.vertices[f[1]] - a, m.vertices[f[2]] - a);  // twice the area, outward
  }
  if (norm(normal) < 1e-12) return false;
  normal = normalized(normal);

  double amplitude = 0.0;
  switch (kind) {
    case EventKind::ThresholdGrowth:
      amplitude = bound * rng.uniform(0.10, 0.25);
      break;
    case EventKind::InteractionGrowth: {
      const double k = umbrella_curvature(m, source, normal) * bound;
      amplitude = bound * rng.uniform(0.08, 0.20) * std::clamp(0.5 + 0.5 * k, 0.5, 2.0);
      break;
    }
    case EventKind::ShrinkagePcd:
      amplitude = -bound * rng.uniform(0.04, 0.10);
      break;
    case EventKind::ShrinkagePcdInteraction:
      amplitude = -bound * rng.uniform(0.03, 0.08);
      break;
  }

  // Process ball vertices in index order so the update is independent of hash layout.
  std::vector<std::pair<std::uint32_t, double>> members(ball.begin(), ball.end());
  std::sort(members.begin(), members.end());
  for (const auto& [v, g] : members) {
    if (g >= radius) continue;
    const double falloff = 0.5 * (1.0 + std::cos(std::numbers::pi * g / radius));
    m.vertices[v] += normal * (amplitude * falloff);
  }
  m.event_sites.push_back(m.vertices[source]);
  return true;
}

}  // namespace

Mesh icosahedron() {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  const double s = 1.0 / std::sqrt(1.0 + phi * phi);
  Mesh m;
  m.vertices = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi}, {0, 1, phi},
                {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1},  {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& v : m.vertices) v *= s;
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (auto& f : m.faces) {
    const auto& a = m.vertices[f[0]];
    const Vec3 n = cross(m.vertices[f[1]] - a, m.vertices[f[2]] - a);
    if (dot(n, a + m.vertices[f[1]] + m.vertices[f[2]]) < 0.0) std::swap(f[1], f[2]);
  }
  m.lineage = {0, std::nullopt, "ico", std::nullopt, 0};
  return m;
}

Mesh grow(const Mesh& parent, const GrowthParams& params, std::uint64_t seed) {
  if (params.hydro_pcd != 0 || params.hydro_interaction_pcd != 0)
    throw GrowthError("hydro PCD counts must be zero");
  if (parent.lineage.generation >= kMaxGeneration)
    throw GrowthError("cannot grow beyond generation " + std::to_string(kMaxGeneration));
  {
    const auto check = check_mesh(parent);
    if (!check.ok()) throw GrowthError("parent '" + parent.lineage.object_id + "' is invalid: " + check.detail);
  }

  Mesh child = parent;
  child.lineage.generation = parent.lineage.generation + 1;
  child.lineage.parent_id = parent.lineage.object_id;
  child.lineage.seed = seed;
  char suffix[24];
  std::snprintf(suffix, sizeof suffix, "%016llx", static_cast<unsigned long long>(seed));
  child.lineage.object_id = parent.lineage.object_id + "." + suffix;

  std::vector<EventKind> events;
  events.insert(events.end(), params.threshold_growth, EventKind::ThresholdGrowth);
  events.insert(events.end(), params.interaction_growth, EventKind::InteractionGrowth);
  events.insert(events.end(), params.shrinkage_pcd, EventKind::ShrinkagePcd);
  events.insert(events.end(), params.shrinkage_pcd_interaction, EventKind::ShrinkagePcdInteraction);
  Rng order_rng(derive_key(seed, {label_hash("event-order")}));
  order_rng.shuffle(events);

  for (std::size_t e = 0; e < events.size(); ++e) {
    bool accepted = false;
    std::string last_problem = "event rejected";
    for (int attempt = 0; attempt <= kEventRetries && !accepted; ++attempt) {
      Mesh candidate = child;
      Rng rng(derive_key(seed, {label_hash("event"), e, static_cast<std::uint64_t>(attempt)}));
      if (!apply_event(candidate, events[e], rng)) continue;
      repair(candidate);
      const auto check = check_mesh(candidate);
      if (check.ok()) {
        child = std::move(candidate);
        accepted = true;
      } else {
        last_problem = check.detail;
      }
    }
    if (!accepted)
      throw GrowthError("event " + std::to_string(e) + " of '" + child.lineage.object_id + "' failed after " +
                        std::to_string(kEventRetries) + " retries: " + last_problem);
  }
  return child;
}

std::uint64_t parent_seed(std::uint64_t master_seed, int category) {
  return derive_key(master_seed, {label_hash("parent"), static_cast<std::uint64_t>(category)});
}

std::uint64_t child_seed(std::uint64_t master_seed, int category, int child) {
  return derive_key(master_seed,
                    {label_hash("child"), static_cast<std::uint64_t>(category), static_cast<std::uint64_t>(child)});
}

std::string child_object_id(Category category, int child) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03d", std::string(category_name(category)).c_str(), child);
  return buf;
}

std::vector<Mesh> spawn_taxonomy(std::uint64_t master_seed, const TaxonomyOptions& options) {
  const Mesh ancestor = icosahedron();
  std::vector<Mesh> parents(kCategories.size());
  parallel_for(
      kCategories.size(),
      [&](std::size_t p) {
        try {
          Mesh m = grow(ancestor, options.parent_params, parent_seed(master_seed, static_cast<int>(p)));
          m.lineage.object_id = std::string(category_name(kCategories[p]));
          m.lineage.category = kCategories[p];
          parents[p] = std::move(m);
        } catch (const std::exception& e) {
          throw GrowthError("parent " + std::to_string(p) + " (" + std::string(category_name(kCategories[p])) +
                            "): " + e.what());
        }
      },
      options.threads);

  const auto per = static_cast<std::size_t>(options.children_per_parent);
  std::vector<Mesh> all(parents.size() + parents.size() * per);
  for (std::size_t p = 0; p < parents.size(); ++p) all[p] = parents[p];
  parallel_for(
      parents.size() * per,
      [&](std::size_t i) {
        const auto p = i / per;
        const auto c = static_cast<int>(i % per);
        try {
          Mesh m = grow(parents[p], options.child_params, child_seed(master_seed, static_cast<int>(p), c));
          m.lineage.object_id = child_object_id(kCategories[p], c);
          m.lineage.category = parents[p].lineage.category;
          all[parents.size() + i] = std::move(m);
        } catch (const std::exception& e) {
          throw GrowthError("child " + std::to_string(c) + " of parent " + std::to_string(p) + ": " + e.what());
        }
      },
      options.threads);
  return all;
}

std::filesystem::path export_taxonomy(const std::vector<Mesh>& meshes, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto manifest_path = out_dir / "taxonomy.jsonl";
  std::ofstream manifest(manifest_path, std::ios::binary);
  if (!manifest) throw std::runtime_error("cannot write " + manifest_path.string());
  for (const auto& m : meshes) {
    const std::string category = m.lineage.category ? std::string(category_name(*m.lineage.category)) : "none";
    const auto rel = std::filesystem::path("objects") / category / (m.lineage.object_id + ".off");
    write_off(m, out_dir / rel);
    nlohmann::json line = {{"object_id", m.lineage.object_id},
                           {"category", category},
                           {"generation", m.lineage.generation},
                           {"parent_id", m.lineage.parent_id ? nlohmann::json(*m.lineage.parent_id) : nlohmann::json()},
                           {"seed", m.lineage.seed},
                           {"path", rel.generic_string()},
                           {"vertices", m.vertices.size()},
                           {"faces", m.faces.size()}};
    manifest << line.dump() << '\n';
  }
  return manifest_path;
}

}  // namespace embryolab
