#include "embryolab/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

namespace embryolab {

namespace {

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) noexcept {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

struct CellHash {
  std::size_t operator()(const std::array<std::int64_t, 3>& c) const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (auto v : c) h = (h ^ static_cast<std::uint64_t>(v)) * 1099511628211ULL;
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

std::string_view category_name(Category c) noexcept {
  switch (c) {
    case Category::Lauz: return "Lauz";
    case Category::Puns: return "Puns";
    case Category::Eulf: return "Eulf";
  }
  return "?";
}

std::optional<Category> parse_category(std::string_view name) noexcept {
  for (auto c : kCategories)
    if (category_name(c) == name) return c;
  return std::nullopt;
}

MeshCheck check_mesh(const Mesh& mesh) {
  MeshCheck out;
  std::ostringstream detail;
  const auto nv = mesh.vertices.size();

  if (mesh.faces.empty() || nv < 4) {
    out.closed_manifold = false;
    detail << "mesh has " << nv << " vertices and " << mesh.faces.size() << " faces; ";
  }

  std::unordered_map<std::uint64_t, int> directed;
  directed.reserve(mesh.faces.size() * 3);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    if (face[0] >= nv || face[1] >= nv || face[2] >= nv) {
      out.indices_in_range = false;
      detail << "face " << f << " has an out-of-range index; ";
      continue;
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      out.no_degenerate_faces = false;
      detail << "face " << f << " repeats a vertex; ";
      continue;
    }
    for (int k = 0; k < 3; ++k) ++directed[edge_key(face[k], face[(k + 1) % 3])];
    const Vec3& a = mesh.vertices[face[0]];
    const Vec3& b = mesh.vertices[face[1]];
    const Vec3& c = mesh.vertices[face[2]];
    if (0.5 * norm(cross(b - a, c - a)) <= kDegenerateAreaTolerance) {
      if (out.no_degenerate_faces) detail << "face " << f << " has zero area; ";
      out.no_degenerate_faces = false;
    }
  }
  if (out.indices_in_range) {
    for (const auto& [key, count] : directed) {
      const auto a = static_cast<std::uint32_t>(key >> 32);
      const auto b = static_cast<std::uint32_t>(key & 0xffffffffu);
      auto rev = directed.find(edge_key(b, a));
      if (count != 1 || rev == directed.end() || rev->second != 1) {
        if (out.closed_manifold) detail << "edge (" << a << "," << b << ") is not shared by exactly two consistently wound faces; ";
        out.closed_manifold = false;
      }
    }
  }

  // Duplicate vertices: hash into cells larger than the tolerance, compare neighbours.
  const double cell = 1e-6;
  std::unordered_map<std::array<std::int64_t, 3>, std::vector<std::uint32_t>, CellHash> grid;
  grid.reserve(nv);
  auto cell_of = [&](const Vec3& p) {
    return std::array<std::int64_t, 3>{static_cast<std::int64_t>(std::floor(p.x / cell)),
                                       static_cast<std::int64_t>(std::floor(p.y / cell)),
                                       static_cast<std::int64_t>(std::floor(p.z / cell))};
  };
  for (std::uint32_t i = 0; i < nv && out.no_duplicate_vertices; ++i) {
    const auto c = cell_of(mesh.vertices[i]);
    for (int dx = -1; dx <= 1 && out.no_duplicate_vertices; ++dx)
      for (int dy = -1; dy <= 1 && out.no_duplicate_vertices; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = grid.find({c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == grid.end()) continue;
          for (auto j : it->second)
            if (distance(mesh.vertices[i], mesh.vertices[j]) < kDuplicateVertexTolerance) {
              out.no_duplicate_vertices = false;
              detail << "vertices " << j << " and " << i << " coincide; ";
              break;
            }
          if (!out.no_duplicate_vertices) break;
        }
    grid[c].push_back(i);
  }

  if (out.indices_in_range && !(signed_volume(mesh) > 0.0)) {
    out.positive_volume = false;
    detail << "signed volume is not positive; ";
  }
  out.detail = detail.str();
  return out;
}

void validate_mesh(const Mesh& mesh) {
  const auto check = check_mesh(mesh);
  if (!check.ok()) throw MeshError("invalid mesh '" + mesh.lineage.object_id + "': " + check.detail);
}

double signed_volume(const Mesh& mesh) noexcept {
  double six_v = 0.0;
  for (const auto& f : mesh.faces)
    six_v += dot(mesh.vertices[f[0]], cross(mesh.vertices[f[1]], mesh.vertices[f[2]]));
  return six_v / 6.0;
}

double surface_area(const Mesh& mesh) noexcept {
  double area = 0.0;
  for (const auto& f : mesh.faces) {
    const auto& a = mesh.vertices[f[0]];
    area += 0.5 * norm(cross(mesh.vertices[f[1]] - a, mesh.vertices[f[2]] - a));
  }
  return area;
}

std::size_t edge_count(const Mesh& mesh) {
  std::unordered_map<std::uint64_t, int> edges;
  for (const auto& f : mesh.faces)
    for (int k = 0; k < 3; ++k) {
      auto a = f[k], b = f[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edges[edge_key(a, b)];
    }
  return edges.size();
}

Vec3 vertex_centroid(const Mesh& mesh) noexcept {
  Vec3 c;
  for (const auto& v : mesh.vertices) c += v;
  return mesh.vertices.empty() ? c : c * (1.0 / static_cast<double>(mesh.vertices.size()));
}

double bounding_radius(const Mesh& mesh) noexcept {
  const Vec3 c = vertex_centroid(mesh);
  double r = 0.0;
  for (const auto& v : mesh.vertices) r = std::max(r, distance(v, c));
  return r;
}

double vertex_hausdorff(const Mesh& a, const Mesh& b) {
  auto directed = [](const Mesh& from, const Mesh& to) {
    double worst = 0.0;
    for (const auto& p : from.vertices) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to.vertices) best = std::min(best, distance(p, q));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

bool same_geometry(const Mesh& a, const Mesh& b) {
  if (a.vertices.size() != b.vertices.size() || a.faces.size() != b.faces.size()) return false;
  auto canonical = [](const Mesh& m) {
    std::vector<std::array<double, 9>> tris;
    tris.reserve(m.faces.size());
    for (const auto& f : m.faces) {
      // Rotate the index triple so the lexicographically smallest corner leads; keeps winding.
      std::array<Vec3, 3> c{m.vertices[f[0]], m.vertices[f[1]], m.vertices[f[2]]};
      auto less = [](const Vec3& p, const Vec3& q) {
        return std::tie(p.x, p.y, p.z) < std::tie(q.x, q.y, q.z);
      };
      int lead = 0;
      for (int k = 1; k < 3; ++k)
        if (less(c[k], c[lead])) lead = k;
      std::array<double, 9> t{};
      for (int k = 0; k < 3; ++k) {
        const auto& p = c[(lead + k) % 3];
        t[3 * k] = p.x;
        t[3 * k + 1] = p.y;
        t[3 * k + 2] = p.z;
      }
      tris.push_back(t);
    }
    std::sort(tris.begin(), tris.end());
    return tris;
  };
  return canonical(a) == canonical(b);
}

Mesh rotated(const Mesh& mesh, const Mat3& rotation) {
  Mesh out = mesh;
  const Vec3 c = vertex_centroid(mesh);
  for (auto& v : out.vertices) v = c + rotation * (v - c);
  for (auto& s : out.event_sites) s = c + rotation * (s - c);
  return out;
}

void write_off(const Mesh& mesh, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "OFF\n" << mesh.vertices.size() << ' ' << mesh.faces.size() << " 0\n";
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Mesh read_off(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "OFF") throw MeshError(path.string() + ": missing OFF header");
  std::size_t nv = 0, nf = 0, ne = 0;
  if (!(in >> nv >> nf >> ne)) throw MeshError(path.string() + ": bad OFF counts");
  Mesh mesh;
  mesh.vertices.resize(nv);
  for (auto& v : mesh.vertices)
    if (!(in >> v.x >> v.y >> v.z)) throw MeshError(path.string() + ": truncated vertex list");
  mesh.faces.resize(nf);
  for (auto& f : mesh.faces) {
    int arity = 0;
    if (!(in >> arity >> f[0] >> f[1] >> f[2]) || arity != 3)
      throw MeshError(path.string() + ": only triangle faces are supported");
  }
  mesh.lineage.object_id = path.stem().string();
  return mesh;
}

}  // namespace embryolab
