#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "embryolab/geometry.hpp"

namespace embryolab {

enum class Category : std::uint8_t { Lauz = 0, Puns = 1, Eulf = 2 };

inline constexpr std::array<Category, 3> kCategories = {Category::Lauz, Category::Puns, Category::Eulf};

std::string_view category_name(Category c) noexcept;
std::optional<Category> parse_category(std::string_view name) noexcept;
inline int category_index(Category c) noexcept { return static_cast<int>(c); }

struct LineageTag {
  int generation = 0;
  std::optional<std::string> parent_id;
  std::string object_id;
  std::optional<Category> category;  // unset for the generation-0 ancestor
  std::uint64_t seed = 0;

  friend bool operator==(const LineageTag&, const LineageTag&) = default;
};

using Face = std::array<std::uint32_t, 3>;

/// Closed, outward-wound triangle surface plus lineage metadata.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  LineageTag lineage;
  /// Centres of earlier growth and shrinkage events, inherited across generations.
  std::vector<Vec3> event_sites;
};

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MeshCheck {
  bool closed_manifold = true;
  bool no_degenerate_faces = true;
  bool no_duplicate_vertices = true;
  bool positive_volume = true;
  bool indices_in_range = true;
  std::string detail;

  bool ok() const noexcept {
    return closed_manifold && no_degenerate_faces && no_duplicate_vertices && positive_volume && indices_in_range;
  }
};

inline constexpr double kDuplicateVertexTolerance = 1e-9;
inline constexpr double kDegenerateAreaTolerance = 1e-14;

/// Checks every Mesh invariant: each undirected edge used by exactly two faces with
/// opposite orientation, no zero-area faces, no vertex pair closer than 1e-9, and
/// positive signed volume.
MeshCheck check_mesh(const Mesh& mesh);

/// Throws MeshError carrying the check detail when any invariant fails.
void validate_mesh(const Mesh& mesh);

double signed_volume(const Mesh& mesh) noexcept;
double surface_area(const Mesh& mesh) noexcept;
std::size_t edge_count(const Mesh& mesh);
Vec3 vertex_centroid(const Mesh& mesh) noexcept;
/// Radius of the sphere about the vertex centroid that encloses all vertices.
double bounding_radius(const Mesh& mesh) noexcept;

/// Symmetric Hausdorff distance between the vertex sets (brute force).
double vertex_hausdorff(const Mesh& a, const Mesh& b);

/// True when both meshes carry the same vertex positions and faces up to vertex reindexing.
bool same_geometry(const Mesh& a, const Mesh& b);

/// Applies the rotation about the vertex centroid.
Mesh rotated(const Mesh& mesh, const Mat3& rotation);

void write_off(const Mesh& mesh, const std::filesystem::path& path);
Mesh read_off(const std::filesystem::path& path);

}  // namespace embryolab
