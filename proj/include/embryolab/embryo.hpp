#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "embryolab/mesh.hpp"

namespace embryolab {

/// Event counts for one growth pass. The two hydro counts exist for completeness
/// and must stay zero.
struct GrowthParams {
  unsigned threshold_growth = 0;
  unsigned interaction_growth = 0;
  unsigned shrinkage_pcd = 0;
  unsigned shrinkage_pcd_interaction = 0;
  unsigned hydro_pcd = 0;
  unsigned hydro_interaction_pcd = 0;

  unsigned total_events() const noexcept {
    return threshold_growth + interaction_growth + shrinkage_pcd + shrinkage_pcd_interaction;
  }
  friend bool operator==(const GrowthParams&, const GrowthParams&) = default;
};

inline constexpr GrowthParams kParentGenerationParams{6, 6, 4, 6, 0, 0};
inline constexpr GrowthParams kSecondGenerationParams{3, 0, 0, 2, 0, 0};
inline constexpr int kChildrenPerParent = 100;
inline constexpr int kMaxGeneration = 2;

/// Fraction of the bounding radius used as the geodesic radius of an event patch.
inline constexpr double kPatchRadiusFraction = 0.15;
/// Retries allowed per event after the first attempt.
inline constexpr int kEventRetries = 8;

class GrowthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Regular icosahedron with unit circumradius, generation 0, object id "ico".
Mesh icosahedron();

/// Grows a child from `parent`. Event order and every event's site, amplitude and
/// shape are drawn from a stream keyed by (seed, event index, attempt), so the
/// result is a pure function of the arguments.
Mesh grow(const Mesh& parent, const GrowthParams& params, std::uint64_t seed);

struct TaxonomyOptions {
  GrowthParams parent_params = kParentGenerationParams;
  GrowthParams child_params = kSecondGenerationParams;
  int children_per_parent = kChildrenPerParent;
  unsigned threads = 0;
};

/// Three generation-1 parents (one per category) followed by their children in
/// (category, index) order. Object ids: "Lauz", "Lauz_000", ...
std::vector<Mesh> spawn_taxonomy(std::uint64_t master_seed, const TaxonomyOptions& options = {});

std::uint64_t parent_seed(std::uint64_t master_seed, int category);
std::uint64_t child_seed(std::uint64_t master_seed, int category, int child);
std::string child_object_id(Category category, int child);

/// Writes objects/<category>/<object_id>.off for every mesh plus taxonomy.jsonl
/// (one object per line) under `out_dir`. Returns the manifest path.
std::filesystem::path export_taxonomy(const std::vector<Mesh>& meshes, const std::filesystem::path& out_dir);

}  // namespace embryolab
