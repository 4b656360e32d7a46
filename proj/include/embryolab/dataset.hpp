#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "embryolab/mesh.hpp"
#include "embryolab/render.hpp"

namespace embryolab {

inline constexpr int kEpochs = 6;
inline constexpr int kTrainingObjectsPerCategory = 6;
inline constexpr int kTrainingImages = 36;
inline constexpr int kTestImagesPerSet = 51;
inline constexpr int kNovelPerspectivePerSet = 24;
inline constexpr int kNovelObjectPerSet = 27;

struct ImageRef {
  std::string image_id;
  std::string object_id;
  Category category = Category::Lauz;
  ViewSpec view;

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

ImageRef make_image_ref(const std::string& object_id, Category category, const ViewSpec& view);

/// Relative path of an image inside a generated data directory.
std::filesystem::path image_path(const ImageRef& ref);

enum class TestKind : std::uint8_t { NovelPerspective, NovelObject };
std::string_view test_kind_name(TestKind kind) noexcept;
std::optional<TestKind> parse_test_kind(std::string_view name) noexcept;

struct TestImage {
  ImageRef ref;
  TestKind kind = TestKind::NovelPerspective;

  friend bool operator==(const TestImage&, const TestImage&) = default;
};

/// Training and test membership. Test set i (0-based) is presented after training epoch i + 1.
struct DatasetManifest {
  std::uint64_t seed = 0;
  std::vector<ImageRef> pool;
  std::vector<ImageRef> training_set;
  std::vector<std::vector<TestImage>> test_sets;
  /// Per category: training objects in test-set order and unseen objects in test-set order.
  std::map<Category, std::vector<std::string>> training_objects;
  std::map<Category, std::vector<std::string>> unseen_objects;

  /// Label index for any training or test image id, or nullopt.
  std::optional<int> label_of(const std::string& image_id) const;
  std::optional<TestKind> kind_of(const std::string& image_id) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws DatasetError describing the first violated membership invariant.
void validate_manifest(const DatasetManifest& manifest);

/// The eight +-30/+-60 degree pitch and yaw poses around the initial view.
std::vector<ViewSpec> perspective_test_views();
/// The two training poses: initial view and +90 degrees yaw.
std::vector<ViewSpec> training_views();

struct CategorySimilarity {
  Category category = Category::Lauz;
  std::vector<std::string> object_ids;
  /// Row-major |ids| x |ids| SSIM matrix of initial-view renderings.
  std::vector<double> matrix;
  std::vector<double> mean_similarity;
  /// Kept ids, most similar first.
  std::vector<std::string> kept;
};

struct SimilarityReport {
  std::vector<CategorySimilarity> categories;
  std::size_t kept_count() const noexcept;
};

struct InitialRendering {
  std::string object_id;
  Category category = Category::Lauz;
  RgbImage image;
};

/// Ranks each category's objects by mean SSIM to the other members and keeps the top half.
SimilarityReport filter_coherent(const std::vector<InitialRendering>& renderings, unsigned threads = 0);

/// Every canonical view of every kept object.
std::vector<ImageRef> coherent_pool(const SimilarityReport& report);

/// Draws training objects, unseen objects and test-set assignment from `seed`.
DatasetManifest compose_splits(const SimilarityReport& report, std::uint64_t seed);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// similarity_<category>.csv matrices plus kept.csv under `dir`.
void write_similarity_report(const SimilarityReport& report, const std::filesystem::path& dir);

}  // namespace embryolab
