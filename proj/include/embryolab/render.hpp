#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "embryolab/geometry.hpp"
#include "embryolab/image.hpp"
#include "embryolab/mesh.hpp"

namespace embryolab {

/// Object pose on the 30-degree grid. Angles are kept in [-180, 180).
struct ViewSpec {
  int pitch_deg = 0;
  int yaw_deg = 0;

  /// Wraps arbitrary multiples of 30 into [-180, 180). Throws std::invalid_argument otherwise.
  static ViewSpec normalized(int pitch_deg, int yaw_deg);

  bool is_initial() const noexcept { return pitch_deg == 0 && yaw_deg == 0; }
  friend auto operator<=>(const ViewSpec&, const ViewSpec&) = default;
};

/// "<object_id>_p<pitch>_y<yaw>", also the PNG file stem.
std::string image_id(const std::string& object_id, const ViewSpec& view);

struct RenderConfig {
  int width = kStimulusSize;
  int height = kStimulusSize;
  /// Camera distance in multiples of the object's bounding radius.
  double camera_distance = 3.0;
  double fov_deg = 45.0;
  /// Direction towards the light, camera frame (x right, y away from the camera, z up).
  Vec3 light_direction = normalized(Vec3{-1.0, -1.2, 1.0});
  double albedo = 0.85;
  double ambient = 0.2;
  std::uint8_t background = 128;
  int supersample = 2;
};

struct StimulusImage {
  std::string object_id;
  ViewSpec view;
  RgbImage pixels;
  /// Fraction of pixels covered by the object (from the raster coverage mask).
  double coverage = 0.0;
};

class RenderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rotation applied to the object for a view: yaw about the vertical axis first,
/// then pitch about the camera-horizontal axis.
Mat3 view_rotation(const ViewSpec& view);

/// Z-buffered rasterization with Lambertian shading and an ambient term, rendered at
/// `supersample`x resolution and box-downsampled. Deterministic to the byte.
StimulusImage render(const Mesh& mesh, const ViewSpec& view, const RenderConfig& cfg = {});

/// The 23 canonical views: the initial pose, 11 pitch-only and 11 yaw-only poses.
std::vector<ViewSpec> canonical_views();

std::vector<StimulusImage> rotation_series(const Mesh& mesh, const RenderConfig& cfg = {});

/// Grayscale 1/f noise, normalized to the full 0..255 range.
StimulusImage pink_noise_mask(std::uint64_t seed, int width = kStimulusSize, int height = kStimulusSize);

}  // namespace embryolab
