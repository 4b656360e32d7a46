#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace embryolab {

inline constexpr int kStimulusSize = 224;

/// Interleaved 8-bit RGB raster, row-major, top row first.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t* at(int x, int y) noexcept { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const noexcept { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Luminance with weights 0.299 / 0.587 / 0.114, one double per pixel.
std::vector<double> luminance(const RgbImage& image);

void write_png(const RgbImage& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const RgbImage& image);
RgbImage read_png(const std::filesystem::path& path);

}  // namespace embryolab
