#include "embryolab/image.hpp"

#include <png.h>

#include <cstring>
#include <stdexcept>

namespace embryolab {

std::vector<double> luminance(const RgbImage& image) {
  std::vector<double> out(image.pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto* p = &image.pixels[i * 3];
    out[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return out;
}

namespace {

png_image make_descriptor(const RgbImage& image) {
  if (image.width <= 0 || image.height <= 0 || image.pixels.size() != image.pixel_count() * 3)
    throw std::invalid_argument("image buffer does not match its dimensions");
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width);
  desc.height = static_cast<png_uint_32>(image.height);
  desc.format = PNG_FORMAT_RGB;
  return desc;
}

}  // namespace

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image desc = make_descriptor(image);
  if (!png_image_write_to_file(&desc, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw std::runtime_error("png write failed for " + path.string() + ": " + desc.message);
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  png_image desc = make_descriptor(image);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, image.pixels.data(), 0, nullptr))
    throw std::runtime_error(std::string("png sizing failed: ") + desc.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, image.pixels.data(), 0, nullptr))
    throw std::runtime_error(std::string("png encode failed: ") + desc.message);
  out.resize(size);
  return out;
}

RgbImage read_png(const std::filesystem::path& path) {
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&desc, path.c_str()))
    throw std::runtime_error("cannot read png " + path.string() + ": " + desc.message);
  desc.format = PNG_FORMAT_RGB;
  RgbImage image(static_cast<int>(desc.width), static_cast<int>(desc.height));
  if (!png_image_finish_read(&desc, nullptr, image.pixels.data(), 0, nullptr)) {
    png_image_free(&desc);
    throw std::runtime_error("png decode failed for " + path.string() + ": " + desc.message);
  }
  return image;
}

}  // namespace embryolab
