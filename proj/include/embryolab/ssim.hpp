#pragma once

#include <vector>

#include "embryolab/image.hpp"

namespace embryolab {

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;
};

/// Mean local SSIM over all fully-contained 11x11 Gaussian windows of the luminance
/// images. Throws std::invalid_argument on a dimension mismatch.
double ssim(const RgbImage& a, const RgbImage& b, const SsimParams& params = {});

/// Per-image statistics reused across many comparisons.
class SsimPrepared {
 public:
  explicit SsimPrepared(const RgbImage& image, const SsimParams& params = {});

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  friend double ssim(const SsimPrepared& a, const SsimPrepared& b);

 private:
  int width_ = 0;
  int height_ = 0;
  SsimParams params_;
  std::vector<double> luma_;
  std::vector<double> mean_;
  std::vector<double> variance_;
};

double ssim(const SsimPrepared& a, const SsimPrepared& b);

}  // namespace embryolab
