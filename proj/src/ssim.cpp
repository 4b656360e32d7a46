#include "embryolab/ssim.hpp"

#include <cmath>
#include <stdexcept>

namespace embryolab {

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double centre = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[i] = std::exp(-((i - centre) * (i - centre)) / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// Separable "valid" filtering: output is (w - n + 1) x (h - n + 1).
std::vector<double> blur_valid(const std::vector<double>& in, int w, int h, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      const double* row = &in[static_cast<std::size_t>(y) * w + x];
      for (int i = 0; i < n; ++i) acc += k[i] * row[i];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

SsimPrepared::SsimPrepared(const RgbImage& image, const SsimParams& params)
    : width_(image.width), height_(image.height), params_(params), luma_(luminance(image)) {
  if (width_ < params.window || height_ < params.window)
    throw std::invalid_argument("image smaller than the SSIM window");
  const auto k = gaussian_kernel(params.window, params.sigma);
  mean_ = blur_valid(luma_, width_, height_, k);
  std::vector<double> sq(luma_.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = luma_[i] * luma_[i];
  variance_ = blur_valid(sq, width_, height_, k);
  for (std::size_t i = 0; i < variance_.size(); ++i) variance_[i] -= mean_[i] * mean_[i];
}

double ssim(const SsimPrepared& a, const SsimPrepared& b) {
  if (a.width_ != b.width_ || a.height_ != b.height_)
    throw std::invalid_argument("ssim: image dimensions differ");
  const auto& p = a.params_;
  const auto k = gaussian_kernel(p.window, p.sigma);
  std::vector<double> prod(a.luma_.size());
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = a.luma_[i] * b.luma_[i];
  const auto cross = blur_valid(prod, a.width_, a.height_, k);
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  double total = 0.0;
  for (std::size_t i = 0; i < cross.size(); ++i) {
    const double mx = a.mean_[i], my = b.mean_[i];
    const double cov = cross[i] - mx * my;
    total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
             ((mx * mx + my * my + c1) * (a.variance_[i] + b.variance_[i] + c2));
  }
  return total / static_cast<double>(cross.size());
}

double ssim(const RgbImage& a, const RgbImage& b, const SsimParams& params) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("ssim: image dimensions differ");
  return ssim(SsimPrepared(a, params), SsimPrepared(b, params));
}

}  // namespace embryolab
