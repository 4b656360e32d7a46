#include "embryolab/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "embryolab/rng.hpp"

namespace embryolab {

namespace {

// cos(k * 30 deg) for k = 0..11, written out so grid rotations are exact where possible.
constexpr double kHalfSqrt3 = 0.86602540378443864676;
constexpr std::array<double, 12> kCos30 = {1.0,  kHalfSqrt3,  0.5,  0.0, -0.5, -kHalfSqrt3,
                                           -1.0, -kHalfSqrt3, -0.5, 0.0, 0.5,  kHalfSqrt3};

double grid_cos(int deg) { return kCos30[static_cast<std::size_t>(((deg / 30) % 12 + 12) % 12)]; }
double grid_sin(int deg) { return grid_cos(deg - 90); }

}  // namespace

ViewSpec ViewSpec::normalized(int pitch_deg, int yaw_deg) {
  if (pitch_deg % 30 != 0 || yaw_deg % 30 != 0)
    throw std::invalid_argument("view angles must be multiples of 30 degrees");
  auto wrap = [](int a) { return ((a + 180) % 360 + 360) % 360 - 180; };
  return {wrap(pitch_deg), wrap(yaw_deg)};
}

std::string image_id(const std::string& object_id, const ViewSpec& view) {
  return object_id + "_p" + std::to_string(view.pitch_deg) + "_y" + std::to_string(view.yaw_deg);
}

Mat3 view_rotation(const ViewSpec& view) {
  const double cp = grid_cos(view.pitch_deg), sp = grid_sin(view.pitch_deg);
  const double cy = grid_cos(view.yaw_deg), sy = grid_sin(view.yaw_deg);
  Mat3 pitch;
  pitch.m[1][1] = cp;
  pitch.m[1][2] = -sp;
  pitch.m[2][1] = sp;
  pitch.m[2][2] = cp;
  Mat3 yaw;
  yaw.m[0][0] = cy;
  yaw.m[0][1] = -sy;
  yaw.m[1][0] = sy;
  yaw.m[1][1] = cy;
  return pitch * yaw;
}

StimulusImage render(const Mesh& mesh, const ViewSpec& view_in, const RenderConfig& cfg) {
  if (mesh.vertices.empty() || mesh.faces.empty()) throw RenderError("cannot render an empty mesh");
  if (cfg.width <= 0 || cfg.height <= 0 || cfg.supersample < 1) throw RenderError("invalid render dimensions");
  const ViewSpec view = ViewSpec::normalized(view_in.pitch_deg, view_in.yaw_deg);

  const Vec3 centre = vertex_centroid(mesh);
  const double radius = bounding_radius(mesh);
  if (!(radius > 0.0)) throw RenderError("mesh has zero extent");
  const Mat3 rot = view_rotation(view);

  const auto nv = mesh.vertices.size();
  std::vector<Vec3> cam(nv), normals(nv);
  for (std::size_t i = 0; i < nv; ++i) cam[i] = rot * (mesh.vertices[i] - centre);
  for (const auto& f : mesh.faces) {
    const Vec3 n = cross(cam[f[1]] - cam[f[0]], cam[f[2]] - cam[f[0]]);
    for (auto idx : f) normals[idx] += n;
  }
  for (auto& n : normals) n = normalized(n);

  const int sw = cfg.width * cfg.supersample;
  const int sh = cfg.height * cfg.supersample;
  const double eye_distance = cfg.camera_distance * radius;
  const double tan_half = std::tan(cfg.fov_deg * std::numbers::pi / 360.0);
  const Vec3 eye{0.0, -eye_distance, 0.0};

  struct Projected {
    double x, y, depth;
  };
  std::vector<Projected> screen(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    const double depth = cam[i].y + eye_distance;
    if (depth <= 1e-3 * radius) throw RenderError("object '" + mesh.lineage.object_id + "' intersects the camera");
    const double sx = (cam[i].x / (depth * tan_half) + 1.0) * 0.5 * sw;
    const double sy = (1.0 - cam[i].z / (depth * tan_half)) * 0.5 * sh;
    if (sx < 0.0 || sx > sw || sy < 0.0 || sy > sh)
      throw RenderError("object '" + mesh.lineage.object_id + "' leaves the frame; increase camera_distance or fov");
    screen[i] = {sx, sy, depth};
  }

  const double background = cfg.background;
  std::vector<double> zbuf(static_cast<std::size_t>(sw) * sh, std::numeric_limits<double>::infinity());
  std::vector<double> shade(zbuf.size(), background);

  for (const auto& f : mesh.faces) {
    const Vec3 face_normal = cross(cam[f[1]] - cam[f[0]], cam[f[2]] - cam[f[0]]);
    if (dot(face_normal, cam[f[0]] - eye) >= 0.0) continue;  // back-facing
    const auto& a = screen[f[0]];
    const auto& b = screen[f[1]];
    const auto& c = screen[f[2]];
    const double area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if (area == 0.0) continue;
    const double inv_area = 1.0 / area;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}))));
    const int x1 = std::min(sw - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}))));
    const int y1 = std::min(sh - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}))));
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double w0 = ((b.x - px) * (c.y - py) - (b.y - py) * (c.x - px)) * inv_area;
        const double w1 = ((c.x - px) * (a.y - py) - (c.y - py) * (a.x - px)) * inv_area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        // Perspective-correct interpolation through 1/depth.
        const double q0 = w0 / a.depth, q1 = w1 / b.depth, q2 = w2 / c.depth;
        const double depth = 1.0 / (q0 + q1 + q2);
        const std::size_t idx = static_cast<std::size_t>(y) * sw + x;
        if (depth >= zbuf[idx]) continue;
        zbuf[idx] = depth;
        const Vec3 n = normalized((normals[f[0]] * q0 + normals[f[1]] * q1 + normals[f[2]] * q2) * depth);
        const double lambert = std::max(0.0, dot(n, cfg.light_direction));
        shade[idx] = 255.0 * cfg.albedo * (cfg.ambient + (1.0 - cfg.ambient) * lambert);
      }
    }
  }

  StimulusImage out{mesh.lineage.object_id, view, RgbImage(cfg.width, cfg.height), 0.0};
  std::size_t covered = 0;
  for (double z : zbuf) covered += std::isfinite(z) ? 1 : 0;
  out.coverage = static_cast<double>(covered) / static_cast<double>(zbuf.size());
  const int ss = cfg.supersample;
  const double inv = 1.0 / (ss * ss);
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x) {
      double sum = 0.0;
      for (int dy = 0; dy < ss; ++dy)
        for (int dx = 0; dx < ss; ++dx) sum += shade[static_cast<std::size_t>(y * ss + dy) * sw + (x * ss + dx)];
      const auto v = static_cast<std::uint8_t>(std::clamp(std::lround(sum * inv), 0L, 255L));
      auto* p = out.pixels.at(x, y);
      p[0] = p[1] = p[2] = v;
    }
  return out;
}

std::vector<ViewSpec> canonical_views() {
  std::vector<ViewSpec> views{{0, 0}};
  for (int a = -180; a < 180; a += 30)
    if (a != 0) views.push_back({a, 0});
  for (int a = -180; a < 180; a += 30)
    if (a != 0) views.push_back({0, a});
  return views;
}

std::vector<StimulusImage> rotation_series(const Mesh& mesh, const RenderConfig& cfg) {
  std::vector<StimulusImage> out;
  for (const auto& v : canonical_views()) out.push_back(render(mesh, v, cfg));
  return out;
}

namespace {

using Complex = std::complex<double>;

/// In-place inverse DFT along rows (stride 1) or columns (stride = width).
void inverse_dft_lines(std::vector<Complex>& data, int length, int lines, std::size_t line_stride,
                       std::size_t elem_stride) {
  std::vector<Complex> twiddle(static_cast<std::size_t>(length));
  for (int k = 0; k < length; ++k) twiddle[k] = std::polar(1.0, 2.0 * std::numbers::pi * k / length);
  std::vector<Complex> in(static_cast<std::size_t>(length));
  for (int l = 0; l < lines; ++l) {
    for (int k = 0; k < length; ++k) in[k] = data[l * line_stride + k * elem_stride];
    for (int n = 0; n < length; ++n) {
      Complex acc = 0.0;
      for (int k = 0; k < length; ++k) acc += in[k] * twiddle[static_cast<std::size_t>((static_cast<long>(k) * n) % length)];
      data[l * line_stride + n * elem_stride] = acc;
    }
  }
}

}  // namespace

StimulusImage pink_noise_mask(std::uint64_t seed, int width, int height) {
  if (width < 2 || height < 2) throw std::invalid_argument("mask must be at least 2x2");
  Rng rng(derive_key(seed, {label_hash("pink-noise")}));
  const auto w = static_cast<std::size_t>(width);
  std::vector<Complex> spectrum(w * height);
  for (int v = 0; v < height; ++v) {
    const double fy = (v <= height / 2 ? v : v - height) / static_cast<double>(height);
    for (int u = 0; u < width; ++u) {
      const double fx = (u <= width / 2 ? u : u - width) / static_cast<double>(width);
      const double f = std::sqrt(fx * fx + fy * fy);
      const double re = rng.normal();
      const double im = rng.normal();
      spectrum[v * w + u] = f > 0.0 ? Complex(re, im) / f : Complex(0.0, 0.0);
    }
  }
  inverse_dft_lines(spectrum, width, height, w, 1);
  inverse_dft_lines(spectrum, height, width, 1, w);

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& c : spectrum) {
    lo = std::min(lo, c.real());
    hi = std::max(hi, c.real());
  }
  StimulusImage out{"mask-" + std::to_string(seed), {}, RgbImage(width, height), 1.0};
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(std::lround((spectrum[i].real() - lo) * scale));
    out.pixels.pixels[i * 3] = out.pixels.pixels[i * 3 + 1] = out.pixels.pixels[i * 3 + 2] = v;
  }
  return out;
}

}  // namespace embryolab
