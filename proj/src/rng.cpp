#include "embryolab/rng.hpp"

#include <cmath>
#include <numbers>

namespace embryolab {

double Rng::normal() noexcept {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed) noexcept {
  std::uint64_t h = seed;
  for (auto b : bytes) h = (h ^ static_cast<std::uint8_t>(b)) * 0x100000001b3ULL;
  return h;
}

}  // namespace embryolab
