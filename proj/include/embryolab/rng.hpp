#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace embryolab {

/// SplitMix64 finalizer; used both as a hash and as the counter-based stream.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child key from a parent key and a list of labels.
constexpr std::uint64_t derive_key(std::uint64_t key, std::initializer_list<std::uint64_t> labels) noexcept {
  std::uint64_t h = mix64(key);
  for (auto l : labels) h = mix64(h ^ mix64(l + 0x632be59bd9b4e019ULL));
  return h;
}

/// Hash of a short ASCII label, for labelled seed fan-out ("gen", "train", ...).
constexpr std::uint64_t label_hash(const char* s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (; *s; ++s) h = (h ^ static_cast<unsigned char>(*s)) * 0x100000001b3ULL;
  return h;
}

/// Counter-based random stream: value i is mix64(key + i * golden). Results depend only
/// on (key, counter), never on platform distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t next_u64() noexcept { return mix64(key_ ^ mix64(counter_++)); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire-style rejection to avoid modulo bias.
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal via Box-Muller (one value per call, second discarded).
  double normal() noexcept;

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// FNV-1a over raw bytes, for determinism digests.
std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;

template <typename T>
std::uint64_t digest_of(std::span<const T> values, std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept {
  return fnv1a(std::as_bytes(values), seed);
}

}  // namespace embryolab
