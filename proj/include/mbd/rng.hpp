#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace mbd {

// Stream ids used to carve independent sequences out of one user seed, so
// e.g. weight init and scene layout cannot alias each other.
inline constexpr std::uint64_t kStreamInit = 0x11;
inline constexpr std::uint64_t kStreamScene = 0x22;
inline constexpr std::uint64_t kStreamShuffle = 0x33;
inline constexpr std::uint64_t kStreamNoise = 0x44;

namespace detail {
inline std::uint64_t splitmix_fin(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ull;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebull;
  z ^= z >> 31;
  return z;
}
}  // namespace detail

// Combine words into a well-mixed 64-bit value. Used both to derive RNG
// streams and as a stateless lattice hash for procedural textures.
inline std::uint64_t hash_mix(std::uint64_t a) { return detail::splitmix_fin(a + 0x9e3779b97f4a7c15ull); }
inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) { return hash_mix(hash_mix(a) ^ b); }
inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) { return hash_mix(hash_mix(a, b) ^ c); }
inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return hash_mix(hash_mix(a, b, c) ^ d);
}

// Hash to a float in [0,1). 53-bit mantissa path keeps it exact in double.
inline float hash_unit(std::uint64_t h) { return static_cast<float>((h >> 11) * 0x1.0p-53); }

// Counter-based splitmix64 generator. Cheap to construct, so callers make a
// fresh one per (seed, stream, item) instead of threading state around;
// that keeps every sample reproducible in isolation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t substream = 0)
      : state_(hash_mix(seed, stream, substream)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return detail::splitmix_fin(state_);
  }

  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  float next_float() { return static_cast<float>(next_double()); }

  float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

  // Uniform int in [0, n).
  int next_int(int n) { return static_cast<int>(next_double() * n); }

  // Standard normal via Box-Muller; caches the second value.
  float normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = next_double();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    cached_ = static_cast<float>(r * std::sin(a));
    have_cached_ = true;
    return static_cast<float>(r * std::cos(a));
  }

 private:
  std::uint64_t state_;
  float cached_ = 0.0f;
  bool have_cached_ = false;
};

// Fisher-Yates permutation of 0..n-1.
inline std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    int j = rng.next_int(i + 1);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  return idx;
}

}  // namespace mbd
