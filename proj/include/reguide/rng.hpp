#pragma once

#include <cstdint>

#include "reguide/tensor.hpp"

namespace reguide {

// Counter-based deterministic RNG. Each draw hashes (seed, stream, counter)
// through a SplitMix64-style finalizer, so any stream can be reconstructed
// from its coordinates alone and independent streams never share state.
class RngStream {
 public:
  RngStream(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }
  uint64_t counter() const { return counter_; }

  uint64_t next_u64() { return mix(seed_, stream_, counter_++); }

  // Uniform on [0, 1): 53 random bits scaled by 2^-53.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1): never returns an exact endpoint, safe under log().
  double uniform01_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; both coordinates drawn fresh per call so
  // the draw count per gaussian is always exactly two.
  double gaussian() {
    double u1 = uniform01_open();
    double u2 = uniform01_open();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // Uniform integer on [lo, hi] inclusive, unbiased via rejection.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return lo + static_cast<int64_t>(x % span);
  }

  // Derived stream with an unrelated stream id; used to split one logical
  // stream into independent sub-purposes without draw-order coupling.
  RngStream substream(uint64_t k) const {
    return RngStream(seed_, mix(stream_, 0x9e3779b97f4a7c15ull, k));
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;

  static uint64_t mix(uint64_t a, uint64_t b, uint64_t c) {
    uint64_t z = a;
    z ^= b + 0x9e3779b97f4a7c15ull + (z << 6) + (z >> 2);
    z ^= c + 0x9e3779b97f4a7c15ull + (z << 6) + (z >> 2);
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t seed_;
  uint64_t stream_;
  uint64_t counter_ = 0;
};

// Fills a fresh tensor with iid standard normals from `stream`.
inline Tensor sample_gaussian(const std::vector<int>& shape, RngStream& stream) {
  if (shape.empty()) throw std::invalid_argument("sample_gaussian: empty shape");
  Tensor t(shape);
  for (auto& v : t.data) v = stream.gaussian();
  return t;
}

}  // namespace reguide
