#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace svasp {

// splitmix64 finalizer; the only mixing function used anywhere in the project.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Deterministic stream of doubles/ints. All randomness in the project flows
// from a single root seed through named stream derivation, so any module can
// be re-seeded independently of execution order elsewhere.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1) with 53 random bits
  double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  // Box-Muller; consumes exactly two raw draws per call
  double normal() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = u01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // unbiased integer in [0, n)
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) return 0;
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  bool bernoulli(double p) { return u01() < p; }

 private:
  std::uint64_t state_;
};

// stream id = mix of root seed, purpose-string hash, and indices
inline RngStream derive_stream(std::uint64_t root, std::string_view purpose,
                               std::uint64_t i = 0, std::uint64_t j = 0) {
  std::uint64_t s = mix64(root ^ fnv1a64(purpose));
  s = mix64(s ^ (0x9E3779B97F4A7C15ULL * (i + 1)));
  s = mix64(s ^ (0xC2B2AE3D27D4EB4FULL * (j + 1)));
  return RngStream(s);
}

}  // namespace svasp
