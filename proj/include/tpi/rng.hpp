#pragma once

// Seeding and the scalar generator used outside the SIMD kernels.
//
// Every random stream in a run is derived from the master seed through splitmix64 mixing of
// (seed, tags...), so a scan point's output does not depend on execution order.

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace tpi {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Deterministic child seed from a parent seed and a list of tags.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                           std::initializer_list<std::uint64_t> tags) {
  std::uint64_t state = seed;
  std::uint64_t out = splitmix64(state);
  for (std::uint64_t tag : tags) {
    state ^= tag * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL;
    out ^= splitmix64(state);
    state += out;
  }
  return out;
}

// Tags naming the independent random streams of one scan point.
inline constexpr std::uint64_t kTagPoint = 0x504f494e54ULL;
inline constexpr std::uint64_t kTagArm = 0x41524dULL;
inline constexpr std::uint64_t kTagJitter = 0x4a4954544552ULL;

/// xoshiro256+ (Blackman & Vigna). Only the top 52 bits are used for doubles.
class Xoshiro256Plus {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256Plus(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = s_[0] + s_[3];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 52 random mantissa bits.
  double uniform() {
    return std::bit_cast<double>(((*this)() >> 12) | 0x3FF0000000000000ULL) - 1.0;
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace tpi
