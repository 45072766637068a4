#pragma once

// Scalar reference versions of the elementary functions used inside the event-generation
// kernels. The SIMD variants perform the same operations in the same order, so both produce
// bit-identical results; that is what keeps Monte Carlo output independent of the host ISA.
// Accuracy is a few ulp against libm over each function's stated domain.

#include <bit>
#include <cmath>
#include <cstdint>

namespace tpi::kernels::ref {

inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;
inline constexpr double kLog2e = 1.44269504088896338700e+00;
inline constexpr double kSqrt2 = 1.41421356237309504880e+00;
inline constexpr double kTwoPi = 6.28318530717958647693e+00;
inline constexpr double kTwo52 = 4503599627370496.0;
inline constexpr std::uint64_t kTwo52Bits = 0x4330000000000000ULL;
inline constexpr std::uint64_t kOneBits = 0x3FF0000000000000ULL;
inline constexpr std::uint64_t kMantissaMask = 0x000FFFFFFFFFFFFFULL;
inline constexpr double kExpFloor = -700.0;

// 1/(2k+1), k = 0..9: atanh series for log.
inline constexpr double kLogC[10] = {1.0,        1.0 / 3.0,  1.0 / 5.0,  1.0 / 7.0,
                                     1.0 / 9.0,  1.0 / 11.0, 1.0 / 13.0, 1.0 / 15.0,
                                     1.0 / 17.0, 1.0 / 19.0};

// 1/k!, k = 0..13.
inline constexpr double kExpC[14] = {
    1.0,
    1.0,
    1.0 / 2.0,
    1.0 / 6.0,
    1.0 / 24.0,
    1.0 / 120.0,
    1.0 / 720.0,
    1.0 / 5040.0,
    1.0 / 40320.0,
    1.0 / 362880.0,
    1.0 / 3628800.0,
    1.0 / 39916800.0,
    1.0 / 479001600.0,
    1.0 / 6227020800.0,
};

// (-1)^k/(2k)!, k = 0..8.
inline constexpr double kCosC[9] = {
    1.0,         -1.0 / 2.0,          1.0 / 24.0,           -1.0 / 720.0,
    1.0 / 40320.0, -1.0 / 3628800.0,  1.0 / 479001600.0,    -1.0 / 87178291200.0,
    1.0 / 20922789888000.0,
};

// (-1)^k/(2k+1)!, k = 0..7.
inline constexpr double kSinC[8] = {
    1.0,           -1.0 / 6.0,        1.0 / 120.0,           -1.0 / 5040.0,
    1.0 / 362880.0, -1.0 / 39916800.0, 1.0 / 6227020800.0,   -1.0 / 1307674368000.0,
};

/// Integer-valued double in [0, 2^52) to its integer.
inline std::int64_t exact_to_int(double v) {
  return static_cast<std::int64_t>(std::bit_cast<std::uint64_t>(v + kTwo52) - kTwo52Bits);
}

/// Integer in [0, 2^52) to double.
inline double exact_to_double(std::int64_t v) {
  return std::bit_cast<double>(static_cast<std::uint64_t>(v) | kTwo52Bits) - kTwo52;
}

/// Natural log on (0, 1].
inline double log_unit(double u) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(u);
  std::uint64_t e_field = bits >> 52;
  double m = std::bit_cast<double>((bits & kMantissaMask) | kOneBits);
  if (m > kSqrt2) {
    m = m * 0.5;
    e_field += 1;
  }
  const double e = std::bit_cast<double>(e_field | kTwo52Bits) - (kTwo52 + 1023.0);
  const double s = (m - 1.0) / (m + 1.0);
  const double z = s * s;
  // Estrin's scheme: the AVX2 kernel evaluates the same tree, and its short dependency chain
  // keeps the thinning loop from stalling on polynomial latency.
  const double z2 = z * z;
  const double z4 = z2 * z2;
  const double z8 = z4 * z4;
  const double q0 = kLogC[0] + kLogC[1] * z;
  const double q1 = kLogC[2] + kLogC[3] * z;
  const double q2 = kLogC[4] + kLogC[5] * z;
  const double q3 = kLogC[6] + kLogC[7] * z;
  const double q4 = kLogC[8] + kLogC[9] * z;
  const double p = ((q0 + q1 * z2) + (q2 + q3 * z2) * z4) + q4 * z8;
  const double log_m = (s + s) * p;
  return e * kLn2Hi + (log_m + e * kLn2Lo);
}

/// exp(y) for y <= 0; arguments below -700 are clamped there.
inline double exp_nonpositive(double y) {
  y = (y > kExpFloor) ? y : kExpFloor;
  const double n = std::nearbyint(y * kLog2e);
  const double r = (y - n * kLn2Hi) - n * kLn2Lo;
  double p = kExpC[13];
  for (int k = 12; k >= 0; --k) p = p * r + kExpC[k];
  const std::uint64_t biased =
      std::bit_cast<std::uint64_t>(n + (kTwo52 + 1023.0)) - kTwo52Bits;
  return p * std::bit_cast<double>(biased << 52);
}

/// cos(2 pi c), argument in cycles. Exact reduction for |c| < 2^52.
inline double cos_cycles(double c) {
  double g = std::fabs(c - std::nearbyint(c));
  const bool flip = g > 0.25;
  g = flip ? 0.5 - g : g;
  const bool use_sin = g > 0.125;
  const double h = use_sin ? 0.25 - g : g;
  const double theta = h * kTwoPi;
  const double z = theta * theta;
  double pc = kCosC[8];
  for (int k = 7; k >= 0; --k) pc = pc * z + kCosC[k];
  double ps = kSinC[7];
  for (int k = 6; k >= 0; --k) ps = ps * z + kSinC[k];
  ps = theta * ps;
  const double r = use_sin ? ps : pc;
  return flip ? -r : r;
}

/// Uniform on (0, 1] from the top 52 bits of a raw draw.
inline double open_closed_unit(std::uint64_t raw) {
  return 2.0 - std::bit_cast<double>((raw >> 12) | kOneBits);
}

/// Uniform on [0, 1) from the top 52 bits of a raw draw.
inline double closed_open_unit(std::uint64_t raw) {
  return std::bit_cast<double>((raw >> 12) | kOneBits) - 1.0;
}

}  // namespace tpi::kernels::ref
