// AVX2 variants. This translation unit is the only one compiled with -mavx2; every function
// mirrors the operation order of scalar_math.hpp so results match the scalar path bit for bit.

#include <algorithm>
#include <bit>

#include "tpi/kernels/kernels.hpp"
#include "tpi/kernels/scalar_math.hpp"

#if defined(__AVX2__)
#include <immintrin.h>
#endif

namespace tpi::kernels::detail {

#if defined(__AVX2__)

namespace {

inline __m256d set1(double v) { return _mm256_set1_pd(v); }

inline __m256i set1i(std::uint64_t v) { return _mm256_set1_epi64x(static_cast<long long>(v)); }

inline __m256d log_unit_v(__m256d u) {
  const __m256i bits = _mm256_castpd_si256(u);
  __m256i e_field = _mm256_srli_epi64(bits, 52);
  __m256d m = _mm256_castsi256_pd(
      _mm256_or_si256(_mm256_and_si256(bits, set1i(ref::kMantissaMask)), set1i(ref::kOneBits)));
  const __m256d big = _mm256_cmp_pd(m, set1(ref::kSqrt2), _CMP_GT_OQ);
  m = _mm256_blendv_pd(m, _mm256_mul_pd(m, set1(0.5)), big);
  e_field = _mm256_add_epi64(e_field, _mm256_and_si256(_mm256_castpd_si256(big), set1i(1)));
  const __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(e_field, set1i(ref::kTwo52Bits))),
                                  set1(ref::kTwo52 + 1023.0));
  const __m256d s = _mm256_div_pd(_mm256_sub_pd(m, set1(1.0)), _mm256_add_pd(m, set1(1.0)));
  const __m256d z = _mm256_mul_pd(s, s);
  const __m256d z2 = _mm256_mul_pd(z, z);
  const __m256d z4 = _mm256_mul_pd(z2, z2);
  const __m256d z8 = _mm256_mul_pd(z4, z4);
  auto pair = [&](int k) {
    return _mm256_add_pd(set1(ref::kLogC[k]), _mm256_mul_pd(set1(ref::kLogC[k + 1]), z));
  };
  const __m256d q0 = pair(0);
  const __m256d q1 = pair(2);
  const __m256d q2 = pair(4);
  const __m256d q3 = pair(6);
  const __m256d q4 = pair(8);
  const __m256d p = _mm256_add_pd(
      _mm256_add_pd(_mm256_add_pd(q0, _mm256_mul_pd(q1, z2)),
                    _mm256_mul_pd(_mm256_add_pd(q2, _mm256_mul_pd(q3, z2)), z4)),
      _mm256_mul_pd(q4, z8));
  const __m256d log_m = _mm256_mul_pd(_mm256_add_pd(s, s), p);
  return _mm256_add_pd(_mm256_mul_pd(e, set1(ref::kLn2Hi)),
                       _mm256_add_pd(log_m, _mm256_mul_pd(e, set1(ref::kLn2Lo))));
}

inline __m256d exp_nonpositive_v(__m256d y) {
  y = _mm256_max_pd(y, set1(ref::kExpFloor));
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(y, set1(ref::kLog2e)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  const __m256d r = _mm256_sub_pd(_mm256_sub_pd(y, _mm256_mul_pd(n, set1(ref::kLn2Hi))),
                                  _mm256_mul_pd(n, set1(ref::kLn2Lo)));
  __m256d p = set1(ref::kExpC[13]);
  for (int k = 12; k >= 0; --k) p = _mm256_add_pd(_mm256_mul_pd(p, r), set1(ref::kExpC[k]));
  const __m256i biased = _mm256_sub_epi64(
      _mm256_castpd_si256(_mm256_add_pd(n, set1(ref::kTwo52 + 1023.0))), set1i(ref::kTwo52Bits));
  return _mm256_mul_pd(p, _mm256_castsi256_pd(_mm256_slli_epi64(biased, 52)));
}

inline __m256d cos_cycles_v(__m256d c) {
  const __m256d sign = set1(-0.0);
  const __m256d f =
      _mm256_sub_pd(c, _mm256_round_pd(c, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC));
  __m256d g = _mm256_andnot_pd(sign, f);
  const __m256d flip = _mm256_cmp_pd(g, set1(0.25), _CMP_GT_OQ);
  g = _mm256_blendv_pd(g, _mm256_sub_pd(set1(0.5), g), flip);
  const __m256d use_sin = _mm256_cmp_pd(g, set1(0.125), _CMP_GT_OQ);
  const __m256d h = _mm256_blendv_pd(g, _mm256_sub_pd(set1(0.25), g), use_sin);
  const __m256d theta = _mm256_mul_pd(h, set1(ref::kTwoPi));
  const __m256d z = _mm256_mul_pd(theta, theta);
  __m256d pc = set1(ref::kCosC[8]);
  for (int k = 7; k >= 0; --k) pc = _mm256_add_pd(_mm256_mul_pd(pc, z), set1(ref::kCosC[k]));
  __m256d ps = set1(ref::kSinC[7]);
  for (int k = 6; k >= 0; --k) ps = _mm256_add_pd(_mm256_mul_pd(ps, z), set1(ref::kSinC[k]));
  ps = _mm256_mul_pd(theta, ps);
  const __m256d r = _mm256_blendv_pd(pc, ps, use_sin);
  return _mm256_xor_pd(r, _mm256_and_pd(flip, sign));
}

struct LaneState {
  __m256i s0, s1, s2, s3;

  explicit LaneState(const LaneRng& rng)
      : s0(_mm256_load_si256(reinterpret_cast<const __m256i*>(rng.s[0]))),
        s1(_mm256_load_si256(reinterpret_cast<const __m256i*>(rng.s[1]))),
        s2(_mm256_load_si256(reinterpret_cast<const __m256i*>(rng.s[2]))),
        s3(_mm256_load_si256(reinterpret_cast<const __m256i*>(rng.s[3]))) {}

  void store(LaneRng& rng) const {
    _mm256_store_si256(reinterpret_cast<__m256i*>(rng.s[0]), s0);
    _mm256_store_si256(reinterpret_cast<__m256i*>(rng.s[1]), s1);
    _mm256_store_si256(reinterpret_cast<__m256i*>(rng.s[2]), s2);
    _mm256_store_si256(reinterpret_cast<__m256i*>(rng.s[3]), s3);
  }

  __m256i next() {
    const __m256i result = _mm256_add_epi64(s0, s3);
    const __m256i t = _mm256_slli_epi64(s1, 17);
    s2 = _mm256_xor_si256(s2, s0);
    s3 = _mm256_xor_si256(s3, s1);
    s1 = _mm256_xor_si256(s1, s2);
    s0 = _mm256_xor_si256(s0, s3);
    s2 = _mm256_xor_si256(s2, t);
    s3 = _mm256_or_si256(_mm256_slli_epi64(s3, 45), _mm256_srli_epi64(s3, 19));
    return result;
  }
};

// Inclusive prefix sum over the four 64-bit lanes.
// Permutation moving the 64-bit lanes selected by a 4-bit mask to the front, in order.
struct CompressTable {
  alignas(32) std::int32_t idx[16][8];
  constexpr CompressTable() : idx{} {
    for (int m = 0; m < 16; ++m) {
      int out = 0;
      for (int lane = 0; lane < 4; ++lane) {
        if ((m >> lane) & 1) {
          idx[m][2 * out] = 2 * lane;
          idx[m][2 * out + 1] = 2 * lane + 1;
          ++out;
        }
      }
      // The top selected lane fills the tail, which makes the last slot the newest value.
      for (; out < 4; ++out) {
        idx[m][2 * out] = out > 0 ? idx[m][2 * out - 2] : 0;
        idx[m][2 * out + 1] = out > 0 ? idx[m][2 * out - 1] : 1;
      }
    }
  }
};
inline constexpr CompressTable kCompress{};

inline __m256i prefix_sum(__m256i x) {
  const __m256i zero = _mm256_setzero_si256();
  x = _mm256_add_epi64(
      x, _mm256_blend_epi32(_mm256_permute4x64_epi64(x, _MM_SHUFFLE(2, 1, 0, 0)), zero, 0x03));
  x = _mm256_add_epi64(
      x, _mm256_blend_epi32(_mm256_permute4x64_epi64(x, _MM_SHUFFLE(1, 0, 0, 0)), zero, 0x0F));
  return x;
}

}  // namespace

bool avx2_compiled() { return true; }

void singles_rates_avx2(const SinglesRateParams& p, double delta_x_um,
                        std::span<const double> offsets_um, std::span<double> out) {
  const std::size_t n = offsets_um.size();
  const std::size_t full = n - n % 4;
  const __m256d dx = set1(delta_x_um);
  const __m256d inv_l = set1(p.inv_wavelength_um);
  const __m256d inv2s2 = set1(p.inv_two_sigma_sq);
  const __m256d sv = set1(p.signed_visibility);
  const __m256d base = set1(p.baseline_cps);
  const __m256d sign = set1(-0.0);
  for (std::size_t k = 0; k < full; k += 4) {
    const __m256d x = _mm256_add_pd(dx, _mm256_loadu_pd(offsets_um.data() + k));
    const __m256d cycles = _mm256_mul_pd(x, inv_l);
    const __m256d y = _mm256_xor_pd(_mm256_mul_pd(_mm256_mul_pd(x, x), inv2s2), sign);
    const __m256d term =
        _mm256_mul_pd(_mm256_mul_pd(sv, cos_cycles_v(cycles)), exp_nonpositive_v(y));
    _mm256_storeu_pd(out.data() + k, _mm256_mul_pd(base, _mm256_add_pd(set1(1.0), term)));
  }
  singles_rates_scalar(p, delta_x_um, offsets_um.subspan(full), out.subspan(full));
}

void thin_poisson_avx2(const ThinningPlan& plan, const ThinningConstants& c, LaneRng& rng,
                       std::vector<std::int64_t>& out) {
  LaneState state(rng);
  const std::size_t n_seg = plan.segment_rates_cps.size();
  const __m256d two = set1(2.0);
  const __m256d one = set1(1.0);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d two52 = set1(ref::kTwo52);
  const __m256d clamp = set1(c.kGapClamp);
  const __m256i two52_bits = set1i(ref::kTwo52Bits);
  const __m256i one_bits = set1i(ref::kOneBits);

  alignas(32) std::int64_t ts_lanes[4];
  __m256i last_v = _mm256_set1_epi64x(out.empty() ? -1 : out.back());
  std::size_t n = out.size();
  out.resize(std::max<std::size_t>(out.capacity(), n + 64));
  std::int64_t t_base = 0;
  std::size_t k = 0;
  while (t_base < c.duration_ticks) {
    const std::int64_t seg_end =
        k + 1 < n_seg ? std::min(static_cast<std::int64_t>(k + 1) * c.segment_ticks, c.duration_ticks)
                      : c.duration_ticks;
    const std::int64_t piece_end = std::min(seg_end, t_base + c.kPieceTicks);
    const double rate_s = plan.segment_rates_cps[k];
    const double bound_s =
        plan.segment_bounds_cps.empty() ? plan.bound_cps : plan.segment_bounds_cps[k];
    if (!(bound_s > 0.0)) {
      t_base = piece_end;
    } else {
      const __m256d mean_gap = set1(c.kTicksPerSecond / bound_s);
      const __m256d bound = set1(bound_s);
      const __m256d rate = set1(rate_s);
      const __m256i end_v = _mm256_set1_epi64x(piece_end);
      const bool all_accept = rate_s >= bound_s;
      __m256i base_v = _mm256_set1_epi64x(t_base);
      while (true) {
        if (n + 4 > out.size()) out.resize(out.size() + out.size() / 2 + 64);
        const __m256i raw_gap = state.next();
        const __m256d u_gap = _mm256_sub_pd(
            two, _mm256_castsi256_pd(_mm256_or_si256(_mm256_srli_epi64(raw_gap, 12), one_bits)));
        __m256d accept = _mm256_castsi256_pd(_mm256_set1_epi64x(-1));
        if (!all_accept) {
          const __m256i raw_acc = state.next();
          const __m256d u_acc = _mm256_sub_pd(
              _mm256_castsi256_pd(_mm256_or_si256(_mm256_srli_epi64(raw_acc, 12), one_bits)), one);
          accept = _mm256_cmp_pd(_mm256_mul_pd(u_acc, bound), rate, _CMP_LT_OQ);
        }

        const __m256d gap =
            _mm256_min_pd(_mm256_mul_pd(_mm256_sub_pd(zero, log_unit_v(u_gap)), mean_gap), clamp);
        const __m256i gap_ticks =
            _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(gap, two52)), two52_bits);
        const __m256i t = _mm256_add_epi64(prefix_sum(gap_ticks), base_v);
        const __m256i ts = _mm256_srli_epi64(t, c.kShift);

        const __m256d in_piece = _mm256_castsi256_pd(_mm256_cmpgt_epi64(end_v, t));
        const int mask = _mm256_movemask_pd(_mm256_and_pd(accept, in_piece));
        const bool piece_done = (_mm256_movemask_pd(in_piece) & 0x8) == 0;

        std::int64_t* dst = out.data();
        // Fast path: candidate times strictly increase from the last kept event, so every
        // accepted candidate is kept. Equal picoseconds fall back to the lane-by-lane rule.
        const __m256i prev = _mm256_blend_epi32(_mm256_permute4x64_epi64(ts, 0x90), last_v, 0x03);
        if (_mm256_movemask_pd(_mm256_castsi256_pd(_mm256_cmpgt_epi64(ts, prev))) == 0xF) {
          const __m256i packed = _mm256_permutevar8x32_epi32(
              ts, _mm256_load_si256(reinterpret_cast<const __m256i*>(kCompress.idx[mask])));
          _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + n), packed);
          n += static_cast<std::size_t>(std::popcount(static_cast<unsigned>(mask)));
          if (mask != 0) last_v = _mm256_permute4x64_epi64(packed, 0xFF);
        } else {
          std::int64_t last = _mm256_extract_epi64(last_v, 0);
          _mm256_store_si256(reinterpret_cast<__m256i*>(ts_lanes), ts);
          for (int lane = 0; lane < 4; ++lane) {
            const std::int64_t v = ts_lanes[lane];
            const bool keep = ((mask >> lane) & 1) & (v > last);
            dst[n] = v;
            n += keep;
            last = keep ? v : last;
          }
          last_v = _mm256_set1_epi64x(last);
        }
        if (piece_done) {
          t_base = piece_end;
          break;
        }
        base_v = _mm256_permute4x64_epi64(t, 0xFF);
      }
    }
    if (t_base >= seg_end) ++k;
  }
  out.resize(n);
  state.store(rng);
}

void log_unit_avx2(std::span<const double> in, std::span<double> out) {
  const std::size_t full = in.size() - in.size() % 4;
  for (std::size_t i = 0; i < full; i += 4) {
    _mm256_storeu_pd(out.data() + i, log_unit_v(_mm256_loadu_pd(in.data() + i)));
  }
  log_unit_scalar(in.subspan(full), out.subspan(full));
}

void exp_nonpositive_avx2(std::span<const double> in, std::span<double> out) {
  const std::size_t full = in.size() - in.size() % 4;
  for (std::size_t i = 0; i < full; i += 4) {
    _mm256_storeu_pd(out.data() + i, exp_nonpositive_v(_mm256_loadu_pd(in.data() + i)));
  }
  exp_nonpositive_scalar(in.subspan(full), out.subspan(full));
}

void cos_cycles_avx2(std::span<const double> in, std::span<double> out) {
  const std::size_t full = in.size() - in.size() % 4;
  for (std::size_t i = 0; i < full; i += 4) {
    _mm256_storeu_pd(out.data() + i, cos_cycles_v(_mm256_loadu_pd(in.data() + i)));
  }
  cos_cycles_scalar(in.subspan(full), out.subspan(full));
}

void close_gaps_avx2(std::span<const std::int64_t> ts, std::int64_t max_gap,
                     std::vector<std::size_t>& out) {
  const std::size_t n = ts.size();
  const std::int64_t* d = ts.data();
  const __m256i limit = _mm256_set1_epi64x(max_gap);
  std::size_t i = 0;
  for (; i + 4 < n; i += 4) {
    const __m256i a = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(d + i));
    const __m256i b = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(d + i + 1));
    const __m256i far = _mm256_cmpgt_epi64(_mm256_sub_epi64(b, a), limit);
    unsigned mask = ~static_cast<unsigned>(_mm256_movemask_pd(_mm256_castsi256_pd(far))) & 0xFu;
    while (mask != 0) {
      out.push_back(i + static_cast<std::size_t>(std::countr_zero(mask)));
      mask &= mask - 1;
    }
  }
  for (; i + 1 < n; ++i) {
    if (d[i + 1] - d[i] <= max_gap) out.push_back(i);
  }
}

#else  // !__AVX2__

bool avx2_compiled() { return false; }

void singles_rates_avx2(const SinglesRateParams& p, double dx, std::span<const double> off,
                        std::span<double> out) {
  singles_rates_scalar(p, dx, off, out);
}
void thin_poisson_avx2(const ThinningPlan& plan, const ThinningConstants& c, LaneRng& rng,
                       std::vector<std::int64_t>& out) {
  thin_poisson_scalar(plan, c, rng, out);
}
void log_unit_avx2(std::span<const double> in, std::span<double> out) { log_unit_scalar(in, out); }
void exp_nonpositive_avx2(std::span<const double> in, std::span<double> out) {
  exp_nonpositive_scalar(in, out);
}
void cos_cycles_avx2(std::span<const double> in, std::span<double> out) {
  cos_cycles_scalar(in, out);
}
void close_gaps_avx2(std::span<const std::int64_t> ts, std::int64_t max_gap,
                     std::vector<std::size_t>& out) {
  close_gaps_scalar(ts, max_gap, out);
}

#endif

}  // namespace tpi::kernels::detail
