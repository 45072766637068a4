#include <algorithm>
#include <bit>
#include <cmath>

#include "tpi/kernels/kernels.hpp"
#include "tpi/kernels/scalar_math.hpp"

namespace tpi::kernels::detail {

namespace {

std::uint64_t next_lane(LaneRng& rng, int lane) {
  auto& s = rng.s;
  const std::uint64_t result = s[0][lane] + s[3][lane];
  const std::uint64_t t = s[1][lane] << 17;
  s[2][lane] ^= s[0][lane];
  s[3][lane] ^= s[1][lane];
  s[1][lane] ^= s[2][lane];
  s[0][lane] ^= s[3][lane];
  s[2][lane] ^= t;
  s[3][lane] = std::rotl(s[3][lane], 45);
  return result;
}

}  // namespace

void singles_rates_scalar(const SinglesRateParams& p, double delta_x_um,
                          std::span<const double> offsets_um, std::span<double> out) {
  for (std::size_t k = 0; k < offsets_um.size(); ++k) {
    const double x = delta_x_um + offsets_um[k];
    const double cycles = x * p.inv_wavelength_um;
    const double y = -((x * x) * p.inv_two_sigma_sq);
    const double term = (p.signed_visibility * ref::cos_cycles(cycles)) * ref::exp_nonpositive(y);
    out[k] = p.baseline_cps * (1.0 + term);
  }
}

void thin_poisson_scalar(const ThinningPlan& plan, const ThinningConstants& c, LaneRng& rng,
                         std::vector<std::int64_t>& out) {
  const std::size_t n_seg = plan.segment_rates_cps.size();
  std::int64_t last = out.empty() ? -1 : out.back();
  std::size_t n = out.size();
  out.resize(std::max<std::size_t>(out.capacity(), n + 64));
  std::int64_t t_base = 0;
  std::size_t k = 0;
  while (t_base < c.duration_ticks) {
    const std::int64_t seg_end =
        k + 1 < n_seg ? std::min(static_cast<std::int64_t>(k + 1) * c.segment_ticks, c.duration_ticks)
                      : c.duration_ticks;
    const std::int64_t piece_end = std::min(seg_end, t_base + c.kPieceTicks);
    const double rate = plan.segment_rates_cps[k];
    const double bound = plan.segment_bounds_cps.empty() ? plan.bound_cps : plan.segment_bounds_cps[k];
    if (!(bound > 0.0)) {
      t_base = piece_end;
    } else {
      const double mean_gap = c.kTicksPerSecond / bound;
      // A segment at its bound accepts every candidate and draws no acceptance uniforms.
      const bool all_accept = rate >= bound;
      while (true) {
        if (n + 4 > out.size()) out.resize(out.size() + out.size() / 2 + 64);
        double u_gap[4];
        double u_acc[4] = {0.0, 0.0, 0.0, 0.0};
        for (int lane = 0; lane < 4; ++lane) u_gap[lane] = ref::open_closed_unit(next_lane(rng, lane));
        if (!all_accept) {
          for (int lane = 0; lane < 4; ++lane) u_acc[lane] = ref::closed_open_unit(next_lane(rng, lane));
        }
        std::int64_t t = t_base;
        for (int lane = 0; lane < 4; ++lane) {
          double gap = (0.0 - ref::log_unit(u_gap[lane])) * mean_gap;
          gap = gap < c.kGapClamp ? gap : c.kGapClamp;
          t += ref::exact_to_int(gap);
          const std::int64_t ts = t >> c.kShift;
          const bool keep = (all_accept | (u_acc[lane] * bound < rate)) & (t < piece_end) & (ts > last);
          out[n] = ts;
          n += keep;
          last = keep ? ts : last;
        }
        if (t >= piece_end) {
          t_base = piece_end;
          break;
        }
        t_base = t;
      }
    }
    if (t_base >= seg_end) ++k;
  }
  out.resize(n);
}

void log_unit_scalar(std::span<const double> in, std::span<double> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = ref::log_unit(in[i]);
}

void exp_nonpositive_scalar(std::span<const double> in, std::span<double> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = ref::exp_nonpositive(in[i]);
}

void cos_cycles_scalar(std::span<const double> in, std::span<double> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = ref::cos_cycles(in[i]);
}

void close_gaps_scalar(std::span<const std::int64_t> ts, std::int64_t max_gap,
                       std::vector<std::size_t>& out) {
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    if (ts[i + 1] - ts[i] <= max_gap) out.push_back(i);
  }
}

}  // namespace tpi::kernels::detail
