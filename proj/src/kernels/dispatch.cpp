#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdlib>
#include <string>

#include "tpi/errors.hpp"
#include "tpi/kernels/kernels.hpp"
#include "tpi/rng.hpp"

namespace tpi::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

void check_sizes(std::size_t in, std::size_t out) {
  if (out < in) throw InvalidArgument("kernel output span shorter than input");
}

}  // namespace

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  if (isa == Isa::scalar) return true;
  return detail::avx2_compiled() && cpu_has_avx2();
}

Isa default_isa() {
  static const Isa chosen = [] {
    if (std::getenv("TPI_FORCE_SCALAR") != nullptr) return Isa::scalar;
    return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
  }();
  return chosen;
}

LaneRng LaneRng::seeded(std::uint64_t seed) {
  LaneRng rng{};
  for (int lane = 0; lane < 4; ++lane) {
    std::uint64_t sm = derive_seed(seed, {static_cast<std::uint64_t>(lane)});
    for (int word = 0; word < 4; ++word) rng.s[word][lane] = splitmix64(sm);
  }
  return rng;
}

namespace detail {

ThinningConstants prepare_thinning(const ThinningPlan& plan) {
  const auto& rates = plan.segment_rates_cps;
  const auto& bounds = plan.segment_bounds_cps;
  if (rates.empty()) throw InvalidArgument("thinning needs at least one segment");
  if (plan.segment_ps <= 0) throw InvalidArgument("thinning segment length must be positive");
  if (plan.duration_ps <= 0 || plan.duration_ps > kMaxDurationPs) {
    throw InvalidArgument("thinning duration must be in (0, 3600] s");
  }
  if (!bounds.empty() && bounds.size() != rates.size()) {
    throw InvalidArgument("thinning bounds table must match the rate table");
  }
  if (bounds.empty() && (!(plan.bound_cps >= 0.0) || !std::isfinite(plan.bound_cps))) {
    throw InvalidArgument("thinning bound must be finite and >= 0");
  }
  for (std::size_t k = 0; k < rates.size(); ++k) {
    const double b = bounds.empty() ? plan.bound_cps : bounds[k];
    if (!(rates[k] >= 0.0) || !std::isfinite(rates[k]) || !(b >= 0.0) || !std::isfinite(b)) {
      throw InvalidArgument("thinning rates and bounds must be finite and >= 0");
    }
    if (rates[k] > b) {
      throw InvariantError("segment " + std::to_string(k) + " rate " + std::to_string(rates[k]) +
                           " cps exceeds its thinning bound " + std::to_string(b) + " cps");
    }
  }
  ThinningConstants c;
  const std::int64_t max_segment_ps = std::numeric_limits<std::int64_t>::max() >> (c.kShift + 1);
  c.segment_ticks = std::min(plan.segment_ps, max_segment_ps) << c.kShift;
  c.duration_ticks = plan.duration_ps << c.kShift;
  return c;
}

}  // namespace detail

void singles_rates(const SinglesRateParams& params, double delta_x_um,
                   std::span<const double> offsets_um, std::span<double> out, Isa isa) {
  check_sizes(offsets_um.size(), out.size());
  if (isa == Isa::avx2 && isa_supported(Isa::avx2)) {
    detail::singles_rates_avx2(params, delta_x_um, offsets_um, out);
  } else {
    detail::singles_rates_scalar(params, delta_x_um, offsets_um, out);
  }
}

void thin_poisson(const ThinningPlan& plan, LaneRng& rng, std::vector<std::int64_t>& out,
                  Isa isa) {
  const auto c = detail::prepare_thinning(plan);
  double mean_rate = 0.0;
  for (double r : plan.segment_rates_cps) mean_rate += r;
  mean_rate /= static_cast<double>(plan.segment_rates_cps.size());
  const double expected = mean_rate * static_cast<double>(plan.duration_ps) * 1e-12;
  out.reserve(out.size() + static_cast<std::size_t>(expected * 1.02 + 6.0 * std::sqrt(expected)) + 64);
  if (isa == Isa::avx2 && isa_supported(Isa::avx2)) {
    detail::thin_poisson_avx2(plan, c, rng, out);
  } else {
    detail::thin_poisson_scalar(plan, c, rng, out);
  }
}

void log_unit(std::span<const double> in, std::span<double> out, Isa isa) {
  check_sizes(in.size(), out.size());
  if (isa == Isa::avx2 && isa_supported(Isa::avx2)) {
    detail::log_unit_avx2(in, out);
  } else {
    detail::log_unit_scalar(in, out);
  }
}

void exp_nonpositive(std::span<const double> in, std::span<double> out, Isa isa) {
  check_sizes(in.size(), out.size());
  if (isa == Isa::avx2 && isa_supported(Isa::avx2)) {
    detail::exp_nonpositive_avx2(in, out);
  } else {
    detail::exp_nonpositive_scalar(in, out);
  }
}

void cos_cycles(std::span<const double> in, std::span<double> out, Isa isa) {
  check_sizes(in.size(), out.size());
  if (isa == Isa::avx2 && isa_supported(Isa::avx2)) {
    detail::cos_cycles_avx2(in, out);
  } else {
    detail::cos_cycles_scalar(in, out);
  }
}

void close_gaps(std::span<const std::int64_t> ts, std::int64_t max_gap,
                std::vector<std::size_t>& out, Isa isa) {
  if (isa == Isa::avx2 && isa_supported(Isa::avx2)) {
    detail::close_gaps_avx2(ts, max_gap, out);
  } else {
    detail::close_gaps_scalar(ts, max_gap, out);
  }
}

}  // namespace tpi::kernels
