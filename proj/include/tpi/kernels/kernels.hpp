#pragma once

// Data-parallel inner loops of the event simulator, in a scalar reference form and an AVX2
// form picked at runtime. Both forms are bit-identical; tests enforce this.

#include <cstdint>
#include <span>
#include <vector>

namespace tpi::kernels {

enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa);

/// Whether this build contains the ISA's kernels and the running CPU can execute them.
bool isa_supported(Isa isa);

/// Best supported ISA, or scalar when the TPI_FORCE_SCALAR environment variable is set.
Isa default_isa();

/// Four independent xoshiro256+ generators laid out word-major, s[word][lane], so one vector
/// register holds the same state word of all lanes.
struct LaneRng {
  alignas(32) std::uint64_t s[4][4];

  static LaneRng seeded(std::uint64_t seed);
};

/// out[k] = baseline (1 + signed_visibility cos(2 pi x_k / lambda) exp(-x_k^2 / (2 sigma^2)))
/// with x_k = delta_x + offsets[k], all lengths in um.
struct SinglesRateParams {
  double baseline_cps = 0.0;
  double signed_visibility = 0.0;
  double inv_wavelength_um = 0.0;
  double inv_two_sigma_sq = 0.0;
};

void singles_rates(const SinglesRateParams& params, double delta_x_um,
                   std::span<const double> offsets_um, std::span<double> out, Isa isa);

/// Piecewise-constant intensity sampled by thinning. Segment k covers
/// [k segment_ps, (k+1) segment_ps) and is thinned against its own majorant: candidates arrive
/// at rate segment_bounds_cps[k] (or bound_cps for every segment when the span is empty) and
/// are kept with probability rate/bound. The candidate clock restarts at each segment boundary,
/// which is exact for a memoryless process. Times past the last segment reuse its rate.
struct ThinningPlan {
  std::span<const double> segment_rates_cps;
  std::int64_t segment_ps = 0;
  std::int64_t duration_ps = 0;
  double bound_cps = 0.0;
  std::span<const double> segment_bounds_cps = {};
};

/// Longest duration the thinning kernel accepts, ps (one hour).
inline constexpr std::int64_t kMaxDurationPs = 3'600'000'000'000'000LL;

/// Appends strictly increasing timestamps (ps) in [0, duration) to `out`. Candidates that
/// land on the same picosecond as the previous accepted event are dropped.
/// Throws InvalidArgument on an empty rate table, a non-positive segment, a duration outside
/// (0, kMaxDurationPs], a negative or non-finite rate or bound, or a bounds table whose size
/// differs from the rate table. Throws InvariantError when a rate exceeds its bound.
void thin_poisson(const ThinningPlan& plan, LaneRng& rng, std::vector<std::int64_t>& out, Isa isa);

/// Appends every index i with ts[i+1] - ts[i] <= max_gap, in ascending order. `ts` must be
/// non-decreasing.
void close_gaps(std::span<const std::int64_t> ts, std::int64_t max_gap,
                std::vector<std::size_t>& out, Isa isa);

// Batch forms of the elementary functions, for equivalence and accuracy testing.
void log_unit(std::span<const double> in, std::span<double> out, Isa isa);
void exp_nonpositive(std::span<const double> in, std::span<double> out, Isa isa);
void cos_cycles(std::span<const double> in, std::span<double> out, Isa isa);

namespace detail {

struct ThinningConstants {
  static constexpr int kShift = 10;  // candidate clock runs at 2^kShift ticks per ps
  static constexpr double kTicksPerSecond = 1e12 * (1 << kShift);
  // Candidate clocks restart at least every kPieceTicks; longer gaps are clamped to kGapClamp,
  // which keeps the double-to-integer conversion exact and never moves an accepted event.
  static constexpr std::int64_t kPieceTicks = std::int64_t{1} << 49;
  static constexpr double kGapClamp = 0x1p50;

  std::int64_t segment_ticks = 0;
  std::int64_t duration_ticks = 0;
};

ThinningConstants prepare_thinning(const ThinningPlan& plan);

void singles_rates_scalar(const SinglesRateParams&, double, std::span<const double>,
                          std::span<double>);
void thin_poisson_scalar(const ThinningPlan&, const ThinningConstants&, LaneRng&,
                         std::vector<std::int64_t>&);
void log_unit_scalar(std::span<const double>, std::span<double>);
void exp_nonpositive_scalar(std::span<const double>, std::span<double>);
void cos_cycles_scalar(std::span<const double>, std::span<double>);
void close_gaps_scalar(std::span<const std::int64_t>, std::int64_t, std::vector<std::size_t>&);

bool avx2_compiled();
void singles_rates_avx2(const SinglesRateParams&, double, std::span<const double>,
                        std::span<double>);
void thin_poisson_avx2(const ThinningPlan&, const ThinningConstants&, LaneRng&,
                       std::vector<std::int64_t>&);
void log_unit_avx2(std::span<const double>, std::span<double>);
void exp_nonpositive_avx2(std::span<const double>, std::span<double>);
void cos_cycles_avx2(std::span<const double>, std::span<double>);
void close_gaps_avx2(std::span<const std::int64_t>, std::int64_t, std::vector<std::size_t>&);

}  // namespace detail

}  // namespace tpi::kernels
