#pragma once

// Monte Carlo detection events. Each detector is an inhomogeneous Poisson process whose
// intensity is the analytic singles rate at the instantaneous path difference dx + delta(t),
// where delta(t) is the piezo jitter shared by both detectors. Pair correlations beyond the
// accidental ones are absent on purpose: coincidences between uncorrelated photons are
// accidental, and their interference structure comes from the shared delta(t).
//
// Arrivals are Poisson although the source is thermal. The source coherence time (~ps) is far
// below the resolving time, so bunching inside the coincidence window is negligible at the
// photon numbers simulated here.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "tpi/fringe_model.hpp"
#include "tpi/kernels/kernels.hpp"

namespace tpi {

/// Timestamps are integer picoseconds from the start of the acquisition.
using Picoseconds = std::int64_t;

inline constexpr double kPsPerSecond = 1e12;

/// Piecewise-constant path offset, one value per dwell interval.
class JitterPath {
 public:
  /// delta(t) = 0 everywhere.
  JitterPath() = default;
  JitterPath(double dwell_time_us, std::vector<double> offsets_um);

  bool enabled() const { return !offsets_um_.empty(); }
  double dwell_time_us() const { return dwell_time_us_; }
  /// One entry per dwell interval; empty when disabled.
  std::span<const double> offsets_um() const { return offsets_um_; }

  /// delta(t) in um for t in seconds. Past the last interval the last value holds.
  double at(double t_s) const;

 private:
  double dwell_time_us_ = 0.0;
  std::vector<double> offsets_um_;
};

/// Draws the jitter path for one acquisition. Disabled specs give delta(t) = 0.
JitterPath sample_jitter(const JitterSpec& spec, double duration_s, std::uint64_t seed);

/// Sorted detection times of one detector over [0, duration].
class EventStream {
 public:
  EventStream(Arm detector, double duration_s);

  /// Validates strictly increasing timestamps inside [0, duration]; throws InvalidArgument.
  static EventStream from_timestamps(Arm detector, std::vector<Picoseconds> timestamps_ps,
                                     double duration_s);

  Arm detector() const { return detector_; }
  double duration_s() const { return duration_s_; }
  std::span<const Picoseconds> timestamps_ps() const { return timestamps_ps_; }
  std::size_t size() const { return timestamps_ps_.size(); }
  bool empty() const { return timestamps_ps_.empty(); }
  double rate_cps() const { return static_cast<double>(size()) / duration_s_; }

  /// Hands back the timestamp buffer so its memory can be reused by the next generate_stream.
  std::vector<Picoseconds> release() && { return std::move(timestamps_ps_); }

  friend bool operator==(const EventStream&, const EventStream&) = default;

 private:
  struct Trusted {};
  EventStream(Trusted, Arm detector, std::vector<Picoseconds> timestamps_ps, double duration_s);

  friend EventStream generate_stream(Arm, const ExperimentConfig&, double, double, std::uint64_t,
                                     const JitterPath&, kernels::Isa, std::vector<Picoseconds>);
  friend EventStream apply_dead_time(const EventStream&, double);
  friend EventStream apply_dead_time(EventStream&&, double);

  Arm detector_;
  std::vector<Picoseconds> timestamps_ps_;
  double duration_s_;
};

/// Seed shared by both detectors' jitter draw at one scan point.
std::uint64_t jitter_seed(std::uint64_t point_seed);

/// Events for one detector at path difference `delta_x_um`. The jitter path is drawn from
/// cfg.jitter with jitter_seed(seed), so both arms generated with the same seed see the same
/// delta(t). Deterministic in (cfg, arm, delta_x, duration, seed).
/// Throws InvalidArgument for a duration outside (0, 3600] s and InvariantError when a segment
/// rate exceeds the thinning bound Rinf (1 + V).
EventStream generate_stream(Arm arm, const ExperimentConfig& cfg, double delta_x_um,
                            double duration_s, std::uint64_t seed,
                            kernels::Isa isa = kernels::default_isa());

/// Same, with an explicit jitter path (reused across both arms by the scan harness). `storage`
/// is cleared and reused for the timestamps, which saves page faults on long acquisitions.
EventStream generate_stream(Arm arm, const ExperimentConfig& cfg, double delta_x_um,
                            double duration_s, std::uint64_t seed, const JitterPath& jitter,
                            kernels::Isa isa = kernels::default_isa(),
                            std::vector<Picoseconds> storage = {});

/// Greedy non-paralyzable dead time: an event survives iff it comes at least `dead_time_ns`
/// after the previous survivor. Idempotent.
EventStream apply_dead_time(const EventStream& stream, double dead_time_ns);
/// In-place form of the above.
EventStream apply_dead_time(EventStream&& stream, double dead_time_ns);

/// Writes `# duration_s=<v> seed=<v>` then `detector,timestamp_ns` lines merged in time order.
/// Timestamps are printed in ns with three decimals (exact picoseconds).
void write_event_dump(std::ostream& os, std::span<const EventStream> streams, std::uint64_t seed);

struct EventDump {
  double duration_s = 0.0;
  std::uint64_t seed = 0;
  std::vector<EventStream> streams;  // one per detector present, D1 first

  const EventStream* find(Arm detector) const;
};

/// Parses write_event_dump output; throws ConfigError with the line number on malformed input.
EventDump read_event_dump(std::istream& is);

}  // namespace tpi
