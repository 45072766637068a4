#include "tpi/event_sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>
#include <queue>
#include <string>

#include "tpi/errors.hpp"
#include "tpi/rng.hpp"
#include "text.hpp"

namespace tpi {

namespace {

constexpr double kMaxDurationS = 3600.0;

void check_duration(double duration_s) {
  if (!(duration_s > 0.0) || !(duration_s <= kMaxDurationS)) {
    throw InvalidArgument("duration must be in (0, 3600] s, got " + std::to_string(duration_s));
  }
}

Picoseconds to_ps(double seconds) { return std::llround(seconds * kPsPerSecond); }

const char* detector_label(Arm arm) { return arm == Arm::one ? "D1" : "D2"; }

}  // namespace

using detail::format_double;

JitterPath::JitterPath(double dwell_time_us, std::vector<double> offsets_um)
    : dwell_time_us_(dwell_time_us), offsets_um_(std::move(offsets_um)) {
  if (!(dwell_time_us > 0.0)) throw InvalidArgument("jitter dwell time must be positive");
}

double JitterPath::at(double t_s) const {
  if (offsets_um_.empty()) return 0.0;
  const double idx = std::floor(t_s * 1e6 / dwell_time_us_);
  const auto k = static_cast<std::size_t>(
      std::clamp(idx, 0.0, static_cast<double>(offsets_um_.size() - 1)));
  return offsets_um_[k];
}

JitterPath sample_jitter(const JitterSpec& spec, double duration_s, std::uint64_t seed) {
  check_duration(duration_s);
  if (!spec.enabled) return JitterPath{};
  if (!(spec.dwell_time_us > 0.0)) throw InvalidArgument("jitter_dwell_us must be > 0");
  if (!(spec.amplitude_um >= 0.0)) throw InvalidArgument("jitter_amplitude_um must be >= 0");
  const auto segments =
      static_cast<std::size_t>(std::ceil(duration_s * 1e6 / spec.dwell_time_us - 1e-9));
  std::vector<double> offsets(std::max<std::size_t>(segments, 1));
  Xoshiro256Plus rng(seed);
  for (double& v : offsets) v = spec.amplitude_um * rng.uniform();
  return JitterPath(spec.dwell_time_us, std::move(offsets));
}

EventStream::EventStream(Arm detector, double duration_s)
    : detector_(detector), duration_s_(duration_s) {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
    throw InvalidArgument("event stream duration must be positive");
  }
}

EventStream::EventStream(Trusted, Arm detector, std::vector<Picoseconds> timestamps_ps,
                         double duration_s)
    : detector_(detector), timestamps_ps_(std::move(timestamps_ps)), duration_s_(duration_s) {}

EventStream EventStream::from_timestamps(Arm detector, std::vector<Picoseconds> timestamps_ps,
                                         double duration_s) {
  EventStream stream(detector, duration_s);
  const Picoseconds end = to_ps(duration_s);
  if (!timestamps_ps.empty() && (timestamps_ps.front() < 0 || timestamps_ps.back() > end)) {
    throw InvalidArgument("event timestamps must lie inside [0, duration]");
  }
  const auto bad = std::adjacent_find(timestamps_ps.begin(), timestamps_ps.end(),
                                      [](Picoseconds a, Picoseconds b) { return b <= a; });
  if (bad != timestamps_ps.end()) {
    throw InvalidArgument("event timestamps must be strictly increasing (index " +
                          std::to_string(bad - timestamps_ps.begin() + 1) + ")");
  }
  stream.timestamps_ps_ = std::move(timestamps_ps);
  return stream;
}

std::uint64_t jitter_seed(std::uint64_t point_seed) { return derive_seed(point_seed, {kTagJitter}); }

EventStream generate_stream(Arm arm, const ExperimentConfig& cfg, double delta_x_um,
                            double duration_s, std::uint64_t seed, kernels::Isa isa) {
  check_duration(duration_s);
  const JitterPath jitter = sample_jitter(cfg.jitter, duration_s, jitter_seed(seed));
  return generate_stream(arm, cfg, delta_x_um, duration_s, seed, jitter, isa);
}

EventStream generate_stream(Arm arm, const ExperimentConfig& cfg, double delta_x_um,
                            double duration_s, std::uint64_t seed, const JitterPath& jitter,
                            kernels::Isa isa, std::vector<Picoseconds> storage) {
  check_duration(duration_s);
  const SpectralFilter& filter = cfg.filters.filter(arm);
  const double r_inf = cfg.r_inf_cps(arm);
  const double v = cfg.visibility(arm);

  kernels::SinglesRateParams params;
  params.baseline_cps = r_inf;
  params.signed_visibility = (arm == Arm::one ? -v : v);
  params.inv_wavelength_um = 1e3 / filter.center_wavelength_nm();
  params.inv_two_sigma_sq = 1.0 / (2.0 * filter.sigma_um() * filter.sigma_um());

  static constexpr double kNoOffset[1] = {0.0};
  const std::span<const double> offsets =
      jitter.enabled() ? jitter.offsets_um() : std::span<const double>(kNoOffset);
  std::vector<double> rates(offsets.size());
  kernels::singles_rates(params, delta_x_um, offsets, rates, isa);

  // Every segment rate must respect the global cap Rinf (1 + V). Each segment is then thinned
  // against its own rate, the tightest majorant of a piecewise-constant intensity.
  const double peak = *std::max_element(rates.begin(), rates.end());
  const double cap = r_inf * (1.0 + v);
  if (peak > cap * (1.0 + 1e-12)) {
    throw InvariantError("segment rate " + std::to_string(peak) +
                         " cps exceeds the thinning bound " + std::to_string(cap) + " cps");
  }

  std::vector<Picoseconds> timestamps = std::move(storage);
  timestamps.clear();
  kernels::ThinningPlan plan;
  plan.segment_rates_cps = rates;
  plan.segment_bounds_cps = rates;
  plan.duration_ps = to_ps(duration_s);
  plan.segment_ps =
      jitter.enabled() ? std::llround(jitter.dwell_time_us() * 1e6) : plan.duration_ps;
  auto lanes = kernels::LaneRng::seeded(
      derive_seed(seed, {kTagArm, static_cast<std::uint64_t>(arm_index(arm))}));
  kernels::thin_poisson(plan, lanes, timestamps, isa);
  return EventStream(EventStream::Trusted{}, arm, std::move(timestamps), duration_s);
}

namespace {

Picoseconds dead_time_ps(double dead_time_ns) {
  if (!(dead_time_ns >= 0.0) || !std::isfinite(dead_time_ns)) {
    throw InvalidArgument("dead time must be finite and >= 0");
  }
  return std::llround(dead_time_ns * 1e3);
}

// Greedy filter over [first, last) written to `dst` (which may alias `first`); returns the end.
template <typename It, typename Out>
Out dead_time_filter(It first, It last, Out dst, Picoseconds dead_ps) {
  Picoseconds next_allowed = std::numeric_limits<Picoseconds>::min();
  for (; first != last; ++first) {
    const Picoseconds t = *first;
    if (t >= next_allowed) {
      *dst++ = t;
      next_allowed = t + dead_ps;
    }
  }
  return dst;
}

}  // namespace

EventStream apply_dead_time(const EventStream& stream, double dead_time_ns) {
  const Picoseconds dead_ps = dead_time_ps(dead_time_ns);
  const auto in = stream.timestamps_ps();
  std::vector<Picoseconds> kept;
  kept.reserve(in.size());
  dead_time_filter(in.begin(), in.end(), std::back_inserter(kept), dead_ps);
  return EventStream(EventStream::Trusted{}, stream.detector(), std::move(kept),
                     stream.duration_s());
}

EventStream apply_dead_time(EventStream&& stream, double dead_time_ns) {
  const Picoseconds dead_ps = dead_time_ps(dead_time_ns);
  auto& ts = stream.timestamps_ps_;
  ts.erase(dead_time_filter(ts.begin(), ts.end(), ts.begin(), dead_ps), ts.end());
  return std::move(stream);
}

void write_event_dump(std::ostream& os, std::span<const EventStream> streams, std::uint64_t seed) {
  if (streams.empty()) throw InvalidArgument("event dump needs at least one stream");
  const double duration = streams.front().duration_s();
  for (const auto& s : streams) {
    if (s.duration_s() != duration) throw InvalidArgument("event dump streams differ in duration");
  }
  os << "# duration_s=" << format_double(duration) << " seed=" << seed << '\n';

  // k-way merge by (timestamp, detector).
  using Head = std::pair<Picoseconds, std::size_t>;
  std::priority_queue<Head, std::vector<Head>, std::greater<>> heap;
  std::vector<std::size_t> pos(streams.size(), 0);
  std::vector<std::size_t> order(streams.size());
  for (std::size_t i = 0; i < streams.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return arm_index(streams[a].detector()) < arm_index(streams[b].detector());
  });
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& s = streams[order[rank]];
    if (!s.empty()) heap.push({s.timestamps_ps()[0], rank});
  }
  char line[64];
  while (!heap.empty()) {
    const auto [t, rank] = heap.top();
    heap.pop();
    const auto& s = streams[order[rank]];
    const int n = std::snprintf(line, sizeof line, "%s,%lld.%03lld\n", detector_label(s.detector()),
                                static_cast<long long>(t / 1000), static_cast<long long>(t % 1000));
    os.write(line, n);
    if (++pos[rank] < s.size()) heap.push({s.timestamps_ps()[pos[rank]], rank});
  }
}

const EventStream* EventDump::find(Arm detector) const {
  for (const auto& s : streams) {
    if (s.detector() == detector) return &s;
  }
  return nullptr;
}

EventDump read_event_dump(std::istream& is) {
  EventDump dump;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  std::vector<Picoseconds> times[2];
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (have_header) continue;
      const auto d = line.find("duration_s=");
      const auto s = line.find("seed=");
      if (d == std::string::npos || s == std::string::npos) {
        throw ConfigError("event dump header must carry duration_s and seed", line_no);
      }
      const char* begin = line.data();
      auto r1 = std::from_chars(begin + d + 11, begin + line.size(), dump.duration_s);
      auto r2 = std::from_chars(begin + s + 5, begin + line.size(), dump.seed);
      if (r1.ec != std::errc{} || r2.ec != std::errc{}) {
        throw ConfigError("malformed event dump header", line_no);
      }
      have_header = true;
      continue;
    }
    if (!have_header) throw ConfigError("event dump is missing its header line", line_no);
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError("expected detector,timestamp_ns", line_no);
    const std::string det = line.substr(0, comma);
    int idx = -1;
    if (det == "D1") idx = 0;
    if (det == "D2") idx = 1;
    if (idx < 0) throw ConfigError("unknown detector '" + det + "'", line_no);

    const std::string ts = line.substr(comma + 1);
    const auto dot = ts.find('.');
    long long whole = 0;
    long long frac = 0;
    const char* p = ts.data();
    const std::size_t int_len = dot == std::string::npos ? ts.size() : dot;
    auto r = std::from_chars(p, p + int_len, whole);
    if (r.ec != std::errc{} || r.ptr != p + int_len || whole < 0) {
      throw ConfigError("malformed timestamp '" + ts + "'", line_no);
    }
    if (dot != std::string::npos) {
      std::string digits = ts.substr(dot + 1);
      if (digits.empty() || digits.size() > 3) {
        throw ConfigError("timestamp needs 1-3 fractional digits (ps)", line_no);
      }
      while (digits.size() < 3) digits.push_back('0');
      auto rf = std::from_chars(digits.data(), digits.data() + 3, frac);
      if (rf.ec != std::errc{} || rf.ptr != digits.data() + 3) {
        throw ConfigError("malformed timestamp '" + ts + "'", line_no);
      }
    }
    times[idx].push_back(whole * 1000 + frac);
  }
  if (!have_header) throw ConfigError("event dump is empty");
  try {
    for (int i = 0; i < 2; ++i) {
      dump.streams.push_back(EventStream::from_timestamps(i == 0 ? Arm::one : Arm::two,
                                                          std::move(times[i]), dump.duration_s));
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("event dump: ") + e.what());
  }
  return dump;
}

}  // namespace tpi
