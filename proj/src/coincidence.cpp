#include "tpi/coincidence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "tpi/errors.hpp"
#include "tpi/kernels/kernels.hpp"

namespace tpi {

namespace {

void require_sorted(std::span<const Picoseconds> t, const char* name) {
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i] < t[i - 1]) {
      throw InvalidArgument(std::string("stream ") + name + " is not sorted at index " +
                            std::to_string(i));
    }
  }
}

std::uint64_t greedy(std::span<const Picoseconds> a, std::span<const Picoseconds> b,
                     Picoseconds h, Picoseconds off) {
  std::uint64_t pairs = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    const Picoseconds d = (b[j] + off) - a[i];
    if (d < -h) {
      ++j;
    } else if (d > h) {
      ++i;
    } else {
      ++pairs;
      ++i;
      ++j;
    }
  }
  return pairs;
}

// An event with no opposite-stream partner inside the window never changes the greedy walk:
// every comparison against it fails, and whichever side is earlier advances exactly as it would
// without it. So the walk runs only on events that might have a partner. Candidates in `a` come
// from a bucket test against `b`: time is cut into 16.384 ns buckets, and a chunk of buckets at
// a time is stamped with the buckets occupied by `b`. The `b` events near each candidate are
// then picked up by galloping search.
constexpr int kBucketShift = 14;
constexpr int kChunkShift = 14;
constexpr Picoseconds kChunkBuckets = Picoseconds{1} << kChunkShift;

std::size_t gallop_to(std::span<const Picoseconds> b, std::size_t from, Picoseconds target,
                      Picoseconds off) {
  // First index >= from with b + off >= target.
  std::size_t step = 1;
  std::size_t hi = from;
  while (hi < b.size() && b[hi] + off < target) {
    from = hi + 1;
    hi += step;
    step *= 2;
  }
  hi = std::min(hi, b.size());
  return static_cast<std::size_t>(
      std::lower_bound(b.begin() + static_cast<std::ptrdiff_t>(from),
                       b.begin() + static_cast<std::ptrdiff_t>(hi), target - off) -
      b.begin());
}

std::uint64_t filtered_greedy(std::span<const Picoseconds> a, std::span<const Picoseconds> b,
                              Picoseconds h, Picoseconds off) {
  std::vector<std::uint32_t> stamp(static_cast<std::size_t>(kChunkBuckets) + 2,
                                   std::numeric_limits<std::uint32_t>::max());
  std::vector<Picoseconds> near_a;
  auto bucket_b = [&](std::size_t j) { return (b[j] + off) >> kBucketShift; };

  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size()) {
    const Picoseconds chunk = (a[i] >> kBucketShift) >> kChunkShift;
    const Picoseconds base = chunk << kChunkShift;
    const auto id = static_cast<std::uint32_t>(chunk);
    std::uint32_t* slot = stamp.data() + 1 - base;  // slot[bucket] for bucket in [base-1, base+C]
    while (j < b.size() && bucket_b(j) < base - 1) ++j;
    for (std::size_t k = j; k < b.size(); ++k) {
      const Picoseconds bk = bucket_b(k);
      if (bk > base + kChunkBuckets) break;
      slot[bk] = id;
    }
    const Picoseconds end = (base + kChunkBuckets) << kBucketShift;
    for (; i < a.size() && a[i] < end; ++i) {
      const Picoseconds v = a[i];
      const bool near = (slot[(v - h) >> kBucketShift] == id) | (slot[(v + h) >> kBucketShift] == id);
      if (near) near_a.push_back(v);
    }
  }

  std::vector<Picoseconds> near_b;
  std::size_t k = 0;
  std::size_t taken = 0;  // b[0, taken) already copied
  for (const Picoseconds v : near_a) {
    k = gallop_to(b, k, v - h, off);
    for (std::size_t q = std::max(k, taken); q < b.size() && b[q] + off <= v + h; ++q) {
      near_b.push_back(b[q] + off);
      taken = q + 1;
    }
  }
  return greedy(near_a, near_b, h, 0);
}

std::uint64_t count_sorted(std::span<const Picoseconds> a, std::span<const Picoseconds> b,
                           Picoseconds h, Picoseconds off) {
  if (a.empty() || b.empty()) return 0;
  // [t - h, t + h] must fit in two buckets for the bucket test.
  if (2 * h + 1 > (Picoseconds{1} << kBucketShift)) return greedy(a, b, h, off);
  return filtered_greedy(a, b, h, off);
}

// Self pairs: `a` is the stream and `b` the same stream delayed, so a pair is (late i, early j)
// with t_i - t_j in [delay - h, delay + h]. Mean gaps are long against delay + h, so one forward
// look at the next event rules out nearly every event, and greedy runs on the rest.
std::uint64_t count_self_sorted(std::span<const Picoseconds> ts, Picoseconds h,
                                Picoseconds delay) {
  const Picoseconds lo = delay - h;
  const Picoseconds hi = delay + h;
  std::vector<Picoseconds> early;
  std::vector<Picoseconds> late;
  const std::size_t n = ts.size();
  std::vector<std::size_t> starts;
  kernels::close_gaps(ts, hi, starts, kernels::default_isa());
  for (const std::size_t i : starts) {
    for (std::size_t k = i + 1; k < n && ts[k] - ts[i] <= hi; ++k) {
      if (ts[k] - ts[i] < lo) continue;
      if (early.empty() || early.back() != ts[i] + delay) early.push_back(ts[i] + delay);
      late.push_back(ts[k]);
    }
  }
  std::sort(late.begin(), late.end());
  late.erase(std::unique(late.begin(), late.end()), late.end());
  return greedy(late, early, h, 0);
}

CoincidenceResult make_result(std::uint64_t pairs, double window_ns, double delay_ns,
                              std::size_t na, std::size_t nb, double duration_s) {
  CoincidenceResult r;
  r.pair_count = pairs;
  r.window_ns = window_ns;
  r.delay_ns = delay_ns;
  r.events_a = na;
  r.events_b = nb;
  r.rate_cps = static_cast<double>(pairs) / duration_s;
  return r;
}

}  // namespace

Picoseconds half_window_ps(double window_ns) {
  if (!(window_ns > 0.0) || !std::isfinite(window_ns)) {
    throw InvalidArgument("coincidence window must be positive");
  }
  return std::llround(window_ns * 1e3 / 2.0);
}

std::uint64_t count_pairs_two_pointer(std::span<const Picoseconds> a,
                                      std::span<const Picoseconds> b, Picoseconds half_window,
                                      Picoseconds offset_b) {
  require_sorted(a, "a");
  require_sorted(b, "b");
  if (half_window < 0) throw InvalidArgument("half window must be >= 0");
  return greedy(a, b, half_window, offset_b);
}

std::uint64_t count_pairs(std::span<const Picoseconds> a, std::span<const Picoseconds> b,
                          Picoseconds half_window, Picoseconds offset_b) {
  require_sorted(a, "a");
  require_sorted(b, "b");
  if (half_window < 0) throw InvalidArgument("half window must be >= 0");
  return count_sorted(a, b, half_window, offset_b);
}

CoincidenceResult count_cross(const EventStream& a, const EventStream& b, double window_ns) {
  if (a.duration_s() != b.duration_s()) {
    throw InvalidArgument("cross coincidences need streams of equal duration");
  }
  const auto pairs =
      count_sorted(a.timestamps_ps(), b.timestamps_ps(), half_window_ps(window_ns), 0);
  return make_result(pairs, window_ns, 0.0, a.size(), b.size(), a.duration_s());
}

CoincidenceResult count_self_delayed(const EventStream& a, double delay_ns, double window_ns,
                                     double dead_time_ns) {
  const Picoseconds h = half_window_ps(window_ns);
  if (!std::isfinite(delay_ns)) throw InvalidArgument("delay must be finite");
  const Picoseconds delay = std::llround(delay_ns * 1e3);
  if (delay <= h) {
    throw InvalidArgument("self-coincidence delay must exceed half the window");
  }
  const auto ts = a.timestamps_ps();
  // Pairs are (early, late) with late = early + delay, so the shifted copy plays "early".
  const auto pairs = count_self_sorted(ts, h, delay);
  auto r = make_result(pairs, window_ns, delay_ns, a.size(), a.size(), a.duration_s());
  if (delay_ns <= dead_time_ns) {
    r.warning = "delay does not exceed the dead time; dead time forbids every delayed pair";
  }
  return r;
}

double expected_accidentals(const EventStream& a, const EventStream& b, double window_ns) {
  if (!(window_ns > 0.0)) throw InvalidArgument("coincidence window must be positive");
  const double T = a.duration_s();
  return (static_cast<double>(a.size()) / T) * (static_cast<double>(b.size()) / T) * window_ns *
         1e-9 * T;
}

}  // namespace tpi
