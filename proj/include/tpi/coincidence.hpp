#pragma once

// Coincidence counting over sorted timestamp streams.
//
// Matching is greedy and earliest-first: walking both streams in time order, an event pairs with
// the earliest unmatched partner inside the closed window |tb - ta| <= window/2, and each event
// joins at most one pair. Self-delayed counting matches a stream against a copy of itself
// shifted by the delay, so one event can serve once as the early and once as the late partner.

#include <cstdint>
#include <span>
#include <string>

#include "tpi/event_sim.hpp"

namespace tpi {

struct CoincidenceResult {
  std::uint64_t pair_count = 0;
  double window_ns = 0.0;
  double delay_ns = 0.0;  // 0 for cross coincidences
  std::size_t events_a = 0;
  std::size_t events_b = 0;
  double rate_cps = 0.0;  // pair_count / duration
  std::string warning;    // non-empty when the request was physically doubtful
};

/// Half window in ps for a full window in ns; throws InvalidArgument unless window > 0.
Picoseconds half_window_ps(double window_ns);

/// Number of greedy pairs between `a` and `b` shifted by `offset_b`, with |tb + offset - ta| <=
/// half_window. Inputs must be non-decreasing (InvalidArgument otherwise). Linear time.
std::uint64_t count_pairs(std::span<const Picoseconds> a, std::span<const Picoseconds> b,
                          Picoseconds half_window, Picoseconds offset_b = 0);

/// Plain two-pointer form of count_pairs, kept as the in-library reference.
std::uint64_t count_pairs_two_pointer(std::span<const Picoseconds> a,
                                      std::span<const Picoseconds> b, Picoseconds half_window,
                                      Picoseconds offset_b = 0);

/// Cross-detector coincidences. Throws InvalidArgument when the durations differ.
CoincidenceResult count_cross(const EventStream& a, const EventStream& b, double window_ns);

/// Delayed self-coincidences: pairs i < j with t_j - t_i in [delay - w/2, delay + w/2].
/// With dead_time_ns >= delay_ns the result carries a warning, since dead time then forbids
/// every pair. Throws InvalidArgument for delay <= window/2 (the shifted copy would overlap
/// the event itself).
CoincidenceResult count_self_delayed(const EventStream& a, double delay_ns, double window_ns,
                                     double dead_time_ns = 0.0);

/// (|a|/T)(|b|/T) window T, the accidental expectation for the observed singles.
double expected_accidentals(const EventStream& a, const EventStream& b, double window_ns);

}  // namespace tpi
