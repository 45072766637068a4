#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <random>
#include <vector>

#include "tpi/coincidence.hpp"
#include "tpi/errors.hpp"

using namespace tpi;

namespace {

// For each a in time order, take the earliest unmatched b within the closed window.
std::uint64_t brute_force_greedy(const std::vector<Picoseconds>& a,
                                 const std::vector<Picoseconds>& b, Picoseconds h,
                                 Picoseconds off = 0) {
  std::vector<bool> used(b.size(), false);
  std::uint64_t pairs = 0;
  for (Picoseconds ta : a) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const Picoseconds d = b[j] + off - ta;
      if (!used[j] && d >= -h && d <= h) {
        used[j] = true;
        ++pairs;
        break;
      }
    }
  }
  return pairs;
}

std::vector<Picoseconds> random_times(std::mt19937_64& gen, std::size_t n, Picoseconds span,
                                      bool strict) {
  std::uniform_int_distribution<Picoseconds> dist(0, span);
  std::vector<Picoseconds> t(n);
  for (auto& x : t) x = dist(gen);
  std::sort(t.begin(), t.end());
  if (strict) t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

EventStream stream(Arm arm, std::vector<Picoseconds> t, double duration_s = 1.0) {
  return EventStream::from_timestamps(arm, std::move(t), duration_s);
}

}  // namespace

TEST(Coincidence, BothEmpty) {
  const auto r = count_cross(stream(Arm::one, {}), stream(Arm::two, {}), 10.0);
  EXPECT_EQ(r.pair_count, 0u);
  EXPECT_EQ(r.events_a, 0u);
}

TEST(Coincidence, WindowBoundaryIsClosed) {
  const auto a = stream(Arm::one, {100'000});
  const auto b = stream(Arm::two, {104'000});
  EXPECT_EQ(count_cross(a, b, 10.0).pair_count, 1u);
  EXPECT_EQ(count_cross(a, b, 8.0).pair_count, 1u);  // |dt| = 4 <= 4
  EXPECT_EQ(count_cross(a, b, 6.0).pair_count, 0u);
}

TEST(Coincidence, SelfDelayedExamples) {
  EXPECT_EQ(count_self_delayed(stream(Arm::one, {0, 60'000}), 60.0, 10.0).pair_count, 1u);
  EXPECT_EQ(count_self_delayed(stream(Arm::one, {0, 30'000}), 60.0, 10.0).pair_count, 0u);
}

TEST(Coincidence, MatchesBruteForceOracle) {
  std::mt19937_64 gen(2024);
  for (int seed = 0; seed < 100; ++seed) {
    std::uniform_int_distribution<std::size_t> nd(0, 1000);
    // Spans from very dense (most events overlap) to sparse, crossing chunk boundaries.
    const Picoseconds spans[] = {20'000, 2'000'000, 200'000'000, 5'000'000'000LL};
    const Picoseconds span = spans[seed % 4];
    const auto a = random_times(gen, nd(gen), span, seed % 2 == 0);
    const auto b = random_times(gen, nd(gen), span, seed % 2 == 0);
    for (Picoseconds h : {Picoseconds{0}, Picoseconds{1000}, Picoseconds{5000}, Picoseconds{8191}, Picoseconds{8192}, Picoseconds{16000}}) {
      const auto expected = brute_force_greedy(a, b, h);
      ASSERT_EQ(count_pairs(a, b, h), expected) << "seed " << seed << " h " << h;
      ASSERT_EQ(count_pairs_two_pointer(a, b, h), expected) << "seed " << seed << " h " << h;
    }
  }
}

TEST(Coincidence, SelfDelayedEqualsShiftedCross) {
  std::mt19937_64 gen(7);
  for (int seed = 0; seed < 100; ++seed) {
    const Picoseconds span = seed % 2 ? 50'000'000 : 3'000'000;
    const auto a = random_times(gen, 800, span, true);
    std::vector<Picoseconds> shifted(a);
    for (auto& t : shifted) t += 60'000;
    const auto s = stream(Arm::one, a, 1e-3);
    const auto via_cross = brute_force_greedy(a, shifted, 5000);
    ASSERT_EQ(count_self_delayed(s, 60.0, 10.0).pair_count, via_cross) << seed;
    ASSERT_EQ(count_pairs(a, a, 5000, 60'000), via_cross) << seed;
  }
}

TEST(Coincidence, SelfDelayedMatchesOracleAcrossDelaysAndWindows) {
  std::mt19937_64 gen(23);
  for (int seed = 0; seed < 100; ++seed) {
    const Picoseconds span = (seed % 3 == 0) ? 400'000 : (seed % 3 == 1 ? 3'000'000 : 40'000'000);
    const auto a = random_times(gen, 1000, span, true);
    const auto s = stream(Arm::one, a, 1e-3);
    for (const auto& [delay_ns, window_ns] :
         {std::pair{6.0, 10.0}, std::pair{60.0, 10.0}, std::pair{20.0, 39.0}, std::pair{1.0, 0.5}}) {
      const Picoseconds h = half_window_ps(window_ns);
      const auto delay = static_cast<Picoseconds>(delay_ns * 1000);
      std::vector<Picoseconds> shifted(a);
      for (auto& t : shifted) t += delay;
      ASSERT_EQ(count_self_delayed(s, delay_ns, window_ns).pair_count,
                brute_force_greedy(a, shifted, h))
          << seed << ' ' << delay_ns << ' ' << window_ns;
    }
  }
}

TEST(Coincidence, SymmetricAndMonotone) {
  std::mt19937_64 gen(99);
  for (int seed = 0; seed < 50; ++seed) {
    const auto a = random_times(gen, 5000, 100'000'000, true);
    const auto b = random_times(gen, 5000, 100'000'000, true);
    std::uint64_t prev = 0;
    for (Picoseconds h : {0, 500, 1000, 2500, 5000, 8000, 12000}) {
      const auto ab = count_pairs(a, b, h);
      ASSERT_EQ(ab, count_pairs(b, a, h));
      ASSERT_GE(ab, prev);
      ASSERT_LE(ab, std::min(a.size(), b.size()));
      prev = ab;
    }
  }
}

TEST(Coincidence, FilteredAgreesWithTwoPointerOnLargeStreams) {
  std::mt19937_64 gen(5);
  for (double rate : {3e5, 3e7}) {
    const auto n = static_cast<std::size_t>(rate * 0.05);
    const auto a = random_times(gen, n, 50'000'000'000LL, true);
    const auto b = random_times(gen, n, 50'000'000'000LL, true);
    EXPECT_EQ(count_pairs(a, b, 5000), count_pairs_two_pointer(a, b, 5000));
    EXPECT_EQ(count_pairs(a, a, 5000, 60'000), count_pairs_two_pointer(a, a, 5000, 60'000));
  }
}

TEST(Coincidence, AccidentalsFromUniformStreams) {
  std::mt19937_64 gen(11);
  int within = 0;
  for (int seed = 0; seed < 50; ++seed) {
    const double T = 1.0;
    const auto a = random_times(gen, 300'000, 1'000'000'000'000LL, true);
    const auto b = random_times(gen, 300'000, 1'000'000'000'000LL, true);
    const auto sa = stream(Arm::one, a, T);
    const auto sb = stream(Arm::two, b, T);
    const double expected = expected_accidentals(sa, sb, 10.0);
    const double measured = static_cast<double>(count_cross(sa, sb, 10.0).pair_count);
    within += std::abs(measured - expected) <= 4.0 * std::sqrt(expected);
  }
  EXPECT_EQ(within, 50);
}

TEST(Coincidence, ExpectedAccidentalsArithmetic) {
  EXPECT_DOUBLE_EQ(expected_accidentals(stream(Arm::one, {}, 60.0), stream(Arm::two, {1}, 60.0), 10.0),
                   0.0);
  // 1.8e7 events per stream over 60 s: 3e5 cps each, 900 cps accidentals, 54 000 pairs.
  const double r = 1.8e7 / 60.0;
  EXPECT_NEAR(r * r * 10e-9 * 60.0, 54'000.0, 1e-6);
}

TEST(Coincidence, Errors) {
  const std::vector<Picoseconds> unsorted{5, 3};
  const std::vector<Picoseconds> ok{1, 2};
  EXPECT_THROW(count_pairs(unsorted, ok, 10), InvalidArgument);
  EXPECT_THROW(count_pairs(ok, unsorted, 10), InvalidArgument);
  EXPECT_THROW(count_cross(stream(Arm::one, {}, 1.0), stream(Arm::two, {}, 2.0), 10.0),
               InvalidArgument);
  EXPECT_THROW(count_cross(stream(Arm::one, {}), stream(Arm::two, {}), 0.0), InvalidArgument);
  EXPECT_THROW(count_self_delayed(stream(Arm::one, {}), 4.0, 10.0), InvalidArgument);
  const auto r = count_self_delayed(stream(Arm::one, {}), 20.0, 10.0, 22.0);
  EXPECT_FALSE(r.warning.empty());
  EXPECT_TRUE(count_self_delayed(stream(Arm::one, {}), 60.0, 10.0, 22.0).warning.empty());
}

TEST(Coincidence, TenMillionEventStreamsAreFast) {
  std::mt19937_64 gen(3);
  const auto a = random_times(gen, 10'000'000, 33'000'000'000'000LL, true);
  const auto b = random_times(gen, 10'000'000, 33'000'000'000'000LL, true);
  const auto t0 = std::chrono::steady_clock::now();
  const auto pairs = count_pairs(a, b, 5000);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_GT(pairs, 0u);
  EXPECT_LT(elapsed, 10.0);
  std::printf("10^7 + 10^7 events: %.3f s\n", elapsed);
}
