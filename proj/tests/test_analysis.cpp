#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "tpi/analysis.hpp"
#include "tpi/errors.hpp"
#include "tpi/fringe_model.hpp"

namespace tpi {
namespace {

constexpr double kSeconds = 60.0;

Series synth(const std::function<double(double)>& rate, double lo, double hi, double step) {
  Series s;
  const auto n = static_cast<int>(std::llround((hi - lo) / step));
  for (int i = 0; i <= n; ++i) {
    const double x = lo + step * i;
    const double y = rate(x) * kSeconds;
    s.push_back(x, y, std::sqrt(y));
  }
  return s;
}

// Path differences at whole multiples of the wavelength nearest a regular grid, so the fringe
// phase is zero at every sample and the envelope magnitude is seen directly.
Series synth_locked(const std::function<double(double)>& rate, double lambda_um, double reach,
                    double step) {
  Series s;
  const auto n = static_cast<int>(reach / step);
  for (int i = -n; i <= n; ++i) {
    const double x = std::round(i * step / lambda_um) * lambda_um;
    const double y = rate(x) * kSeconds;
    s.push_back(x, y, std::sqrt(y));
  }
  return s;
}

Series add_noise(Series s, std::uint32_t seed) {
  std::mt19937_64 gen(seed);
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::poisson_distribution<long long> d(s.y[i]);
    s.y[i] = static_cast<double>(d(gen));
    s.err[i] = std::sqrt(std::max(s.y[i], 1.0));
  }
  return s;
}

double rel(double a, double b) { return std::fabs(a - b) / std::fabs(b); }

TEST(Oscillation, NoiselessArmOneRoundTrip) {
  ExperimentConfig cfg;
  const auto s = synth([&](double x) { return spi_rate(Arm::one, cfg, x); }, -2, 2, 0.04);
  const auto r = fit_oscillation(s, 0.81063);
  EXPECT_LT(rel(r.visibility.value, 0.98), 5e-4);
  EXPECT_LT(rel(r.period_um.value, 0.81063), 5e-5);
  EXPECT_LT(rel(r.baseline, 3e5 * kSeconds), 1e-4);
  EXPECT_LT(r.visibility.stderr, 1e-4);
}

TEST(Oscillation, NoisyArmTwoWithinTwoPercent) {
  ExperimentConfig cfg;
  const auto s =
      add_noise(synth([&](double x) { return spi_rate(Arm::two, cfg, x); }, -2, 2, 0.04), 7);
  const auto r = fit_oscillation(s, 0.79844);
  EXPECT_NEAR(r.visibility.value, 0.90, 0.02);
  EXPECT_GT(r.visibility.stderr, 0.0);
}

TEST(Oscillation, FlatDataGivesZeroVisibilityAndKeepsPeriod) {
  Series s;
  for (int i = 0; i <= 100; ++i) s.push_back(-2 + 0.04 * i, 1.8e7, std::sqrt(1.8e7));
  const auto noisy = add_noise(s, 3);
  const auto r = fit_oscillation(noisy, 0.81063);
  EXPECT_LE(r.visibility.value, 3 * r.visibility.stderr);
  EXPECT_DOUBLE_EQ(r.period_um.value, 0.81063);
  EXPECT_FALSE(r.note.empty());
}

TEST(Oscillation, RejectsCoarseOrShortScans) {
  ExperimentConfig cfg;
  auto f = [&](double x) { return spi_rate(Arm::one, cfg, x); };
  EXPECT_THROW(fit_oscillation(synth(f, -2, 2, 0.1), 0.81063), FitError);
  EXPECT_THROW(fit_oscillation(synth(f, -0.5, 0.5, 0.04), 0.81063), FitError);
  EXPECT_THROW(fit_oscillation(synth(f, -2, 2, 0.04), -1.0), InvalidArgument);
}

TEST(SelfFringe, NoiselessRoundTrip) {
  ExperimentConfig cfg;
  const auto s = synth([&](double x) { return tpi_rate_self(Arm::one, cfg, x); }, -2, 2, 0.04);
  const auto r = fit_self_fringe(s, 0.81063);
  EXPECT_LT(rel(r.visibility.value, 0.98 * 0.98), 5e-3);
  EXPECT_LT(rel(r.param("s").value, 0.98), 5e-3);
  EXPECT_LT(rel(r.baseline, cfg.rc_self_inf_cps(Arm::one) * kSeconds), 5e-3);
}

TEST(SelfFringe, RejectsAliasedSampling) {
  ExperimentConfig cfg;
  const auto s = synth([&](double x) { return tpi_rate_self(Arm::one, cfg, x); }, -2, 2, 0.2);
  EXPECT_THROW(fit_self_fringe(s, 0.81063), FitError);
}

TEST(CrossFringe, RecoversSumPeriodProductAndAsymmetry) {
  ExperimentConfig cfg;
  const auto s = synth([&](double x) { return tpi_rate_cross(cfg, x); }, -2, 2, 0.04);
  const auto r = fit_cross_fringe(s, cfg.filters);
  const double P = 0.81063 * 0.79844 / (0.81063 + 0.79844);
  EXPECT_LT(rel(r.period_um.value, P), 1e-4);
  EXPECT_LT(rel(r.visibility.value, 0.882), 5e-3);
  EXPECT_NEAR(r.param("asymmetry").value, 0.08, 3 * r.param("asymmetry").stderr + 4e-4);
}

TEST(CrossFringe, EqualVisibilitiesGiveNoAsymmetry) {
  ExperimentConfig cfg;
  cfg.v1 = cfg.v2 = 0.9;
  const auto s =
      add_noise(synth([&](double x) { return tpi_rate_cross(cfg, x); }, -2, 2, 0.04), 11);
  const auto r = fit_cross_fringe(s, cfg.filters);
  const auto& asym = r.param("asymmetry");
  EXPECT_LE(std::fabs(asym.value), 3 * asym.stderr);
}

TEST(Envelope, SpiWidthsRoundTrip) {
  ExperimentConfig cfg;
  const auto s1 = synth_locked([&](double x) { return spi_rate(Arm::one, cfg, x); }, 0.81063,
                               800, 2);
  const auto r1 = fit_envelope(s1, EnvelopeKind::spi);
  EXPECT_LT(rel(r1.sigma_um.value, 171.69), 1e-3);
  EXPECT_LT(rel(r1.visibility.value, 0.98), 1e-3);
  EXPECT_LT(r1.param("a").value, 0.0);

  const auto s2 = synth_locked([&](double x) { return spi_rate(Arm::two, cfg, x); }, 0.79844,
                               800, 2);
  const auto r2 = fit_envelope(s2, EnvelopeKind::spi);
  EXPECT_LT(rel(r2.sigma_um.value, 84.53), 1e-3);
  EXPECT_LT(rel(r2.visibility.value, 0.90), 1e-3);
}

TEST(Envelope, SelfPeakRoundTrip) {
  ExperimentConfig cfg;
  const auto s = synth([&](double x) { return tpi_rate_randomized_self(Arm::two, cfg, x); },
                       -800, 800, 4);
  const auto r = fit_envelope(s, EnvelopeKind::self_peak);
  EXPECT_LT(rel(r.sigma_um.value, 84.53), 1e-3);
  EXPECT_LT(rel(r.param("a").value, 0.5 * 0.9 * 0.9), 1e-3);
}

TEST(Envelope, FlatAndNarrowScans) {
  Series flat;
  for (int i = -200; i <= 200; ++i) flat.push_back(4.0 * i, 1e6, 1e3);
  const auto r = fit_envelope(add_noise(flat, 5), EnvelopeKind::spi, 171.69);
  EXPECT_LE(r.visibility.value, 3 * r.visibility.stderr);

  ExperimentConfig cfg;
  const auto narrow = synth_locked([&](double x) { return spi_rate(Arm::one, cfg, x); }, 0.81063,
                                   300, 2);
  EXPECT_THROW(fit_envelope(narrow, EnvelopeKind::spi), FitError);
}

TEST(Beat, RecoversConfiguredPeriodAndAmplitude) {
  ExperimentConfig cfg;
  const auto s =
      synth([&](double x) { return tpi_rate_randomized_cross(cfg, x); }, -800, 800, 4);
  const auto r = fit_beat(s);
  EXPECT_LT(rel(r.period_um.value, 53.0959), 2e-3);
  EXPECT_LT(rel(r.visibility.value, 0.441), 5e-3);
  EXPECT_LT(rel(r.sigma_um.value, cfg.filters.sigma12_um()), 5e-3);
}

TEST(Beat, PeriodTimesFrequencyDifferenceIsTwoPiC) {
  ExperimentConfig cfg;
  const auto s = add_noise(
      synth([&](double x) { return tpi_rate_randomized_cross(cfg, x); }, -800, 800, 4), 19);
  const auto r = fit_beat(s);
  const double two_pi_c = kTwoPi * kSpeedOfLight;
  const double product = r.period_um.value * 1e-6 * cfg.filters.delta_omega();
  EXPECT_NEAR(product, two_pi_c, 3 * r.period_um.stderr * 1e-6 * cfg.filters.delta_omega());
}

TEST(Beat, NoSignalOrAliasedSamplingFails) {
  ExperimentConfig cfg;
  cfg.v1 = 0.0;
  const auto flat = add_noise(
      synth([&](double x) { return tpi_rate_randomized_cross(cfg, x); }, -800, 800, 4), 2);
  EXPECT_THROW(fit_beat(flat), FitError);

  ExperimentConfig paper;
  const auto coarse =
      synth([&](double x) { return tpi_rate_randomized_cross(paper, x); }, -800, 800, 20);
  EXPECT_THROW(fit_beat(coarse), FitError);
  const auto narrow =
      synth([&](double x) { return tpi_rate_randomized_cross(paper, x); }, -60, 60, 2);
  EXPECT_THROW(fit_beat(narrow), FitError);
}

TEST(ProductCheck, BeatAmplitudeMatchesHalfProduct) {
  FitResult spi1, spi2, beat;
  spi1.visibility = {0.98, 0.002};
  spi2.visibility = {0.90, 0.002};
  beat.kind = FitKind::beat;
  beat.visibility = {0.441, 0.003};
  const auto c = visibility_product_check(spi1, spi2, beat);
  EXPECT_NEAR(c.measured, 0.882, 1e-12);
  EXPECT_NEAR(c.expected, 0.882, 1e-12);
  EXPECT_TRUE(c.pass);

  beat.visibility = {0.40, 0.003};
  EXPECT_FALSE(visibility_product_check(spi1, spi2, beat).pass);

  FitResult self;
  self.kind = FitKind::tpi_self;
  self.visibility = {0.93, 0.01};
  const auto s = visibility_product_check(spi1, spi2, self);
  EXPECT_NEAR(s.expected, 0.9604, 1e-12);
  EXPECT_NEAR(s.z, (0.93 - 0.9604) / std::hypot(0.01, 2 * 0.98 * 0.002), 1e-12);
  self.visibility = {0.90, 0.005};
  EXPECT_FALSE(visibility_product_check(spi1, spi2, self).pass);

  spi1.visibility = spi2.visibility = {1.0, 0.0};
  beat.visibility = {0.5, 0.0};
  EXPECT_TRUE(visibility_product_check(spi1, spi2, beat).pass);
  EXPECT_THROW(visibility_product_check(spi1, spi2, spi1), InvalidArgument);
}

std::vector<ScanRow> rows_from(const ExperimentConfig& cfg, double gain) {
  std::vector<ScanRow> rows;
  for (int i = -200; i <= 200; ++i) {
    const double x = 4.0 * i;
    ScanRow r;
    r.delta_x_um = x;
    r.coinc_self1 = gain * tpi_rate_randomized_self(Arm::one, cfg, x) * kSeconds;
    r.duration_s = kSeconds;
    rows.push_back(r);
  }
  return rows;
}

TEST(Normalize, SelfPeakAndScaleInvariance) {
  ExperimentConfig cfg;
  cfg.v1 = 0.9;
  const double thr = baseline_threshold_um(cfg.filters);
  const auto s = normalize(rows_from(cfg, 1.0), Channel::self1, thr);
  const auto peak = std::max_element(s.y.begin(), s.y.end());
  // The arm-one envelope squared is still ~1e-6 at the inner baseline edge, 6 sigma12.
  EXPECT_NEAR(*peak, 1.405, 1e-6);
  const auto t = normalize(rows_from(cfg, 7.5), Channel::self1, thr);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s.y[i], t.y[i], 1e-14);
  EXPECT_THROW(normalize(rows_from(cfg, 1.0), Channel::self1, 1e4), InvalidArgument);
}

TEST(Report, CsvHeaderAndRows) {
  FitResult f;
  f.kind = FitKind::beat;
  f.visibility = {0.441, 0.001};
  f.period_um = {53.1, 0.1};
  f.params = {{"a", 0.441, 0.001}};
  const auto csv = fit_report_csv({f});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "kind,param,value,stderr");
  EXPECT_NE(csv.find("beat,a,0.441,0.001\n"), std::string::npos);
  EXPECT_NE(fit_summary(f).find("visibility 0.44100"), std::string::npos);
  EXPECT_THROW(f.param("missing"), InvalidArgument);
}

TEST(Channels, NamesRoundTrip) {
  for (auto c : {Channel::singles1, Channel::singles2, Channel::cross, Channel::self1,
                 Channel::self2}) {
    EXPECT_EQ(parse_channel(channel_name(c)), c);
  }
  EXPECT_THROW(parse_channel("bogus"), InvalidArgument);
}


TEST(Oscillation, KnownEnvelopeRemovesWindowBias) {
  ExperimentConfig cfg;
  cfg.filters = SpectralPair{SpectralFilter{810.63, 20.0}, SpectralFilter{798.44, 20.0, Arm::two}};
  Series s;
  for (double x = -2.0; x <= 2.0 + 1e-9; x += 0.04) {
    const double y = spi_rate(Arm::one, cfg, x) * 60.0;
    s.push_back(x, y, std::sqrt(y));
  }
  const auto plain = fit_oscillation(s, 0.81063);
  EXPECT_GT(std::abs(plain.visibility.value - 0.98), 1e-3);
  OscillationOptions opt;
  opt.envelope_sigma_um = 20.0;
  const auto r = fit_oscillation(s, 0.81063, opt);
  EXPECT_NEAR(r.visibility.value, 0.98, 1e-9);
  EXPECT_NEAR(r.period_um.value, 0.81063, 1e-9);
  opt.envelope_sigma_um = -1.0;
  EXPECT_THROW(fit_oscillation(s, 0.81063, opt), InvalidArgument);
}

TEST(SelfFringe, KnownEnvelopeRecoversSquareVisibility) {
  ExperimentConfig cfg;
  cfg.filters = SpectralPair{SpectralFilter{810.63, 20.0}, SpectralFilter{798.44, 20.0, Arm::two}};
  for (Arm arm : {Arm::one, Arm::two}) {
    Series s;
    for (double x = -2.0; x <= 2.0 + 1e-9; x += 0.04) {
      const double y = tpi_rate_self(arm, cfg, x) * 60.0;
      s.push_back(x, y, std::sqrt(std::max(y, 1.0)));
    }
    const double v = cfg.visibility(arm);
    const auto r = fit_self_fringe(s, cfg.filters.filter(arm).center_wavelength_nm() / 1e3, 20.0);
    EXPECT_NEAR(r.visibility.value, v * v, 1e-8);
    EXPECT_NEAR(r.param("s").value, v, 1e-8);
    EXPECT_NEAR(r.baseline, 900.0 * 60.0, 1e-4);
  }
}

TEST(Beat, DisplacedPatternRecoversCenter) {
  ExperimentConfig cfg;
  const auto s = synth([&](double x) { return tpi_rate_randomized_cross(cfg, x + 4.1); }, -800,
                       800, 2);
  const auto r = fit_beat(s, cfg.filters.sigma12_um());
  EXPECT_NEAR(r.param("x0_um").value, -4.1, 1e-6);
  EXPECT_LT(rel(r.period_um.value, 53.0959), 1e-6);
  EXPECT_LT(rel(r.visibility.value, 0.441), 1e-6);
}

TEST(Envelope, NoisyBaselineDoesNotInflateStartingWidth) {
  ExperimentConfig cfg;
  cfg.v1 = 0.90;
  const auto s = add_noise(
      synth([&](double x) { return tpi_rate_randomized_self(Arm::one, cfg, x) * 1e-2; }, -800,
            800, 2),
      23);
  const auto r = fit_envelope(s, EnvelopeKind::self_peak);
  EXPECT_NEAR(r.sigma_um.value, 171.69, 4 * r.sigma_um.stderr);
  EXPECT_NEAR(r.visibility.value, 0.405, 4 * r.visibility.stderr);
}

}  // namespace
}  // namespace tpi
