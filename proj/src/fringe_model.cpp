#include "tpi/fringe_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tpi/errors.hpp"

namespace tpi {

namespace {

constexpr double kNsToS = 1e-9;

bool in_unit_interval(double v) { return v >= 0.0 && v <= 1.0; }

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

// Singles sign: arm one carries -cos, arm two +cos.
double port_sign(Arm arm) { return arm == Arm::one ? -1.0 : 1.0; }

// Phase reduced to whole-cycle remainder in [-pi, pi]; sums of two such phases then carry no
// rounding from the thousands of radians a long scan accumulates.
double reduced_phase(const SpectralFilter& f, double delta_x_um) {
  const double cycles = delta_x_um * 1e3 / f.center_wavelength_nm();
  return kTwoPi * (cycles - std::nearbyint(cycles));
}

}  // namespace

void JitterSpec::validate(const SpectralPair& filters) const {
  require(amplitude_um >= 0.0 && std::isfinite(amplitude_um), "jitter_amplitude_um must be >= 0");
  require(dwell_time_us > 0.0 && std::isfinite(dwell_time_us), "jitter_dwell_us must be > 0");
  if (!enabled) return;
  const double lambda_max_um =
      std::max(filters.f1().center_wavelength_nm(), filters.f2().center_wavelength_nm()) / 1e3;
  require(amplitude_um >= 10.0 * lambda_max_um,
          "jitter_amplitude_um must be >= 10 max(lambda) = " + std::to_string(10.0 * lambda_max_um) +
              " um to randomize the phase");
  if (!filters.degenerate()) {
    const double limit = filters.beat_period_um() / 5.0;
    require(amplitude_um <= limit, "jitter_amplitude_um must be <= beat_period / 5 = " +
                                       std::to_string(limit) + " um to preserve the beat");
  }
}

double ExperimentConfig::rc_inf_cps() const {
  if (rc_inf_override_cps) return *rc_inf_override_cps;
  return accidental_rate(r1_inf_cps, r2_inf_cps, resolving_time_ns);
}

double ExperimentConfig::rc_self_inf_cps(Arm arm) const {
  const double r = r_inf_cps(arm);
  return accidental_rate(r, r, resolving_time_ns);
}

void ExperimentConfig::validate() const {
  require(in_unit_interval(v1), "v1 must be in [0,1]");
  require(in_unit_interval(v2), "v2 must be in [0,1]");
  require(r1_inf_cps >= 0.0 && std::isfinite(r1_inf_cps), "r1_inf_cps must be >= 0");
  require(r2_inf_cps >= 0.0 && std::isfinite(r2_inf_cps), "r2_inf_cps must be >= 0");
  require(resolving_time_ns > 0.0 && std::isfinite(resolving_time_ns),
          "resolving_time_ns must be > 0");
  require(dead_time_ns >= 0.0 && std::isfinite(dead_time_ns), "dead_time_ns must be >= 0");
  require(self_delay_ns > dead_time_ns, "self_delay_ns must exceed dead_time_ns");
  require(self_delay_ns > resolving_time_ns / 2.0,
          "self_delay_ns must exceed half the resolving time");
  if (rc_inf_override_cps) {
    require(*rc_inf_override_cps >= 0.0, "rc_inf override must be >= 0");
  }
  require(tilt_angle_deg >= 0.0 && tilt_angle_deg < 90.0, "tilt_angle_deg must be in [0,90)");
  require(n_eff >= 1.0, "n_eff must be >= 1");
  jitter.validate(filters);
}

double spi_rate(Arm arm, const ExperimentConfig& cfg, double delta_x_um) {
  const SpectralFilter& f = cfg.filters.filter(arm);
  const double term =
      cfg.visibility(arm) * std::cos(reduced_phase(f, delta_x_um)) *
      envelope(f, delta_x_um);
  return cfg.r_inf_cps(arm) * (1.0 + port_sign(arm) * term);
}

double tpi_rate_cross(const ExperimentConfig& cfg, double delta_x_um) {
  const SpectralFilter& f1 = cfg.filters.f1();
  const SpectralFilter& f2 = cfg.filters.f2();
  const double phi1 = reduced_phase(f1, delta_x_um);
  const double phi2 = reduced_phase(f2, delta_x_um);
  const double e1 = envelope(f1, delta_x_um);
  const double e2 = envelope(f2, delta_x_um);
  const double bracket = 1.0 - cfg.v1 * std::cos(phi1) * e1 + cfg.v2 * std::cos(phi2) * e2 -
                         0.5 * cfg.v1 * cfg.v2 * (std::cos(phi1 + phi2) + std::cos(phi1 - phi2)) *
                             e1 * e2;
  return cfg.rc_inf_cps() * bracket;
}

double tpi_rate_degenerate(const ExperimentConfig& cfg, double delta_x_um) {
  const SpectralFilter& f1 = cfg.filters.f1();
  const SpectralFilter& f2 = cfg.filters.f2();
  if (f1.center_wavelength_nm() != f2.center_wavelength_nm() || f1.sigma_um() != f2.sigma_um()) {
    throw InvalidArgument("degenerate coincidence rate needs identical filters");
  }
  const double phi = reduced_phase(f1, delta_x_um);
  const double e = envelope(f1, delta_x_um);
  const double bracket = 1.0 - (cfg.v1 - cfg.v2) * std::cos(phi) * e -
                         0.5 * cfg.v1 * cfg.v2 * (1.0 + std::cos(2.0 * phi)) * e * e;
  return cfg.rc_inf_cps() * bracket;
}

double tpi_rate_self(Arm arm, const ExperimentConfig& cfg, double delta_x_um) {
  const SpectralFilter& f = cfg.filters.filter(arm);
  const double v = cfg.visibility(arm);
  const double phi = reduced_phase(f, delta_x_um);
  const double e = envelope(f, delta_x_um);
  const double bracket = 1.0 + port_sign(arm) * 2.0 * v * std::cos(phi) * e +
                         0.5 * v * v * (1.0 + std::cos(2.0 * phi)) * e * e;
  return cfg.rc_self_inf_cps(arm) * bracket;
}

double tpi_rate_randomized_cross(const ExperimentConfig& cfg, double delta_x_um) {
  const SpectralFilter& f1 = cfg.filters.f1();
  const SpectralFilter& f2 = cfg.filters.f2();
  const double dphi = reduced_phase(f1, delta_x_um) - reduced_phase(f2, delta_x_um);
  const double bracket = 1.0 - 0.5 * cfg.v1 * cfg.v2 * std::cos(dphi) *
                                   envelope(f1, delta_x_um) * envelope(f2, delta_x_um);
  return cfg.rc_inf_cps() * bracket;
}

double tpi_rate_randomized_self(Arm arm, const ExperimentConfig& cfg, double delta_x_um) {
  const SpectralFilter& f = cfg.filters.filter(arm);
  const double v = cfg.visibility(arm);
  const double e = envelope(f, delta_x_um);
  return cfg.rc_self_inf_cps(arm) * (1.0 + 0.5 * v * v * e * e);
}

double spi_rate_randomized(Arm arm, const ExperimentConfig& cfg, double /*delta_x_um*/) {
  return cfg.r_inf_cps(arm);
}

double accidental_rate(double r1_cps, double r2_cps, double resolving_time_ns) {
  if (r1_cps < 0.0 || r2_cps < 0.0 || resolving_time_ns < 0.0) {
    throw InvalidArgument("accidental rate inputs must be >= 0");
  }
  return r1_cps * r2_cps * resolving_time_ns * kNsToS;
}

RateSample rate_sample(const ExperimentConfig& cfg, double delta_x_um, bool randomized) {
  RateSample s;
  s.delta_x_um = delta_x_um;
  if (randomized) {
    s.r1 = spi_rate_randomized(Arm::one, cfg, delta_x_um);
    s.r2 = spi_rate_randomized(Arm::two, cfg, delta_x_um);
    s.rc_cross = tpi_rate_randomized_cross(cfg, delta_x_um);
    s.rc_self1 = tpi_rate_randomized_self(Arm::one, cfg, delta_x_um);
    s.rc_self2 = tpi_rate_randomized_self(Arm::two, cfg, delta_x_um);
  } else {
    s.r1 = spi_rate(Arm::one, cfg, delta_x_um);
    s.r2 = spi_rate(Arm::two, cfg, delta_x_um);
    s.rc_cross = tpi_rate_cross(cfg, delta_x_um);
    s.rc_self1 = tpi_rate_self(Arm::one, cfg, delta_x_um);
    s.rc_self2 = tpi_rate_self(Arm::two, cfg, delta_x_um);
  }
  return s;
}

}  // namespace tpi
