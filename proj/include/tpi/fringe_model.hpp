#pragma once

// Closed-form singles and coincidence rates of the two-output interferometer.
//
// Arm one is the port whose singles fringe is dark at zero path difference:
//   R1 = R1inf [1 - V1 cos(phi1) F1],   R2 = R2inf [1 + V2 cos(phi2) F2].
// Coincidences between uncorrelated photons are accidental, so every coincidence rate here is
// a product of singles rates times the resolving time, expanded into its phase terms.

#include <cstdint>
#include <optional>

#include "tpi/jitter.hpp"
#include "tpi/spectral.hpp"

namespace tpi {

struct ExperimentConfig {
  double v1 = 0.98;
  double v2 = 0.90;
  double r1_inf_cps = 3.0e5;
  double r2_inf_cps = 3.0e5;
  double resolving_time_ns = 10.0;
  double self_delay_ns = 60.0;
  double dead_time_ns = 22.0;
  /// Overrides the accidental identity R1inf R2inf T_R. Setting it breaks the factorization
  /// between coincidence and singles rates; it exists for what-if studies only.
  std::optional<double> rc_inf_override_cps;
  SpectralPair filters{SpectralFilter{810.63, 171.69, Arm::one},
                       SpectralFilter{798.44, 84.53, Arm::two}};
  JitterSpec jitter;
  /// Tilt of filter two; recorded for provenance, filters already hold the tilted center.
  double tilt_angle_deg = 0.0;
  double n_eff = 2.0;
  std::uint64_t seed = 1;

  double visibility(Arm arm) const { return arm == Arm::one ? v1 : v2; }
  double r_inf_cps(Arm arm) const { return arm == Arm::one ? r1_inf_cps : r2_inf_cps; }

  /// Baseline cross-coincidence rate, R1inf R2inf T_R unless overridden.
  double rc_inf_cps() const;
  /// Baseline self-delayed coincidence rate of one arm, Rinf^2 T_R.
  double rc_self_inf_cps(Arm arm) const;

  /// Throws InvalidArgument naming the first violated invariant.
  void validate() const;
};

/// One analytic evaluation of every channel at a path difference.
struct RateSample {
  double delta_x_um = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
  double rc_cross = 0.0;
  double rc_self1 = 0.0;
  double rc_self2 = 0.0;
};

double spi_rate(Arm arm, const ExperimentConfig& cfg, double delta_x_um);

double tpi_rate_cross(const ExperimentConfig& cfg, double delta_x_um);

/// Cross coincidences for identical filters; throws InvalidArgument otherwise.
double tpi_rate_degenerate(const ExperimentConfig& cfg, double delta_x_um);

/// Delayed self-coincidences of one detector.
double tpi_rate_self(Arm arm, const ExperimentConfig& cfg, double delta_x_um);

/// Cross coincidences after averaging the common phase away: only the beat term survives.
double tpi_rate_randomized_cross(const ExperimentConfig& cfg, double delta_x_um);

/// Self-coincidence peak after phase averaging, Rc,inf [1 + V^2 F^2 / 2].
double tpi_rate_randomized_self(Arm arm, const ExperimentConfig& cfg, double delta_x_um);

/// Phase-averaged singles rate, which is flat at the arm's baseline.
double spi_rate_randomized(Arm arm, const ExperimentConfig& cfg, double delta_x_um);

/// r1 r2 T_R with T_R in ns.
double accidental_rate(double r1_cps, double r2_cps, double resolving_time_ns);

RateSample rate_sample(const ExperimentConfig& cfg, double delta_x_um, bool randomized);

}  // namespace tpi
