#pragma once

// Wavelength, envelope and bandwidth algebra for the two filtered detection arms.
//
// Units: center wavelengths in nm, path differences and envelope scales in um,
// angular frequencies in rad/s.

#include <numbers>

namespace tpi {

/// Exact SI value, m/s.
inline constexpr double kSpeedOfLight = 299'792'458.0;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Detection arm (interferometer output port). Arm one carries the dark fringe at zero delay.
enum class Arm : int { one = 1, two = 2 };

inline constexpr int arm_index(Arm arm) { return static_cast<int>(arm) - 1; }

/// Transmission filter in front of one detector, modeled by its center wavelength and the
/// scale of the Gaussian fringe envelope it produces, F(dx) = exp(-dx^2 / (2 sigma^2)).
class SpectralFilter {
 public:
  SpectralFilter(double center_wavelength_nm, double sigma_um, Arm label = Arm::one);

  double center_wavelength_nm() const { return center_wavelength_nm_; }
  double sigma_um() const { return sigma_um_; }
  Arm label() const { return label_; }

  /// 2 pi c / lambda, rad/s.
  double angular_frequency() const;
  /// Spectral bandwidth c / sigma, rad/s.
  double bandwidth() const;
  /// 1/e half-width of the envelope, sqrt(2) sigma, um.
  double coherence_length_um() const;

 private:
  double center_wavelength_nm_;
  double sigma_um_;
  Arm label_;
};

/// The two arms together, with their joint envelope scale and beat parameters cached.
class SpectralPair {
 public:
  SpectralPair(SpectralFilter f1, SpectralFilter f2);

  const SpectralFilter& f1() const { return f1_; }
  const SpectralFilter& f2() const { return f2_; }
  const SpectralFilter& filter(Arm arm) const { return arm == Arm::one ? f1_ : f2_; }

  /// sqrt(2 s1^2 s2^2 / (s1^2 + s2^2)), um. F1 F2 = exp(-dx^2 / sigma12^2).
  double sigma12_um() const { return sigma12_um_; }

  bool degenerate() const;
  /// Throws InvalidArgument when the two center wavelengths coincide.
  double beat_period_um() const;
  double delta_omega() const;

 private:
  SpectralFilter f1_;
  SpectralFilter f2_;
  double sigma12_um_;
};

double envelope(const SpectralFilter& filter, double delta_x_um);

/// F1(dx) F2(dx) evaluated through sigma12.
double joint_envelope(const SpectralPair& pair, double delta_x_um);

/// lambda1 lambda2 / |lambda1 - lambda2|, in um: the path period of cos(phi1 - phi2).
double beat_period(const SpectralFilter& f1, const SpectralFilter& f2);

/// 2 pi c |lambda1 - lambda2| / (lambda1 lambda2), rad/s.
double angular_frequency_difference(const SpectralFilter& f1, const SpectralFilter& f2);

/// lambda1 lambda2 / (lambda1 + lambda2), in um: period of the cos(phi1 + phi2) term.
double sum_frequency_period(const SpectralFilter& f1, const SpectralFilter& f2);

/// Center wavelength of a thin interference filter tilted by `tilt_angle_deg` from normal
/// incidence: lambda0 sqrt(1 - (sin(theta) / n_eff)^2).
double tilted_center_wavelength(double lambda0_nm, double tilt_angle_deg, double n_eff);

/// Inverse of tilted_center_wavelength with respect to n_eff.
double solve_effective_index(double lambda0_nm, double tilted_nm, double tilt_angle_deg);

/// 2 pi dx / lambda with dx in um and lambda in nm.
double phase(double lambda_nm, double delta_x_um);

}  // namespace tpi
