#include "tpi/spectral.hpp"

#include <cmath>
#include <string>

#include "tpi/errors.hpp"

namespace tpi {

namespace {

constexpr double kNmPerUm = 1e3;

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

SpectralFilter::SpectralFilter(double center_wavelength_nm, double sigma_um, Arm label)
    : center_wavelength_nm_(center_wavelength_nm), sigma_um_(sigma_um), label_(label) {
  if (!(center_wavelength_nm > 0.0) || !std::isfinite(center_wavelength_nm)) {
    throw InvalidArgument("center wavelength must be positive, got " +
                          std::to_string(center_wavelength_nm) + " nm");
  }
  if (!(sigma_um > 0.0) || !std::isfinite(sigma_um)) {
    throw InvalidArgument("envelope sigma must be positive, got " + std::to_string(sigma_um) +
                          " um");
  }
}

double SpectralFilter::angular_frequency() const {
  return kTwoPi * kSpeedOfLight / (center_wavelength_nm_ * 1e-9);
}

double SpectralFilter::bandwidth() const { return kSpeedOfLight / (sigma_um_ * 1e-6); }

double SpectralFilter::coherence_length_um() const { return std::numbers::sqrt2 * sigma_um_; }

SpectralPair::SpectralPair(SpectralFilter f1, SpectralFilter f2) : f1_(f1), f2_(f2) {
  const double s1 = f1_.sigma_um() * f1_.sigma_um();
  const double s2 = f2_.sigma_um() * f2_.sigma_um();
  sigma12_um_ = std::sqrt(2.0 * s1 * s2 / (s1 + s2));
}

bool SpectralPair::degenerate() const {
  return f1_.center_wavelength_nm() == f2_.center_wavelength_nm();
}

double SpectralPair::beat_period_um() const { return beat_period(f1_, f2_); }

double SpectralPair::delta_omega() const { return angular_frequency_difference(f1_, f2_); }

double envelope(const SpectralFilter& filter, double delta_x_um) {
  const double s = filter.sigma_um();
  return std::exp(-(delta_x_um * delta_x_um) / (2.0 * s * s));
}

double joint_envelope(const SpectralPair& pair, double delta_x_um) {
  const double s = pair.sigma12_um();
  return std::exp(-(delta_x_um * delta_x_um) / (s * s));
}

double beat_period(const SpectralFilter& f1, const SpectralFilter& f2) {
  const double l1 = f1.center_wavelength_nm();
  const double l2 = f2.center_wavelength_nm();
  if (l1 == l2) {
    throw InvalidArgument("beat period undefined for degenerate wavelengths (" +
                          std::to_string(l1) + " nm)");
  }
  return l1 * l2 / std::abs(l1 - l2) / kNmPerUm;
}

double angular_frequency_difference(const SpectralFilter& f1, const SpectralFilter& f2) {
  return kTwoPi * kSpeedOfLight / (beat_period(f1, f2) * 1e-6);
}

double sum_frequency_period(const SpectralFilter& f1, const SpectralFilter& f2) {
  const double l1 = f1.center_wavelength_nm();
  const double l2 = f2.center_wavelength_nm();
  return l1 * l2 / (l1 + l2) / kNmPerUm;
}

double tilted_center_wavelength(double lambda0_nm, double tilt_angle_deg, double n_eff) {
  if (!(tilt_angle_deg >= 0.0 && tilt_angle_deg < 90.0)) {
    throw InvalidArgument("tilt angle must be in [0, 90) degrees, got " +
                          std::to_string(tilt_angle_deg));
  }
  if (!(n_eff >= 1.0)) {
    throw InvalidArgument("effective index must be >= 1, got " + std::to_string(n_eff));
  }
  if (!(lambda0_nm > 0.0)) {
    throw InvalidArgument("center wavelength must be positive");
  }
  const double r = std::sin(deg_to_rad(tilt_angle_deg)) / n_eff;
  return lambda0_nm * std::sqrt(1.0 - r * r);
}

double solve_effective_index(double lambda0_nm, double tilted_nm, double tilt_angle_deg) {
  if (!(tilt_angle_deg > 0.0 && tilt_angle_deg < 90.0)) {
    throw InvalidArgument("effective index needs a tilt angle in (0, 90) degrees");
  }
  if (!(tilted_nm > 0.0 && tilted_nm < lambda0_nm)) {
    throw InvalidArgument("tilted wavelength must lie strictly below the normal-incidence one");
  }
  const double ratio = tilted_nm / lambda0_nm;
  return std::sin(deg_to_rad(tilt_angle_deg)) / std::sqrt(1.0 - ratio * ratio);
}

double phase(double lambda_nm, double delta_x_um) {
  return kTwoPi * delta_x_um * kNmPerUm / lambda_nm;
}

}  // namespace tpi
