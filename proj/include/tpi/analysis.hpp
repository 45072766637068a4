#pragma once

// Normalization and least-squares fitting of scan data.
//
// Fits weight each point by its Poisson error and scale the covariance by the reduced
// chi-square. Models:
//   oscillation   b [1 + v cos(2 pi x / p + phi)]
//   self fringe   b [1 + 2 s cos(th) + q/2 (1 + cos 2 th)],      th = 2 pi (x - x0) / lambda
//   cross fringe  b [1 - s1 cos(ph1) F1 + s2 cos(ph2) F2 - q/2 (cos(2 pi (x - x0) / P)
//                    + cos(ph1 - ph2)) F1 F2]
//   envelope      b [1 + a exp(-x^2 / (2 sigma^2))]   (spi)
//                 b [1 + a exp(-x^2 / sigma^2)]       (self peak)
//   beat          b [1 - a cos(2 pi x / L) exp(-x^2 / s12^2)]

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tpi/fringe_model.hpp"

namespace tpi {

struct ScanRow {
  double delta_x_um = 0.0;
  double singles1 = 0.0;
  double singles2 = 0.0;
  double coinc_cross = 0.0;
  double coinc_self1 = 0.0;
  double coinc_self2 = 0.0;
  double duration_s = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const ScanRow&, const ScanRow&) = default;
};

enum class Channel { singles1, singles2, cross, self1, self2 };

const char* channel_name(Channel channel);
/// Accepts singles1, singles2, cross, self1, self2; throws InvalidArgument otherwise.
Channel parse_channel(const std::string& name);
double channel_value(const ScanRow& row, Channel channel);

/// Points with one-sigma errors, sorted by x.
struct Series {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;

  std::size_t size() const { return x.size(); }
  void push_back(double xi, double yi, double ei) {
    x.push_back(xi);
    y.push_back(yi);
    err.push_back(ei);
  }
};

/// Raw counts of one channel with sqrt(N) errors.
Series counts(const std::vector<ScanRow>& rows, Channel channel);

/// Divides a channel by the mean over the baseline region |x| >= baseline_threshold_um.
/// Errors are sqrt(N) scaled the same way. Throws InvalidArgument when no row lies in the
/// baseline region or the baseline mean is not positive.
Series normalize(const std::vector<ScanRow>& rows, Channel channel, double baseline_threshold_um);

/// Baseline threshold used across the toolkit, 6 sigma12.
double baseline_threshold_um(const SpectralPair& filters);

/// Restricts a series to lo <= x <= hi.
Series window(const Series& s, double lo, double hi);

enum class FitKind { spi, tpi_cross, tpi_self, beat, envelope };

const char* fit_kind_name(FitKind kind);

struct Estimate {
  double value = 0.0;
  double stderr = 0.0;
};

struct FitParam {
  std::string name;
  double value = 0.0;
  double stderr = 0.0;
};

struct FitResult {
  FitKind kind = FitKind::spi;
  Estimate visibility;
  Estimate sigma_um;
  Estimate period_um;
  double baseline = 0.0;
  std::vector<FitParam> params;
  double chi2_red = 0.0;
  int dof = 0;
  std::string note;

  /// Named parameter; throws InvalidArgument if absent.
  const FitParam& param(const std::string& name) const;
};

struct OscillationOptions {
  /// Keep the period at the hint instead of fitting it.
  bool fix_period = false;
  /// Known envelope scale: the model becomes b [1 + v cos(2 pi x / p + phi) F(x)] with
  /// F(x) = exp(-x^2 / (2 sigma^2)), so v is the visibility at x = 0.
  std::optional<double> envelope_sigma_um;
};

/// Single-frequency fringe fit. Requires >= 10 samples per period and a span of >= 2 periods
/// (FitError otherwise). When the amplitude is not significant the period cannot be
/// identified and stays at the hint; the note says so.
FitResult fit_oscillation(const Series& data, double expected_period_um,
                          OscillationOptions options = {});

/// Delayed self-coincidence fringe near zero path difference with the wavelength known.
/// visibility = q, which is V^2 for an ideal fringe.
/// With a known envelope scale the harmonics carry F and F^2, F(x) = exp(-x^2 / (2 sigma^2)),
/// so q is the value at x = 0.
FitResult fit_self_fringe(const Series& data, double wavelength_um,
                          std::optional<double> envelope_sigma_um = std::nullopt);

/// Phase-resolved cross fringe near zero path difference. The arm wavelengths and widths
/// are taken from `filters`; the sum-frequency period P is free. visibility = q (V1 V2), and
/// the `asymmetry` parameter is s1 - s2 (V1 - V2).
FitResult fit_cross_fringe(const Series& data, const SpectralPair& filters);

enum class EnvelopeKind { spi, self_peak };

/// Gaussian envelope about x = 0. visibility = |a|. Throws FitError when the scan does not
/// reach +-3 sigma. Flat data keep sigma at `sigma_hint_um` (or a quarter of the span) and
/// report an amplitude consistent with zero.
FitResult fit_envelope(const Series& data, EnvelopeKind kind,
                       std::optional<double> sigma_hint_um = std::nullopt);

/// Beat fringe of the randomized cross scan with a free center x0_um. visibility = a (V1 V2 / 2). Throws FitError on
/// fewer than 4 samples per period (aliasing), on a span under 3 periods or fewer than 12
/// samples per period, and when no significant oscillation is present.
FitResult fit_beat(const Series& data, std::optional<double> sigma12_hint_um = std::nullopt);

struct ProductCheck {
  double measured = 0.0;
  double expected = 0.0;
  double stderr = 0.0;
  double z = 0.0;
  bool pass = false;
  std::string summary;
};

/// Compares a two-photon fit against the product of single-photon visibilities: V1 V2 for
/// cross fits (beat amplitudes are doubled first), spi1.V^2 for self fits (self-peak envelope
/// amplitudes are doubled first; spi2 is ignored). Passes at 3 combined standard errors, with
/// the combined error floored at 1e-7 for noise-free data.
ProductCheck visibility_product_check(const FitResult& spi1, const FitResult& spi2,
                                      const FitResult& tpi);

/// Fit report rows in the `kind,param,value,stderr` format, header included. With labels (one
/// per fit) each param is written as `label.param`.
std::string fit_report_csv(const std::vector<FitResult>& fits,
                           const std::vector<std::string>& labels = {});

/// One human-readable line per fit.
std::string fit_summary(const FitResult& fit);

}  // namespace tpi
