#pragma once

// Scan orchestration: configuration text, scan plans, analytic and Monte Carlo scans, scan CSV
// and the figure datasets.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tpi/analysis.hpp"
#include "tpi/fringe_model.hpp"

namespace tpi {

/// Flat `key = value` text with `#` comments. Keys: lambda1_nm, lambda2_nm, sigma1_um,
/// sigma2_um, v1, v2, r1_inf_cps, r2_inf_cps, resolving_time_ns, self_delay_ns, dead_time_ns,
/// jitter_amplitude_um, jitter_dwell_us, tilt_angle_deg, n_eff. Missing keys keep the
/// ExperimentConfig defaults. lambda2_nm is the effective center of filter two; when the file
/// sets tilt_angle_deg but not lambda2_nm, filter two is filter one tilted by that angle.
/// Throws ConfigError with the line number on syntax errors, unknown or repeated keys, and
/// with the violated invariant on validation failure.
ExperimentConfig parse_config(const std::string& text);

/// Reads and parses a file; ConfigError when it cannot be read.
ExperimentConfig load_config(const std::string& path);

/// Every effective value in parse_config syntax, with round-trip precision.
std::string format_config(const ExperimentConfig& cfg);

/// Bundled configs by name: "paper" (reference experiment) and "paper_fig5" (the same with
/// the visibilities of the phase-randomized run). Throws ConfigError for other names.
std::string bundled_config_text(const std::string& name);

enum class ScanMode { analytic, montecarlo };

const char* scan_mode_name(ScanMode mode);
/// "analytic" or "montecarlo"; InvalidArgument otherwise.
ScanMode parse_scan_mode(const std::string& name);

struct ScanRange {
  double min_um = -800.0;
  double max_um = 800.0;
  double step_um = 2.0;
};

struct FineWindow {
  double center_um = 0.0;
  double half_width_um = 2.0;
  double step_um = 0.04;
};

struct ScanPlan {
  ScanMode mode = ScanMode::analytic;
  ScanRange range;
  /// Phase-resolved window; its points replace the coarse points it covers.
  std::optional<FineWindow> fine_window;
  /// Snap each coarse point to the nearest whole multiple of this wavelength, so the fringe
  /// phase is zero and the coarse scan samples the envelope magnitude.
  std::optional<double> lock_wavelength_nm;
  bool randomize_phase = false;
  double duration_s = 60.0;
  /// Channels to simulate in montecarlo mode; others are written as 0. Analytic rows carry
  /// every channel.
  std::vector<Channel> channels{Channel::singles1, Channel::singles2, Channel::cross,
                                Channel::self1, Channel::self2};
  std::uint64_t master_seed = 1;
  /// Worker threads; 0 means one per hardware thread. Output does not depend on it.
  int threads = 1;

  /// Throws InvalidArgument naming the violated invariant.
  void validate(const ExperimentConfig& cfg) const;
  /// Scan positions in ascending order.
  std::vector<double> points() const;
};

/// One row per point in ascending dx. Analytic rows hold rate * duration; Monte Carlo rows hold
/// counts of generated streams after dead time. Point i uses seed derive_seed(master, {point, i})
/// and randomized scans share one jitter path between both detectors. Errors carry the point
/// index and keep their class.
std::vector<ScanRow> run_scan(const ScanPlan& plan, const ExperimentConfig& cfg);

inline constexpr const char* kScanCsvHeader =
    "delta_x_um,singles1,singles2,coinc_cross,coinc_self1,coinc_self2,duration_s,seed";

void write_scan_csv(std::ostream& os, const std::vector<ScanRow>& rows);
/// Throws ConfigError with the line number on a wrong header or malformed row.
std::vector<ScanRow> read_scan_csv(std::istream& is);

enum class Figure { fig3, fig4, fig5 };

/// Accepts 3, 4, 5, fig3, fig4, fig5; InvalidArgument otherwise.
Figure parse_figure(const std::string& name);
const char* figure_name(Figure figure);

struct FigureOptions {
  ScanMode mode = ScanMode::analytic;
  /// Defaults to the bundled config of the figure.
  std::optional<ExperimentConfig> config;
  double duration_s = 60.0;
  std::uint64_t master_seed = 1;
  int threads = 1;
};

struct Dataset {
  std::string name;
  ScanPlan plan;
  std::vector<ScanRow> rows;
};

struct LabeledFit {
  std::string label;
  FitResult fit;
};

struct FigureBundle {
  Figure figure = Figure::fig3;
  ExperimentConfig config;
  std::vector<Dataset> datasets;
  std::vector<LabeledFit> fits;
  std::vector<ProductCheck> checks;
  /// Fits that failed, one message each. Data sets are complete regardless.
  std::vector<std::string> failures;
  /// Reference values worth printing next to the fits.
  std::vector<std::string> notes;
};

/// Scans and fits of one figure: fig3 phase-resolved singles and self coincidences, fig4 the
/// phase-resolved cross fringe, fig5 the phase-randomized coincidences.
FigureBundle reproduce_figure(Figure figure, const FigureOptions& options);

/// Fit report rows of a bundle, `kind,param,value,stderr`, with params prefixed by fit label.
std::string figure_report_csv(const FigureBundle& bundle);

}  // namespace tpi
