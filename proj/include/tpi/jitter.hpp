#pragma once

namespace tpi {

class SpectralPair;

/// Piezo path-jitter used to randomize the relative phase of the two arms. The path offset is
/// piecewise constant over `dwell_time_us` and each dwell draws uniformly from [0, amplitude_um].
struct JitterSpec {
  bool enabled = false;
  double amplitude_um = 8.2;
  double dwell_time_us = 100.0;

  /// Basic domain checks; when enabled also requires amplitude >= 10 max(lambda) and
  /// amplitude <= beat_period / 5 (the latter only for non-degenerate filters).
  void validate(const SpectralPair& filters) const;
};

}  // namespace tpi
