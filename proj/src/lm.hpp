#pragma once

// Levenberg-Marquardt on weighted residuals (y - f(x; p)) / err with a central-difference
// Jacobian. Internal to the analysis module.

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace tpi::detail {

using Model = std::function<double(const Eigen::VectorXd& p, double x)>;

struct LmOptions {
  int max_iterations = 400;
  double rel_tolerance = 1e-12;
  /// Per-parameter length scale for finite-difference steps; empty means |p| + 1e-3.
  std::vector<double> scale;
};

struct LmResult {
  Eigen::VectorXd p;
  Eigen::MatrixXd covariance;  // scaled by the reduced chi-square
  double chi2 = 0.0;
  int dof = 0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

LmResult levenberg_marquardt(const Model& model, const std::vector<double>& x,
                             const std::vector<double>& y, const std::vector<double>& err,
                             Eigen::VectorXd p0, const LmOptions& options = {});

/// Weighted linear least squares y ~ A c. Covariance scaled by the reduced chi-square.
struct LinearFit {
  Eigen::VectorXd c;
  Eigen::MatrixXd covariance;
  double chi2 = 0.0;
  int dof = 0;
};

LinearFit weighted_linear_fit(const Eigen::MatrixXd& A, const std::vector<double>& y,
                              const std::vector<double>& err);

}  // namespace tpi::detail
