#include "lm.hpp"

#include <cmath>
#include <limits>

#include "tpi/errors.hpp"

namespace tpi::detail {

namespace {

Eigen::VectorXd residuals(const Model& model, const std::vector<double>& x,
                          const std::vector<double>& y, const std::vector<double>& err,
                          const Eigen::VectorXd& p) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    r[static_cast<Eigen::Index>(i)] = (y[i] - model(p, x[i])) / err[i];
  }
  return r;
}

Eigen::MatrixXd jacobian(const Model& model, const std::vector<double>& x,
                         const std::vector<double>& err, const Eigen::VectorXd& p,
                         const LmOptions& options) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd J(n, p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double scale = options.scale.empty() ? std::fabs(p[j]) + 1e-3
                                               : std::max(std::fabs(p[j]), options.scale[j]);
    const double h = 1e-6 * scale;
    Eigen::VectorXd lo = p;
    Eigen::VectorXd hi = p;
    lo[j] -= h;
    hi[j] += h;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      // d residual / dp = -d model / dp / err
      J(i, j) = -(model(hi, x[k]) - model(lo, x[k])) / (2.0 * h) / err[k];
    }
  }
  return J;
}

Eigen::MatrixXd scaled_covariance(const Eigen::MatrixXd& J, double chi2, int dof) {
  const Eigen::MatrixXd JtJ = J.transpose() * J;
  Eigen::MatrixXd cov = JtJ.completeOrthogonalDecomposition().pseudoInverse();
  if (dof > 0) cov *= chi2 / dof;
  return cov;
}

}  // namespace

LmResult levenberg_marquardt(const Model& model, const std::vector<double>& x,
                             const std::vector<double>& y, const std::vector<double>& err,
                             Eigen::VectorXd p0, const LmOptions& options) {
  LmResult out;
  out.p = std::move(p0);
  out.dof = static_cast<int>(x.size()) - static_cast<int>(out.p.size());
  Eigen::VectorXd r = residuals(model, x, y, err, out.p);
  double chi2 = r.squaredNorm();
  if (!std::isfinite(chi2)) throw FitError("model is not finite at the initial parameters");
  double lambda = 1e-3;
  int small_steps = 0;
  for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
    const Eigen::MatrixXd J = jacobian(model, x, err, out.p, options);
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 40; ++tries) {
      Eigen::MatrixXd A = JtJ;
      for (Eigen::Index k = 0; k < A.rows(); ++k) A(k, k) += lambda * std::max(JtJ(k, k), 1e-300);
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      const Eigen::VectorXd trial = out.p + step;
      const Eigen::VectorXd r_trial = residuals(model, x, y, err, trial);
      const double chi2_trial = r_trial.squaredNorm();
      if (std::isfinite(chi2_trial) && chi2_trial <= chi2) {
        const double drop = chi2 - chi2_trial;
        bool tiny_step = true;
        for (Eigen::Index k = 0; k < step.size(); ++k) {
          const double scale = options.scale.empty() ? std::fabs(out.p[k]) + 1e-3
                                                     : std::max(std::fabs(out.p[k]), options.scale[k]);
          tiny_step = tiny_step && std::fabs(step[k]) <= 1e-10 * scale;
        }
        out.p = trial;
        r = r_trial;
        chi2 = chi2_trial;
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = true;
        small_steps = (drop <= options.rel_tolerance * chi2 || tiny_step) ? small_steps + 1 : 0;
        break;
      }
      lambda *= 4.0;
      if (lambda > 1e16) break;
    }
    if (!improved || small_steps >= 2 || chi2 < 1e-28 * static_cast<double>(x.size())) {
      out.converged = true;
      break;
    }
  }
  out.chi2 = chi2;
  if (!out.converged) {
    out.message = "no convergence after " + std::to_string(out.iterations) +
                  " iterations, chi2/dof = " +
                  std::to_string(out.dof > 0 ? chi2 / out.dof : chi2);
  }
  out.covariance = scaled_covariance(jacobian(model, x, err, out.p, options), chi2, out.dof);
  return out;
}

LinearFit weighted_linear_fit(const Eigen::MatrixXd& A, const std::vector<double>& y,
                              const std::vector<double>& err) {
  const auto n = A.rows();
  Eigen::MatrixXd Aw = A;
  Eigen::VectorXd yw(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = 1.0 / err[static_cast<std::size_t>(i)];
    Aw.row(i) *= w;
    yw[i] = y[static_cast<std::size_t>(i)] * w;
  }
  LinearFit fit;
  const auto qr = Aw.colPivHouseholderQr();
  if (qr.rank() < A.cols()) throw FitError("linear model is degenerate on these samples");
  fit.c = qr.solve(yw);
  fit.chi2 = (Aw * fit.c - yw).squaredNorm();
  fit.dof = static_cast<int>(n - A.cols());
  fit.covariance = (Aw.transpose() * Aw).inverse();
  if (fit.dof > 0) fit.covariance *= fit.chi2 / fit.dof;
  return fit;
}

}  // namespace tpi::detail
