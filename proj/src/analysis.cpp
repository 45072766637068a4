#include "tpi/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "lm.hpp"
#include "text.hpp"
#include "tpi/errors.hpp"

namespace tpi {

namespace {

using detail::format_double;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kSignificance = 3.0;

void require_points(const Series& s, std::size_t n, const char* what) {
  if (s.x.size() != s.y.size() || s.x.size() != s.err.size()) {
    throw InvalidArgument("series columns differ in length");
  }
  if (s.size() < n) {
    throw FitError(std::string(what) + " needs at least " + std::to_string(n) + " points, got " +
                   std::to_string(s.size()));
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s.err[i] > 0.0) || !std::isfinite(s.y[i]) || !std::isfinite(s.x[i])) {
      throw InvalidArgument("series point " + std::to_string(i) +
                            " has a non-finite value or a non-positive error");
    }
  }
}

Series sorted(const Series& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.x[a] < s.x[b]; });
  Series out;
  for (auto i : idx) out.push_back(s.x[i], s.y[i], s.err[i]);
  return out;
}

double median_step(const Series& s) {
  std::vector<double> d;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s.x[i] > s.x[i - 1]) d.push_back(s.x[i] - s.x[i - 1]);
  }
  if (d.empty()) throw FitError("all samples share one x value");
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  return d[d.size() / 2];
}

double span(const Series& s) { return s.x.back() - s.x.front(); }

double sd(const MatrixXd& cov, Eigen::Index i) { return std::sqrt(std::max(cov(i, i), 0.0)); }

/// Covariance of g(c) by a central-difference Jacobian.
template <class G>
MatrixXd propagate(G g, const VectorXd& c, const MatrixXd& cov) {
  const VectorXd g0 = g(c);
  MatrixXd J(g0.size(), c.size());
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    const double h = 1e-7 * (std::fabs(c[j]) + 1e-6);
    VectorXd lo = c;
    VectorXd hi = c;
    lo[j] -= h;
    hi[j] += h;
    J.col(j) = (g(hi) - g(lo)) / (2.0 * h);
  }
  return J * cov * J.transpose();
}

double wrap_phase(double phi) {
  phi = std::remainder(phi, kTwoPi);
  return phi <= -std::numbers::pi ? phi + kTwoPi : phi;
}

double chi2_red(double chi2, int dof) { return dof > 0 ? chi2 / dof : 0.0; }

/// Weighted single-sinusoid power: chi-square drop of [1, cos, sin] over [1].
double sinusoid_power(const Series& s, double freq) {
  double sw = 0, sy = 0, syy = 0;
  double sc = 0, ss = 0, scc = 0, sss = 0, scs = 0, syc = 0, sys = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double w = 1.0 / (s.err[i] * s.err[i]);
    const double th = kTwoPi * freq * s.x[i];
    const double c = std::cos(th);
    const double n = std::sin(th);
    sw += w;
    sy += w * s.y[i];
    syy += w * s.y[i] * s.y[i];
    sc += w * c;
    ss += w * n;
    scc += w * c * c;
    sss += w * n * n;
    scs += w * c * n;
    syc += w * s.y[i] * c;
    sys += w * s.y[i] * n;
  }
  Eigen::Matrix3d A;
  A << sw, sc, ss, sc, scc, scs, ss, scs, sss;
  const Eigen::Vector3d r(sy, syc, sys);
  const Eigen::Vector3d c = A.ldlt().solve(r);
  return r.dot(c) - sy * sy / sw;
}

/// Dominant frequency in [fmin, fmax] by a direct periodogram, oversampled eight times over
/// the natural resolution and refined by a parabola through the peak.
double periodogram_peak(const Series& s, double fmin, double fmax) {
  const double df = 1.0 / (8.0 * span(s));
  const auto nf = static_cast<std::size_t>(std::ceil((fmax - fmin) / df)) + 1;
  std::vector<double> power(nf);
  for (std::size_t k = 0; k < nf; ++k) power[k] = sinusoid_power(s, fmin + df * k);
  const auto best = static_cast<std::size_t>(
      std::max_element(power.begin(), power.end()) - power.begin());
  double f = fmin + df * best;
  if (best > 0 && best + 1 < nf) {
    const double a = power[best - 1];
    const double b = power[best];
    const double c = power[best + 1];
    const double denom = a - 2 * b + c;
    if (denom < 0) f += 0.5 * df * (a - c) / denom;
  }
  return f;
}

FitResult finish(FitKind kind, const detail::LmResult& lm) {
  if (!lm.converged) throw FitError("fit did not converge: " + lm.message);
  FitResult r;
  r.kind = kind;
  r.dof = lm.dof;
  r.chi2_red = chi2_red(lm.chi2, lm.dof);
  return r;
}

void add(FitResult& r, const char* name, double value, double stderr) {
  r.params.push_back({name, value, stderr});
}

double mean_outer(const Series& s, double fraction) {
  const double reach = std::max(std::fabs(s.x.front()), std::fabs(s.x.back()));
  double sw = 0, sy = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::fabs(s.x[i]) >= fraction * reach) {
      const double w = 1.0 / (s.err[i] * s.err[i]);
      sw += w;
      sy += w * s.y[i];
    }
  }
  return sw > 0 ? sy / sw : 0.0;
}

std::size_t nearest_zero(const Series& s) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (std::fabs(s.x[i]) < std::fabs(s.x[best])) best = i;
  }
  return best;
}

}  // namespace

const char* channel_name(Channel channel) {
  switch (channel) {
    case Channel::singles1: return "singles1";
    case Channel::singles2: return "singles2";
    case Channel::cross: return "cross";
    case Channel::self1: return "self1";
    case Channel::self2: return "self2";
  }
  return "?";
}

Channel parse_channel(const std::string& name) {
  for (Channel c : {Channel::singles1, Channel::singles2, Channel::cross, Channel::self1,
                    Channel::self2}) {
    if (name == channel_name(c)) return c;
  }
  throw InvalidArgument("unknown channel '" + name +
                        "' (expected singles1, singles2, cross, self1 or self2)");
}

double channel_value(const ScanRow& row, Channel channel) {
  switch (channel) {
    case Channel::singles1: return row.singles1;
    case Channel::singles2: return row.singles2;
    case Channel::cross: return row.coinc_cross;
    case Channel::self1: return row.coinc_self1;
    case Channel::self2: return row.coinc_self2;
  }
  return 0.0;
}

Series counts(const std::vector<ScanRow>& rows, Channel channel) {
  Series s;
  for (const auto& row : rows) {
    const double n = channel_value(row, channel);
    if (n < 0 || !std::isfinite(n)) throw InvalidArgument("counts must be finite and >= 0");
    s.push_back(row.delta_x_um, n, std::sqrt(std::max(n, 1.0)));
  }
  return sorted(s);
}

Series normalize(const std::vector<ScanRow>& rows, Channel channel, double baseline_threshold_um) {
  Series s = counts(rows, channel);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::fabs(s.x[i]) >= baseline_threshold_um) {
      sum += s.y[i];
      ++n;
    }
  }
  if (n == 0) {
    throw InvalidArgument("no scan point lies in the baseline region |dx| >= " +
                          format_double(baseline_threshold_um) + " um");
  }
  const double mean = sum / static_cast<double>(n);
  if (!(mean > 0.0)) throw InvalidArgument("baseline mean of channel is not positive");
  for (std::size_t i = 0; i < s.size(); ++i) {
    s.y[i] /= mean;
    s.err[i] /= mean;
  }
  return s;
}

double baseline_threshold_um(const SpectralPair& filters) { return 6.0 * filters.sigma12_um(); }

Series window(const Series& s, double lo, double hi) {
  Series out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.x[i] >= lo && s.x[i] <= hi) out.push_back(s.x[i], s.y[i], s.err[i]);
  }
  return out;
}

const char* fit_kind_name(FitKind kind) {
  switch (kind) {
    case FitKind::spi: return "spi";
    case FitKind::tpi_cross: return "tpi_cross";
    case FitKind::tpi_self: return "tpi_self";
    case FitKind::beat: return "beat";
    case FitKind::envelope: return "envelope";
  }
  return "?";
}

const FitParam& FitResult::param(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return p;
  }
  throw InvalidArgument(std::string("fit of kind ") + fit_kind_name(kind) + " has no parameter '" +
                        name + "'");
}

FitResult fit_oscillation(const Series& raw, double period, OscillationOptions options) {
  if (!(period > 0.0) || !std::isfinite(period)) {
    throw InvalidArgument("expected period must be positive");
  }
  require_points(raw, 5, "oscillation fit");
  const Series s = sorted(raw);
  const double step = median_step(s);
  if (period / step < 10.0 - 1e-9) {
    throw FitError("insufficient sampling: " + format_double(period / step) +
                   " samples per period, need >= 10");
  }
  if (span(s) < 2.0 * period * (1 - 1e-9)) {
    throw FitError("insufficient sampling: span covers " + format_double(span(s) / period) +
                   " periods, need >= 2");
  }

  if (options.envelope_sigma_um && !(*options.envelope_sigma_um > 0.0)) {
    throw InvalidArgument("envelope sigma must be positive");
  }
  const double inv_two_sigma_sq =
      options.envelope_sigma_um ? 0.5 / (*options.envelope_sigma_um * *options.envelope_sigma_um)
                                : 0.0;
  auto env = [inv_two_sigma_sq](double x) { return std::exp(-x * x * inv_two_sigma_sq); };

  double p0 = period;
  if (!options.fix_period) {
    p0 = 1.0 / periodogram_peak(s, 1.0 / (1.5 * period), 1.5 / period);
  }

  // y = c0 + (c1 cos(th) + c2 sin(th)) F = b [1 + v cos(th + phi) F]
  auto linear = [&](double p) {
    MatrixXd A(static_cast<Eigen::Index>(s.size()), 3);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double th = kTwoPi * s.x[i] / p;
      const double f = env(s.x[i]);
      A.row(static_cast<Eigen::Index>(i)) << 1.0, f * std::cos(th), f * std::sin(th);
    }
    return detail::weighted_linear_fit(A, s.y, s.err);
  };
  auto to_bvphi = [](const VectorXd& c) {
    VectorXd o(3);
    o << c[0], std::hypot(c[1], c[2]) / c[0], std::atan2(-c[2], c[1]);
    return o;
  };

  const auto lin = linear(p0);
  const double amp = std::hypot(lin.c[1], lin.c[2]);
  const double amp_err =
      std::sqrt(std::max(0.5 * (lin.covariance(1, 1) + lin.covariance(2, 2)), 0.0));
  const bool significant = amp > kSignificance * amp_err;

  if (options.fix_period || !significant) {
    const auto l = options.fix_period ? lin : linear(period);
    const VectorXd g = to_bvphi(l.c);
    MatrixXd cov = propagate(to_bvphi, l.c, l.covariance);
    FitResult r;
    r.kind = FitKind::spi;
    r.dof = l.dof;
    r.chi2_red = chi2_red(l.chi2, l.dof);
    r.baseline = g[0];
    double v_err = sd(cov, 1);
    if (std::hypot(l.c[1], l.c[2]) == 0.0) {
      v_err = std::sqrt(std::max(0.5 * (l.covariance(1, 1) + l.covariance(2, 2)), 0.0)) / l.c[0];
    }
    r.visibility = {g[1], v_err};
    r.period_um = {period, 0.0};
    add(r, "b", g[0], sd(cov, 0));
    add(r, "v", g[1], v_err);
    add(r, "period_um", period, 0.0);
    add(r, "phase", g[2], sd(cov, 2));
    r.note = options.fix_period ? "period fixed at the expected value"
                                : "no significant oscillation; period not identifiable, kept at the "
                                  "expected value";
    return r;
  }

  const VectorXd g0 = to_bvphi(lin.c);
  VectorXd p(4);
  p << g0[0], g0[1], p0, g0[2];
  detail::Model model = [&env](const VectorXd& q, double x) {
    return q[0] * (1.0 + q[1] * std::cos(kTwoPi * x / q[2] + q[3]) * env(x));
  };
  detail::LmOptions opt;
  opt.scale = {std::fabs(g0[0]), 1e-2, period * 1e-3, 1e-2};
  const auto lm = detail::levenberg_marquardt(model, s.x, s.y, s.err, p, opt);
  FitResult r = finish(FitKind::spi, lm);
  double v = lm.p[1];
  double phi = lm.p[3];
  if (v < 0) {
    v = -v;
    phi += std::numbers::pi;
  }
  r.baseline = lm.p[0];
  r.visibility = {v, sd(lm.covariance, 1)};
  r.period_um = {lm.p[2], sd(lm.covariance, 2)};
  add(r, "b", lm.p[0], sd(lm.covariance, 0));
  add(r, "v", v, sd(lm.covariance, 1));
  add(r, "period_um", lm.p[2], sd(lm.covariance, 2));
  add(r, "phase", wrap_phase(phi), sd(lm.covariance, 3));
  return r;
}

FitResult fit_self_fringe(const Series& raw, double wavelength_um,
                          std::optional<double> envelope_sigma_um) {
  if (!(wavelength_um > 0.0)) throw InvalidArgument("wavelength must be positive");
  if (envelope_sigma_um && !(*envelope_sigma_um > 0.0)) {
    throw InvalidArgument("envelope sigma must be positive");
  }
  require_points(raw, 8, "self fringe fit");
  const Series s = sorted(raw);
  const double step = median_step(s);
  // The second harmonic has period lambda / 2 and needs >= 2.5 samples per period.
  if (wavelength_um / step < 5.0 - 1e-9) {
    throw FitError("aliasing: " + format_double(wavelength_um / step) +
                   " samples per wavelength, need >= 5");
  }
  if (span(s) < wavelength_um * (1 - 1e-9)) {
    throw FitError("insufficient sampling: span shorter than one wavelength");
  }
  MatrixXd A(static_cast<Eigen::Index>(s.size()), 5);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double th = kTwoPi * s.x[i] / wavelength_um;
    A.row(static_cast<Eigen::Index>(i)) << 1.0, std::cos(th), std::sin(th), std::cos(2 * th),
        std::sin(2 * th);
  }
  const auto lin = detail::weighted_linear_fit(A, s.y, s.err);
  // c0 = b (1 + q/2), |first harmonic| = 2 b s, |second harmonic| = b q / 2
  auto to_bqs = [](const VectorXd& c) {
    const double a1 = std::hypot(c[1], c[2]);
    const double a2 = std::hypot(c[3], c[4]);
    const double b = c[0] - a2;
    VectorXd o(4);
    o << b, 2.0 * a2 / b, a1 / (2.0 * b), std::atan2(-c[2], c[1]);
    return o;
  };
  VectorXd g = to_bqs(lin.c);
  MatrixXd cov = propagate(to_bqs, lin.c, lin.covariance);
  FitResult r;
  r.kind = FitKind::tpi_self;
  r.dof = lin.dof;
  r.chi2_red = chi2_red(lin.chi2, lin.dof);
  if (envelope_sigma_um) {
    // b [1 + 2 s F cos(th + phi1) + q/2 F^2 (1 + cos(2 th + phi2))], started from the
    // envelope-free harmonics.
    const double k = 0.5 / (*envelope_sigma_um * *envelope_sigma_um);
    const double w = kTwoPi / wavelength_um;
    detail::Model model = [k, w](const VectorXd& q, double x) {
      const double f = std::exp(-x * x * k);
      return q[0] * (1.0 + 2.0 * q[2] * f * std::cos(w * x + q[3]) +
                     0.5 * q[1] * f * f * (1.0 + std::cos(2.0 * w * x + q[4])));
    };
    VectorXd p(5);
    p << g[0], g[1], g[2], g[3], std::atan2(-lin.c[4], lin.c[3]);
    detail::LmOptions opt;
    opt.scale = {std::fabs(g[0]), 1e-2, 1e-2, 1e-2, 1e-2};
    const auto lm = detail::levenberg_marquardt(model, s.x, s.y, s.err, p, opt);
    r = finish(FitKind::tpi_self, lm);
    g = lm.p.head(4);
    cov = lm.covariance.topLeftCorner(4, 4);
    if (g[2] < 0) {
      g[2] = -g[2];
      g[3] += std::numbers::pi;
    }
    g[3] = wrap_phase(g[3]);
  }
  r.baseline = g[0];
  r.visibility = {g[1], sd(cov, 1)};
  r.period_um = {wavelength_um, 0.0};
  add(r, "b", g[0], sd(cov, 0));
  add(r, "q", g[1], sd(cov, 1));
  add(r, "s", g[2], sd(cov, 2));
  add(r, "phase", g[3], sd(cov, 3));
  return r;
}

FitResult fit_cross_fringe(const Series& raw, const SpectralPair& filters) {
  require_points(raw, 12, "cross fringe fit");
  const Series s = sorted(raw);
  const double l1 = filters.f1().center_wavelength_nm() * 1e-3;
  const double l2 = filters.f2().center_wavelength_nm() * 1e-3;
  const double sg1 = filters.f1().sigma_um();
  const double sg2 = filters.f2().sigma_um();
  const double P0 = sum_frequency_period(filters.f1(), filters.f2());
  const double step = median_step(s);
  if (P0 / step < 4.0 - 1e-9) {
    throw FitError("aliasing: " + format_double(P0 / step) +
                   " samples per sum-frequency period, need >= 4");
  }
  if (span(s) < 2.0 * P0 * (1 - 1e-9)) {
    throw FitError("insufficient sampling: span covers fewer than 2 sum-frequency periods");
  }

  struct Terms {
    double c1, c2, cs, cd, f1, f2;
  };
  auto terms = [=](double x, double P, double x0) {
    const double u = x - x0;
    const double ph1 = kTwoPi * u / l1;
    const double ph2 = kTwoPi * u / l2;
    return Terms{std::cos(ph1),
                 std::cos(ph2),
                 std::cos(kTwoPi * u / P),
                 std::cos(ph1 - ph2),
                 std::exp(-u * u / (2 * sg1 * sg1)),
                 std::exp(-u * u / (2 * sg2 * sg2))};
  };

  // Linear in (b, b s1, b s2, b q) once P and x0 are fixed.
  MatrixXd A(static_cast<Eigen::Index>(s.size()), 4);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Terms t = terms(s.x[i], P0, 0.0);
    A.row(static_cast<Eigen::Index>(i)) << 1.0, -t.c1 * t.f1, t.c2 * t.f2,
        -0.5 * (t.cs + t.cd) * t.f1 * t.f2;
  }
  const auto lin = detail::weighted_linear_fit(A, s.y, s.err);
  VectorXd p(6);
  p << lin.c[0], lin.c[1] / lin.c[0], lin.c[2] / lin.c[0], lin.c[3] / lin.c[0], P0, 0.0;

  detail::Model model = [=](const VectorXd& q, double x) {
    const Terms t = terms(x, q[4], q[5]);
    return q[0] * (1.0 - q[1] * t.c1 * t.f1 + q[2] * t.c2 * t.f2 -
                   0.5 * q[3] * (t.cs + t.cd) * t.f1 * t.f2);
  };
  detail::LmOptions opt;
  opt.scale = {std::fabs(lin.c[0]), 1e-2, 1e-2, 1e-2, P0 * 1e-3, P0 * 1e-3};
  const auto lm = detail::levenberg_marquardt(model, s.x, s.y, s.err, p, opt);
  FitResult r = finish(FitKind::tpi_cross, lm);
  const auto& C = lm.covariance;
  const double asym_err = std::sqrt(std::max(C(1, 1) + C(2, 2) - 2 * C(1, 2), 0.0));
  r.baseline = lm.p[0];
  r.visibility = {lm.p[3], sd(C, 3)};
  r.period_um = {lm.p[4], sd(C, 4)};
  add(r, "b", lm.p[0], sd(C, 0));
  add(r, "s1", lm.p[1], sd(C, 1));
  add(r, "s2", lm.p[2], sd(C, 2));
  add(r, "q", lm.p[3], sd(C, 3));
  add(r, "period_um", lm.p[4], sd(C, 4));
  add(r, "x0_um", lm.p[5], sd(C, 5));
  add(r, "asymmetry", lm.p[1] - lm.p[2], asym_err);
  return r;
}

FitResult fit_envelope(const Series& raw, EnvelopeKind kind, std::optional<double> sigma_hint_um) {
  if (sigma_hint_um && !(*sigma_hint_um > 0.0)) {
    throw InvalidArgument("sigma hint must be positive");
  }
  require_points(raw, 6, "envelope fit");
  const Series s = sorted(raw);
  const double reach = std::min(-s.x.front(), s.x.back());
  const double k = kind == EnvelopeKind::spi ? 2.0 : 1.0;  // exp(-x^2 / (k sigma^2))
  auto shape = [k](double x, double sigma) { return std::exp(-x * x / (k * sigma * sigma)); };

  // Log-parabola on the normalized envelope: ln r = -x^2 / (k sigma^2).
  double sigma0 = sigma_hint_um.value_or(0.0);
  if (!sigma_hint_um) {
    const double b0 = mean_outer(s, 0.75);
    const double a0 = s.y[nearest_zero(s)] / b0 - 1.0;
    // Only the contiguous central lobe: isolated noisy baseline points at large |x| would
    // otherwise dominate through their x^4 weight.
    double sxx = 0, sxl = 0;
    auto accumulate = [&](std::size_t i) {
      const double r = (s.y[i] / b0 - 1.0) / a0;
      if (!(r > 0.2)) return false;
      if (r < 0.95) {
        const double x2 = s.x[i] * s.x[i];
        sxx += x2 * x2;
        sxl += -std::log(r) * x2;
      }
      return true;
    };
    const std::size_t i0 = nearest_zero(s);
    if (a0 != 0.0) {
      for (std::size_t i = i0; i < s.size() && accumulate(i); ++i) {
      }
      for (std::size_t i = i0; i-- > 0 && accumulate(i);) {
      }
    }
    sigma0 = sxl > 0 ? std::sqrt(sxx / (k * sxl)) : span(s) / 4.0;
  }
  if (reach < 3.0 * sigma0 * (1 - 1e-9)) {
    throw FitError("span too narrow: scan reaches +-" + format_double(reach) +
                   " um, need +-3 sigma = " + format_double(3 * sigma0) + " um");
  }

  auto linear = [&](double sigma) {
    MatrixXd A(static_cast<Eigen::Index>(s.size()), 2);
    for (std::size_t i = 0; i < s.size(); ++i) {
      A.row(static_cast<Eigen::Index>(i)) << 1.0, shape(s.x[i], sigma);
    }
    return detail::weighted_linear_fit(A, s.y, s.err);
  };
  const auto lin = linear(sigma0);
  const double a_lin = lin.c[1] / lin.c[0];
  const double a_err = sd(lin.covariance, 1) / std::fabs(lin.c[0]);

  FitResult r;
  r.kind = FitKind::envelope;
  if (std::fabs(a_lin) <= kSignificance * a_err) {
    r.dof = lin.dof;
    r.chi2_red = chi2_red(lin.chi2, lin.dof);
    r.baseline = lin.c[0];
    r.visibility = {std::fabs(a_lin), a_err};
    r.sigma_um = {sigma0, 0.0};
    add(r, "b", lin.c[0], sd(lin.covariance, 0));
    add(r, "a", a_lin, a_err);
    add(r, "sigma_um", sigma0, 0.0);
    r.note = "no significant envelope; sigma not identifiable, kept at the starting value";
  } else {
    VectorXd p(3);
    p << lin.c[0], a_lin, sigma0;
    detail::Model model = [shape](const VectorXd& q, double x) {
      return q[0] * (1.0 + q[1] * shape(x, q[2]));
    };
    detail::LmOptions opt;
    opt.scale = {std::fabs(lin.c[0]), 1e-2, sigma0 * 1e-3};
    const auto lm = detail::levenberg_marquardt(model, s.x, s.y, s.err, p, opt);
    r = finish(FitKind::envelope, lm);
    const double sigma = std::fabs(lm.p[2]);
    if (reach < 3.0 * sigma * (1 - 1e-9)) {
      throw FitError("span too narrow: scan reaches +-" + format_double(reach) +
                     " um, fitted 3 sigma = " + format_double(3 * sigma) + " um");
    }
    r.baseline = lm.p[0];
    r.visibility = {std::fabs(lm.p[1]), sd(lm.covariance, 1)};
    r.sigma_um = {sigma, sd(lm.covariance, 2)};
    add(r, "b", lm.p[0], sd(lm.covariance, 0));
    add(r, "a", lm.p[1], sd(lm.covariance, 1));
    add(r, "sigma_um", sigma, sd(lm.covariance, 2));
  }
  add(r, "form", kind == EnvelopeKind::spi ? 1.0 : 2.0, 0.0);
  return r;
}

FitResult fit_beat(const Series& raw, std::optional<double> sigma12_hint_um) {
  if (sigma12_hint_um && !(*sigma12_hint_um > 0.0)) {
    throw InvalidArgument("sigma12 hint must be positive");
  }
  require_points(raw, 12, "beat fit");
  const Series s = sorted(raw);
  const double step = median_step(s);
  const double b0 = mean_outer(s, 0.75);
  if (!(b0 > 0.0)) throw FitError("beat fit needs a positive baseline");

  // The highest frequency the samples can carry is 1 / (2 step).
  const double L0 = 1.0 / periodogram_peak(s, 3.0 / span(s), 0.5 / step);
  auto window_fit = [&](double L, double s12) {
    MatrixXd A(static_cast<Eigen::Index>(s.size()), 2);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double x = s.x[i];
      A.row(static_cast<Eigen::Index>(i)) << 1.0,
          -std::cos(kTwoPi * x / L) * std::exp(-x * x / (s12 * s12));
    }
    return detail::weighted_linear_fit(A, s.y, s.err);
  };
  double s12 = sigma12_hint_um.value_or(0.0);
  if (!sigma12_hint_um) {
    double best = std::numeric_limits<double>::infinity();
    for (double trial : {span(s) / 32, span(s) / 16, span(s) / 8, span(s) / 4}) {
      const double chi2 = window_fit(L0, trial).chi2;
      if (chi2 < best) {
        best = chi2;
        s12 = trial;
      }
    }
  }
  const auto lin = window_fit(L0, s12);
  const double a_lin = lin.c[1] / lin.c[0];
  const double a_err = sd(lin.covariance, 1) / std::fabs(lin.c[0]);
  if (!(std::fabs(a_lin) > kSignificance * a_err)) {
    throw FitError("degenerate: no significant beat oscillation (amplitude " +
                   format_double(a_lin) + " +- " + format_double(a_err) +
                   "); period not identifiable");
  }
  if (L0 / step < 4.0) {
    throw FitError("aliasing: detected period " + format_double(L0) + " um holds " +
                   format_double(L0 / step) + " samples, need >= 4");
  }

  // Free center: a jittered scan sees the pattern displaced by the mean path offset.
  VectorXd p(5);
  p << lin.c[0], a_lin, L0, s12, 0.0;
  detail::Model model = [](const VectorXd& q, double x) {
    const double u = x - q[4];
    return q[0] * (1.0 - q[1] * std::cos(kTwoPi * u / q[2]) * std::exp(-u * u / (q[3] * q[3])));
  };
  detail::LmOptions opt;
  opt.scale = {std::fabs(lin.c[0]), 1e-2, L0 * 1e-3, s12 * 1e-3, L0 * 1e-3};
  const auto lm = detail::levenberg_marquardt(model, s.x, s.y, s.err, p, opt);
  FitResult r = finish(FitKind::beat, lm);
  double a = lm.p[1];
  const double L = std::fabs(lm.p[2]);
  if (a < 0) {
    // A negative amplitude is the same curve shifted by half a period; only |a| is physical.
    a = -a;
    r.note = "fringe inverted relative to the model sign";
  }
  if (L / step < 4.0) {
    throw FitError("aliasing: " + format_double(L / step) + " samples per period, need >= 4");
  }
  if (span(s) < 3.0 * L * (1 - 1e-9) || L / step < 12.0 - 1e-9) {
    throw FitError("insufficient sampling: " + format_double(span(s) / L) + " periods at " +
                   format_double(L / step) + " samples per period, need >= 3 and >= 12");
  }
  r.baseline = lm.p[0];
  r.visibility = {a, sd(lm.covariance, 1)};
  r.period_um = {L, sd(lm.covariance, 2)};
  r.sigma_um = {std::fabs(lm.p[3]), sd(lm.covariance, 3)};
  add(r, "b", lm.p[0], sd(lm.covariance, 0));
  add(r, "a", a, sd(lm.covariance, 1));
  add(r, "period_um", L, sd(lm.covariance, 2));
  add(r, "sigma12_um", std::fabs(lm.p[3]), sd(lm.covariance, 3));
  add(r, "x0_um", lm.p[4], sd(lm.covariance, 4));
  return r;
}

constexpr double kCheckFloor = 1e-7;

ProductCheck visibility_product_check(const FitResult& spi1, const FitResult& spi2,
                                      const FitResult& tpi) {
  const double v1 = spi1.visibility.value;
  const double e1 = spi1.visibility.stderr;
  const double v2 = spi2.visibility.value;
  const double e2 = spi2.visibility.stderr;
  ProductCheck c;
  std::string label;
  switch (tpi.kind) {
    case FitKind::beat:
      c.measured = 2.0 * tpi.visibility.value;
      c.stderr = 2.0 * tpi.visibility.stderr;
      label = "2a (beat)";
      break;
    case FitKind::tpi_cross:
      c.measured = tpi.visibility.value;
      c.stderr = tpi.visibility.stderr;
      label = "q (cross)";
      break;
    case FitKind::tpi_self:
      c.measured = tpi.visibility.value;
      c.stderr = tpi.visibility.stderr;
      label = "q (self)";
      break;
    case FitKind::envelope:
      c.measured = 2.0 * tpi.visibility.value;
      c.stderr = 2.0 * tpi.visibility.stderr;
      label = "2a (self peak)";
      break;
    case FitKind::spi:
      throw InvalidArgument("product check needs a two-photon fit, got an spi fit");
  }
  double expected_err = 0.0;
  if (tpi.kind == FitKind::beat || tpi.kind == FitKind::tpi_cross) {
    c.expected = v1 * v2;
    expected_err = std::hypot(v2 * e1, v1 * e2);
    label += " vs V1 V2";
  } else {
    c.expected = v1 * v1;
    expected_err = 2.0 * v1 * e1;
    label += " vs V^2";
  }
  // Noise-free data leave only rounding in the fits; the floor keeps z meaningful there.
  const double combined = std::max(std::hypot(c.stderr, expected_err), kCheckFloor);
  const double diff = c.measured - c.expected;
  c.z = combined > 0 ? diff / combined : (diff == 0 ? 0.0 : std::copysign(INFINITY, diff));
  c.pass = std::fabs(c.z) <= kSignificance;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s: %.5f +- %.5f vs %.5f +- %.5f, z = %.2f, %s", label.c_str(),
                c.measured, c.stderr, c.expected, expected_err, c.z, c.pass ? "pass" : "fail");
  c.stderr = combined;
  c.summary = buf;
  return c;
}

std::string fit_report_csv(const std::vector<FitResult>& fits,
                           const std::vector<std::string>& labels) {
  if (!labels.empty() && labels.size() != fits.size()) {
    throw InvalidArgument("fit report needs one label per fit");
  }
  std::ostringstream out;
  out << "kind,param,value,stderr\n";
  for (std::size_t k = 0; k < fits.size(); ++k) {
    const auto& f = fits[k];
    const char* kind = fit_kind_name(f.kind);
    const std::string prefix = labels.empty() ? "" : labels[k] + ".";
    auto row = [&](const std::string& name, double v, double e) {
      out << kind << ',' << prefix << name << ',' << format_double(v) << ',' << format_double(e)
          << '\n';
    };
    row("visibility", f.visibility.value, f.visibility.stderr);
    if (f.sigma_um.value != 0.0) row("sigma_um", f.sigma_um.value, f.sigma_um.stderr);
    if (f.period_um.value != 0.0) row("period_um_fit", f.period_um.value, f.period_um.stderr);
    for (const auto& p : f.params) row(p.name, p.value, p.stderr);
    row("chi2_red", f.chi2_red, 0.0);
  }
  return out.str();
}

std::string fit_summary(const FitResult& f) {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-9s visibility %.5f +- %.5f", fit_kind_name(f.kind),
                f.visibility.value, f.visibility.stderr);
  out << buf;
  if (f.sigma_um.value != 0.0) {
    std::snprintf(buf, sizeof buf, ", sigma %.3f +- %.3f um", f.sigma_um.value, f.sigma_um.stderr);
    out << buf;
  }
  if (f.period_um.value != 0.0) {
    std::snprintf(buf, sizeof buf, ", period %.6g +- %.2g um", f.period_um.value,
                  f.period_um.stderr);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, ", chi2/dof %.3f (dof %d)", f.chi2_red, f.dof);
  out << buf;
  if (!f.note.empty()) out << " [" << f.note << ']';
  return out.str();
}

}  // namespace tpi
