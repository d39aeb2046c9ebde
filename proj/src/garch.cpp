#include "gwp/garch.hpp"

#include "gwp/gp.hpp"
#include "gwp/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace gwp {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);
constexpr double kInf = std::numeric_limits<double>::infinity();

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

/// (persistence, share) -> (first, second) with first + second < 1.
std::pair<double, double> split_persistence(double p1, double p2) {
  const double s = logistic(p1);
  const double c = logistic(p2);
  return {s * c, s * (1.0 - c)};
}

Vector to_unconstrained(double first, double second) {
  const double s = first + second;
  Vector p(2);
  p[0] = logit(s);
  p[1] = logit(first / s);
  return p;
}

Matrix correlation_from(const Matrix& q) {
  const Vector inv = q.diagonal().cwiseSqrt().cwiseInverse();
  Matrix r = inv.asDiagonal() * q * inv.asDiagonal();
  r.diagonal().setOnes();
  return r;
}

/// Correlation part of the Gaussian log-likelihood.
double dcc_objective(const Matrix& u, double alpha, double beta, const Matrix& q_bar) {
  const Eigen::Index n = u.rows();
  const Eigen::Index d = u.cols();
  Matrix q = q_bar;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i > 0) {
      const Vector prev = u.row(i - 1).transpose();
      q = (1.0 - alpha - beta) * q_bar + alpha * prev * prev.transpose() + beta * q;
    }
    const Matrix r = correlation_from(q);
    Eigen::LLT<Matrix> llt(r);
    if (llt.info() != Eigen::Success) return -kInf;
    const Vector ui = u.row(i).transpose();
    double log_det = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) log_det += 2.0 * std::log(llt.matrixLLT()(j, j));
    total -= 0.5 * (log_det + ui.dot(llt.solve(ui)) - ui.squaredNorm());
  }
  return total;
}

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                             double step, int max_iterations, double tol) {
  const Eigen::Index k = x0.size();
  std::vector<Vector> pts(static_cast<std::size_t>(k + 1), x0);
  std::vector<double> vals(static_cast<std::size_t>(k + 1));
  for (Eigen::Index j = 0; j < k; ++j) pts[static_cast<std::size_t>(j + 1)][j] += step;
  const auto safe = [&](const Vector& x) {
    const double v = f(x);
    return std::isnan(v) ? kInf : v;
  };
  for (std::size_t j = 0; j < pts.size(); ++j) vals[j] = safe(pts[j]);

  std::vector<std::size_t> order(pts.size());
  NelderMeadResult out;
  int it = 0;
  for (; it < max_iterations; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];
    double size = 0.0;
    for (const auto& p : pts) size = std::max(size, (p - pts[best]).cwiseAbs().maxCoeff());
    if (std::isfinite(vals[worst]) && std::abs(vals[worst] - vals[best]) <= tol * (1.0 + std::abs(vals[best])) &&
        size <= 1e-8 + std::sqrt(tol)) {
      out.converged = true;
      break;
    }
    Vector centroid = Vector::Zero(k);
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != worst) centroid += pts[j];
    }
    centroid /= static_cast<double>(k);

    const Vector xr = centroid + (centroid - pts[worst]);
    const double fr = safe(xr);
    if (fr < vals[best]) {
      const Vector xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = safe(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid))
                              : Vector(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = safe(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j == best) continue;
      pts[j] = pts[best] + 0.5 * (pts[j] - pts[best]);
      vals[j] = safe(pts[j]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  out.x = pts[best];
  out.value = vals[best];
  out.iterations = it;
  return out;
}

Vector garch_variances(const Vector& y, double omega, double a, double b) {
  const Eigen::Index n = y.size();
  Vector h(n);
  if (n == 0) return h;
  h[0] = y.squaredNorm() / static_cast<double>(n);
  for (Eigen::Index i = 1; i < n; ++i) h[i] = omega + a * y[i - 1] * y[i - 1] + b * h[i - 1];
  return h;
}

double garch_loglik(const Vector& y, double omega, double a, double b) {
  const Vector h = garch_variances(y, omega, a, b);
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!(h[i] > 0.0)) return -kInf;
    total -= 0.5 * (kLog2Pi + std::log(h[i]) + y[i] * y[i] / h[i]);
  }
  return total;
}

UnivariateGarch fit_univariate_garch(const Vector& y) {
  const Eigen::Index n = y.size();
  if (n < 2) throw FitError("GARCH fit needs at least two observations");
  if (!y.allFinite()) throw DomainError("GARCH input contains non-finite values");
  UnivariateGarch out;
  if (n < 20) out.warnings.push_back("fewer than 20 observations; GARCH estimates are unreliable");
  const double mean = y.mean();
  const double var = (y.array() - mean).square().sum() / static_cast<double>(n);
  if (!(var > 1e-300)) throw FitError("GARCH fit on a series with zero variance");
  const double second = y.squaredNorm() / static_cast<double>(n);

  const auto objective = [&](const Vector& p) {
    const double omega = std::exp(p[0]);
    const auto [a, b] = split_persistence(p[1], p[2]);
    return -garch_loglik(y, omega, a, b);
  };
  static constexpr std::array<std::array<double, 2>, 5> kStarts{
      {{0.05, 0.90}, {0.10, 0.80}, {0.05, 0.50}, {0.20, 0.70}, {0.02, 0.97}}};
  NelderMeadResult best;
  best.value = kInf;
  for (const auto& [a0, b0] : kStarts) {
    Vector p(3);
    p[0] = std::log(second * (1.0 - a0 - b0));
    p.tail(2) = to_unconstrained(a0, b0);
    NelderMeadResult r = nelder_mead(objective, p, 0.5, 3000);
    r = nelder_mead(objective, r.x, 0.1, 3000);
    if (r.value < best.value) best = r;
  }
  if (!std::isfinite(best.value)) throw FitError("GARCH likelihood was not finite at any start");
  out.omega = std::exp(best.x[0]);
  std::tie(out.a, out.b) = split_persistence(best.x[1], best.x[2]);
  out.h = garch_variances(y, out.omega, out.a, out.b);
  out.y = y;
  out.loglik = -best.value;
  return out;
}

DccModel dcc_filter(const Matrix& u, double alpha, double beta, const Matrix& q_bar) {
  if (!(alpha >= 0.0 && beta >= 0.0 && alpha + beta < 1.0)) {
    throw DomainError("DCC parameters must satisfy alpha, beta >= 0 and alpha + beta < 1");
  }
  if (q_bar.rows() != u.cols() || q_bar.cols() != u.cols()) {
    throw DomainError("Q_bar does not match the residual dimension");
  }
  DccModel m;
  m.alpha = alpha;
  m.beta = beta;
  m.q_bar = q_bar;
  m.u = u;
  const Eigen::Index n = u.rows();
  m.q.reserve(static_cast<std::size_t>(n));
  m.r.reserve(static_cast<std::size_t>(n));
  Matrix q = q_bar;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i > 0) {
      const Vector prev = u.row(i - 1).transpose();
      q = (1.0 - alpha - beta) * q_bar + alpha * prev * prev.transpose() + beta * q;
    }
    m.q.push_back(q);
    m.r.push_back(correlation_from(q));
  }
  m.loglik = dcc_objective(u, alpha, beta, q_bar);
  return m;
}

DccModel fit_dcc(const Matrix& y, const std::vector<UnivariateGarch>& fits) {
  const Eigen::Index n = y.rows();
  const Eigen::Index d = y.cols();
  if (static_cast<Eigen::Index>(fits.size()) != d) {
    throw DomainError("one univariate fit per column is required");
  }
  Matrix u(n, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto& fit = fits[static_cast<std::size_t>(j)];
    if (fit.h.size() != n) throw DomainError("univariate fit length does not match the data");
    u.col(j) = y.col(j).array() / fit.h.array().sqrt();
  }
  const Matrix q_bar = u.transpose() * u / static_cast<double>(std::max<Eigen::Index>(n, 1));
  Eigen::LLT<Matrix> check(q_bar);
  if (n == 0 || check.info() != Eigen::Success ||
      check.matrixLLT().diagonal().minCoeff() < 1e-10) {
    throw SingularMatrixError("Q_bar is singular");
  }
  const auto objective = [&](const Vector& p) {
    const auto [alpha, beta] = split_persistence(p[0], p[1]);
    return -dcc_objective(u, alpha, beta, q_bar);
  };
  static constexpr std::array<std::array<double, 2>, 5> kStarts{
      {{0.05, 0.90}, {0.02, 0.95}, {0.10, 0.80}, {0.03, 0.60}, {0.20, 0.50}}};
  NelderMeadResult best;
  best.value = kInf;
  for (const auto& [a0, b0] : kStarts) {
    NelderMeadResult r = nelder_mead(objective, to_unconstrained(a0, b0), 0.5, 2000);
    r = nelder_mead(objective, r.x, 0.1, 2000);
    if (r.value < best.value) best = r;
  }
  if (!std::isfinite(best.value)) throw FitError("DCC likelihood was not finite at any start");
  const auto [alpha, beta] = split_persistence(best.x[0], best.x[1]);
  return dcc_filter(u, alpha, beta, q_bar);
}

DccGarchFit fit_dcc_garch(const Matrix& y) {
  DccGarchFit out;
  out.fits.resize(static_cast<std::size_t>(y.cols()));
  parallel_for(out.fits.size(), [&](std::size_t j) {
    out.fits[j] = fit_univariate_garch(y.col(static_cast<Eigen::Index>(j)));
  });
  out.dcc = fit_dcc(y, out.fits);
  return out;
}

CovariancePath garch_covariance_path(const DccModel& model, const std::vector<UnivariateGarch>& fits,
                                     const Vector& x) {
  const auto n = static_cast<Eigen::Index>(model.r.size());
  const auto d = static_cast<Eigen::Index>(fits.size());
  CovariancePath path;
  path.x = x.size() == n ? x : Vector::LinSpaced(n, 0.0, static_cast<double>(n - 1));
  path.sigma.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector sd(d);
    for (Eigen::Index j = 0; j < d; ++j) sd[j] = std::sqrt(fits[static_cast<std::size_t>(j)].h[i]);
    path.sigma.push_back(sd.asDiagonal() * model.r[static_cast<std::size_t>(i)] * sd.asDiagonal());
  }
  return path;
}

CovariancePath garch_forecast(const DccModel& model, const std::vector<UnivariateGarch>& fits,
                              int horizon, const Vector& x) {
  if (horizon < 1) throw DomainError("forecast horizon must be >= 1");
  const auto d = static_cast<Eigen::Index>(fits.size());
  const Eigen::Index n = model.u.rows();
  if (n == 0 || model.q.empty()) throw InvalidStateError("DCC model has not been fitted");
  Vector h(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto& f = fits[static_cast<std::size_t>(j)];
    h[j] = f.omega + f.a * f.y[n - 1] * f.y[n - 1] + f.b * f.h[n - 1];
  }
  const Vector last = model.u.row(n - 1).transpose();
  Matrix q = (1.0 - model.alpha - model.beta) * model.q_bar + model.alpha * last * last.transpose() +
             model.beta * model.q.back();
  CovariancePath path;
  path.x = x.size() == horizon
               ? x
               : Vector::LinSpaced(horizon, static_cast<double>(n), static_cast<double>(n + horizon - 1));
  for (int k = 0; k < horizon; ++k) {
    if (k > 0) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const auto& f = fits[static_cast<std::size_t>(j)];
        h[j] = f.omega + (f.a + f.b) * h[j];
      }
      q = (1.0 - model.alpha - model.beta) * model.q_bar + model.alpha * correlation_from(q) +
          model.beta * q;
    }
    const Vector sd = h.cwiseSqrt();
    path.sigma.push_back(sd.asDiagonal() * correlation_from(q) * sd.asDiagonal());
  }
  return path;
}

std::size_t dcc_parameter_count(int d) {
  const auto n = static_cast<std::size_t>(d);
  return 3 * n + 2 + n * (n + 1) / 2;
}

std::size_t dcc_parameter_count_unit_target(int d) {
  const auto n = static_cast<std::size_t>(d);
  return (n + 1) * (n + 4) / 2;
}

SimulatedDcc simulate_dcc_garch(Eigen::Index n, double omega, double a, double b, double alpha,
                                double beta, const Matrix& q_bar, Rng& rng) {
  if (!(omega > 0.0 && a >= 0.0 && b >= 0.0 && a + b < 1.0)) {
    throw DomainError("GARCH parameters must satisfy omega > 0, a, b >= 0, a + b < 1");
  }
  if (!(alpha >= 0.0 && beta >= 0.0 && alpha + beta < 1.0)) {
    throw DomainError("DCC parameters must satisfy alpha, beta >= 0 and alpha + beta < 1");
  }
  const Eigen::Index d = q_bar.rows();
  SimulatedDcc out;
  out.y.resize(n, d);
  out.truth.x = Vector::LinSpaced(n, 0.0, static_cast<double>(n - 1));
  out.truth.sigma.reserve(static_cast<std::size_t>(n));
  Vector h = Vector::Constant(d, omega / (1.0 - a - b));
  Matrix q = q_bar;
  Vector prev_y = Vector::Zero(d);
  Vector prev_u = Vector::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i > 0) {
      h = (omega + a * prev_y.array().square() + b * h.array()).matrix();
      q = (1.0 - alpha - beta) * q_bar + alpha * prev_u * prev_u.transpose() + beta * q;
    }
    const Vector sd = h.cwiseSqrt();
    const Matrix sigma = sd.asDiagonal() * correlation_from(q) * sd.asDiagonal();
    const CholeskyFactor chol = chol_jitter(sigma, "simulated Sigma");
    const Vector yi = sample_mvn(Vector::Zero(d), chol, rng);
    out.y.row(i) = yi.transpose();
    out.truth.sigma.push_back(sigma);
    prev_y = yi;
    prev_u = yi.cwiseQuotient(sd);
  }
  return out;
}

}  // namespace gwp
