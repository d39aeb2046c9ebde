#pragma once

#include "gwp/common.hpp"
#include "gwp/rng.hpp"

#include <functional>
#include <string>
#include <vector>

namespace gwp {

struct NelderMeadResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes f from x0 with an axis-aligned initial simplex of edge `step`.
NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                             double step = 0.5, int max_iterations = 2000, double tol = 1e-10);

/// GARCH(1,1): h_i = omega + a y_{i-1}^2 + b h_{i-1}, h_0 = mean(y^2).
struct UnivariateGarch {
  double omega = 0.0;
  double a = 0.0;
  double b = 0.0;
  Vector h;
  /// Series the model was fitted to; needed to step the recursion forward.
  Vector y;
  double loglik = 0.0;
  std::vector<std::string> warnings;
};

Vector garch_variances(const Vector& y, double omega, double a, double b);
double garch_loglik(const Vector& y, double omega, double a, double b);

/// Gaussian QMLE over (omega, a, b) with a + b < 1 built into the
/// parameterization; simplex search from 5 starting points.
UnivariateGarch fit_univariate_garch(const Vector& y);

struct DccModel {
  double alpha = 0.0;
  double beta = 0.0;
  Matrix q_bar;
  /// Standardized residuals u_i = y_i / sqrt(h_i), one row per step.
  Matrix u;
  std::vector<Matrix> q;
  std::vector<Matrix> r;
  double loglik = 0.0;
};

/// Runs Q_i = (1 - alpha - beta) Q_bar + alpha u_{i-1} u_{i-1}^T + beta Q_{i-1}
/// from Q_0 = Q_bar and normalizes each Q_i to a correlation matrix.
DccModel dcc_filter(const Matrix& u, double alpha, double beta, const Matrix& q_bar);

/// Second stage: Q_bar from the standardized residuals, then (alpha, beta)
/// by simplex search on the correlation log-likelihood.
DccModel fit_dcc(const Matrix& y, const std::vector<UnivariateGarch>& fits);

struct DccGarchFit {
  std::vector<UnivariateGarch> fits;
  DccModel dcc;
};

/// Both stages; univariate fits run in parallel across columns.
DccGarchFit fit_dcc_garch(const Matrix& y);

/// Sigma_i = H_i R_i H_i with H_i = diag(sqrt(h_i)). `x` labels the steps;
/// empty means 0..n-1.
CovariancePath garch_covariance_path(const DccModel& model, const std::vector<UnivariateGarch>& fits,
                                     const Vector& x = Vector());

/// Forecasts with zero future shocks: after the first step the variance
/// recursion uses E[y^2] = h and the correlation recursion E[u u^T] = R.
CovariancePath garch_forecast(const DccModel& model, const std::vector<UnivariateGarch>& fits,
                              int horizon, const Vector& x = Vector());

/// Free quantities of the fitted model: 3 per series, alpha and beta, and
/// the upper triangle of Q_bar.
std::size_t dcc_parameter_count(int d);
/// Conventional count that leaves out the diagonal of Q_bar (fixed near 1
/// for standardized residuals): (d + 1)(d + 4) / 2.
std::size_t dcc_parameter_count_unit_target(int d);

struct SimulatedDcc {
  Matrix y;
  CovariancePath truth;
};

/// Draws n steps of DCC-GARCH(1,1) with identical univariate parameters in
/// every column and target correlation `q_bar`.
SimulatedDcc simulate_dcc_garch(Eigen::Index n, double omega, double a, double b, double alpha,
                                double beta, const Matrix& q_bar, Rng& rng);

}  // namespace gwp
