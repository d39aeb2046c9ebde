#include "doctest.h"
#include "oracles.hpp"

#include "gwp/garch.hpp"

#include <cmath>

using namespace gwp;

namespace {

Matrix equicorrelation(int d, double rho) {
  Matrix q = Matrix::Constant(d, d, rho);
  q.diagonal().setOnes();
  return q;
}

UnivariateGarch fixed_fit(const Vector& y, double omega, double a, double b) {
  UnivariateGarch f;
  f.omega = omega;
  f.a = a;
  f.b = b;
  f.y = y;
  f.h = garch_variances(y, omega, a, b);
  return f;
}

}  // namespace

TEST_CASE("nelder_mead minimizes a smooth function") {
  const auto rosen = [](const Vector& x) {
    return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2);
  };
  Vector x0(2);
  x0 << -1.2, 1.0;
  const NelderMeadResult r = nelder_mead(rosen, x0, 0.5, 5000, 1e-14);
  CHECK(std::abs(r.x[0] - 1.0) < 1e-3);
  CHECK(std::abs(r.x[1] - 1.0) < 1e-3);
}

TEST_CASE("garch_variances follows the recursion") {
  Vector y(4);
  y << 0.5, -1.0, 2.0, 0.1;
  const Vector h = garch_variances(y, 0.1, 0.2, 0.7);
  const double h0 = y.squaredNorm() / 4;
  CHECK(h[0] == doctest::Approx(h0));
  CHECK(h[1] == doctest::Approx(0.1 + 0.2 * 0.25 + 0.7 * h0));
  CHECK(h[2] == doctest::Approx(0.1 + 0.2 * 1.0 + 0.7 * h[1]));
}

TEST_CASE("univariate fit on iid data") {
  Rng rng(1);
  const double sigma2 = 2.5;
  Vector y(5000);
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = std::sqrt(sigma2) * rng.normal();
  const UnivariateGarch f = fit_univariate_garch(y);
  CHECK(f.a < 0.05);
  CHECK(std::abs(f.omega / (1 - f.a - f.b) / sigma2 - 1.0) < 0.15);
  CHECK(f.omega > 0);
  CHECK(f.a + f.b < 1.0);
  CHECK((f.h.array() > 0).all());
}

TEST_CASE("univariate fit recovers simulated parameters") {
  Rng rng(2);
  const SimulatedDcc sim = simulate_dcc_garch(5000, 0.05, 0.1, 0.85, 0.0, 0.0, Matrix::Identity(1, 1), rng);
  const UnivariateGarch f = fit_univariate_garch(sim.y.col(0));
  CHECK(std::abs(f.omega - 0.05) < 0.05);
  CHECK(std::abs(f.a - 0.1) < 0.05);
  CHECK(std::abs(f.b - 0.85) < 0.05);
  CHECK(f.warnings.empty());
}

TEST_CASE("univariate fit errors and warnings") {
  CHECK_THROWS_AS(fit_univariate_garch(Vector::Constant(100, 1.0)), FitError);
  CHECK_THROWS_AS(fit_univariate_garch(Vector::Zero(100)), FitError);
  CHECK_THROWS_AS(fit_univariate_garch(Vector::Ones(1)), FitError);
  Rng rng(3);
  const Vector small = oracle::random_vector(15, rng);
  CHECK(fit_univariate_garch(small).warnings.size() == 1);
}

TEST_CASE("dcc_filter examples") {
  Rng rng(4);
  Matrix u(50, 3);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = rng.normal();
  const Matrix qb = equicorrelation(3, 0.3);
  const DccModel flat = dcc_filter(u, 0.0, 0.0, qb);
  for (const auto& q : flat.q) CHECK((q - qb).norm() < 1e-15);
  const DccModel m = dcc_filter(u, 0.1, 0.85, qb);
  for (const auto& r : m.r) {
    CHECK((r.diagonal().array() == 1.0).all());
    CHECK(r.cwiseAbs().maxCoeff() <= 1.0);
    CHECK(oracle::min_eigenvalue(r) >= -1e-12);
  }
  CHECK_THROWS_AS(dcc_filter(u, 0.5, 0.5, qb), DomainError);
}

TEST_CASE("DCC recovery on simulated data") {
  Rng rng(5);
  const SimulatedDcc sim = simulate_dcc_garch(5000, 0.05, 0.1, 0.85, 0.05, 0.90, equicorrelation(3, 0.5), rng);
  const DccGarchFit fit = fit_dcc_garch(sim.y);
  CHECK(std::abs(fit.dcc.alpha - 0.05) < 0.1);
  CHECK(std::abs(fit.dcc.beta - 0.90) < 0.1);
  CHECK(fit.dcc.alpha + fit.dcc.beta < 1.0);
  for (const auto& f : fit.fits) {
    CHECK(std::abs(f.omega - 0.05) < 0.1);
    CHECK(std::abs(f.a - 0.1) < 0.1);
    CHECK(std::abs(f.b - 0.85) < 0.1);
  }
  for (const auto& r : fit.dcc.r) {
    CHECK((r.diagonal().array() == 1.0).all());
    CHECK(oracle::min_eigenvalue(r) >= -1e-12);
  }
  const CovariancePath path = garch_covariance_path(fit.dcc, fit.fits);
  CHECK(path.size() == 5000);
  for (const auto& s : path.sigma) {
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(oracle::min_eigenvalue(s) > 0.0);
  }
}

TEST_CASE("fit_dcc rejects a singular Q_bar") {
  Rng rng(6);
  Matrix y(200, 2);
  for (Eigen::Index i = 0; i < 200; ++i) {
    y(i, 0) = rng.normal();
    y(i, 1) = y(i, 0);
  }
  const std::vector<UnivariateGarch> fits{fixed_fit(y.col(0), 0.1, 0.1, 0.8), fixed_fit(y.col(1), 0.1, 0.1, 0.8)};
  CHECK_THROWS_AS(fit_dcc(y, fits), SingularMatrixError);
}

TEST_CASE("garch_covariance_path examples") {
  Rng rng(7);
  Matrix y(6, 2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();
  const std::vector<UnivariateGarch> fits{fixed_fit(y.col(0), 0.1, 0.2, 0.6), fixed_fit(y.col(1), 0.3, 0.1, 0.5)};

  const DccModel one = dcc_filter(y.leftCols(1), 0.1, 0.8, Matrix::Identity(1, 1));
  const CovariancePath p1 = garch_covariance_path(one, {fits[0]});
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(p1.sigma[static_cast<std::size_t>(i)](0, 0) == doctest::Approx(fits[0].h[i]));

  DccModel ident = dcc_filter(Matrix::Zero(6, 2), 0.0, 0.0, Matrix::Identity(2, 2));
  const CovariancePath pi = garch_covariance_path(ident, fits);
  for (Eigen::Index i = 0; i < 6; ++i) {
    const Matrix& s = pi.sigma[static_cast<std::size_t>(i)];
    CHECK(s(0, 1) == 0.0);
    CHECK(s(0, 0) == doctest::Approx(fits[0].h[i]));
    CHECK(s(1, 1) == doctest::Approx(fits[1].h[i]));
  }

  // Hand case: h = (4, 9), R offdiag 0.5 -> Sigma offdiag 0.5 * 2 * 3 = 3.
  DccModel hand;
  Matrix r(2, 2);
  r << 1, 0.5, 0.5, 1;
  hand.r = {r};
  UnivariateGarch a, b;
  a.h = Vector::Constant(1, 4.0);
  b.h = Vector::Constant(1, 9.0);
  const CovariancePath ph = garch_covariance_path(hand, {a, b});
  Matrix expected(2, 2);
  expected << 4, 3, 3, 9;
  CHECK((ph.sigma[0] - expected).norm() < 1e-14);
}

TEST_CASE("garch_forecast examples") {
  Rng rng(8);
  const Matrix qb = equicorrelation(2, 0.4);
  const SimulatedDcc sim = simulate_dcc_garch(300, 0.05, 0.1, 0.85, 0.05, 0.9, qb, rng);
  std::vector<UnivariateGarch> fits{fixed_fit(sim.y.col(0), 0.05, 0.1, 0.85), fixed_fit(sim.y.col(1), 0.05, 0.1, 0.85)};
  Matrix u(300, 2);
  for (int j = 0; j < 2; ++j) u.col(j) = sim.y.col(j).array() / fits[static_cast<std::size_t>(j)].h.array().sqrt();
  const DccModel m = dcc_filter(u, 0.05, 0.9, qb);

  // One step ahead equals the in-sample recursion run on one more step.
  const CovariancePath f1 = garch_forecast(m, fits, 1);
  Vector h(2);
  for (int j = 0; j < 2; ++j) {
    const auto& f = fits[static_cast<std::size_t>(j)];
    h[j] = 0.05 + 0.1 * f.y[299] * f.y[299] + 0.85 * f.h[299];
  }
  const Vector last = u.row(299).transpose();
  const Matrix q = 0.05 * qb + 0.05 * last * last.transpose() + 0.9 * m.q.back();
  const double rho = q(0, 1) / std::sqrt(q(0, 0) * q(1, 1));
  CHECK(f1.sigma[0](0, 0) == doctest::Approx(h[0]));
  CHECK(f1.sigma[1 - 1](1, 1) == doctest::Approx(h[1]));
  CHECK(f1.sigma[0](0, 1) == doctest::Approx(rho * std::sqrt(h[0] * h[1])));
  CHECK(f1.x[0] == 300.0);

  const CovariancePath far = garch_forecast(m, fits, 2000);
  CHECK(far.sigma.back()(0, 0) == doctest::Approx(0.05 / (1 - 0.95)).epsilon(1e-6));

  const DccModel still = dcc_filter(u, 0.0, 0.0, qb);
  const CovariancePath fc = garch_forecast(still, fits, 20);
  for (const auto& s : fc.sigma) {
    CHECK(s(0, 1) / std::sqrt(s(0, 0) * s(1, 1)) == doctest::Approx(0.4).epsilon(1e-12));
  }
  CHECK_THROWS_AS(garch_forecast(m, fits, 0), DomainError);
}

TEST_CASE("parameter counts") {
  CHECK(dcc_parameter_count(1) == 6);
  CHECK(dcc_parameter_count(3) == 17);
  // Leaving out the d diagonal entries of Q_bar and one of ... the conventional count.
  CHECK(dcc_parameter_count_unit_target(3) == 14);
  for (int d = 1; d <= 6; ++d) {
    CHECK(dcc_parameter_count(d) - dcc_parameter_count_unit_target(d) == static_cast<std::size_t>(d));
  }
}
