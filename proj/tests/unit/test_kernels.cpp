#include "doctest.h"
#include "oracles.hpp"

#include "gwp/gp.hpp"
#include "gwp/kernels.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

using namespace gwp;

namespace {

std::vector<Kernel> random_base_kernels(Rng& rng) {
  const auto pos = [&] { return std::exp(rng.normal()); };
  return {Kernel::rbf(pos()), Kernel::matern12(pos()), Kernel::periodic(pos(), pos()),
          Kernel::locally_periodic(pos(), pos(), pos())};
}

}  // namespace

TEST_CASE("eval examples") {
  CHECK(Kernel::rbf(0.35).eval(0.2, 0.2) == 1.0);
  CHECK(Kernel::rbf(1.0).eval(0.0, 1.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(Kernel::periodic(0.5, 1.0).eval(0.0, 0.5) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(Kernel::sum(Kernel::rbf(1.0), Kernel::matern12(1.0)).eval(0.3, 0.3) == 2.0);
}

TEST_CASE("eval rejects non-finite inputs") {
  const Kernel k = Kernel::rbf(1.0);
  CHECK_THROWS_AS(k.eval(std::numeric_limits<double>::quiet_NaN(), 0.0), DomainError);
  CHECK_THROWS_AS(k.eval(0.0, std::numeric_limits<double>::infinity()), DomainError);
}

TEST_CASE("constructors reject nonpositive hyperparameters") {
  CHECK_THROWS_AS(Kernel::rbf(0.0), DomainError);
  CHECK_THROWS_AS(Kernel::periodic(-1.0, 1.0), DomainError);
  CHECK_THROWS_AS(Kernel::locally_periodic(1.0, 1.0, std::nan("")), DomainError);
}

TEST_CASE("closed forms of the base kernels") {
  const double r = 0.37;
  CHECK(Kernel::matern12(0.8).eval(r, 0.0) == doctest::Approx(std::exp(-r / (2 * 0.64))));
  const double s = std::sin(std::numbers::pi * r / 0.9);
  CHECK(Kernel::periodic(0.9, 0.7).eval(0.0, r) ==
        doctest::Approx(std::exp(-2 * s * s / 0.49)));
  CHECK(Kernel::locally_periodic(0.9, 0.7, 1.3).eval(r, 0.0) ==
        doctest::Approx(std::exp(-2 * s * s / 0.49) * std::exp(-0.5 * r * r / 1.69)));
}

TEST_CASE("base kernels have unit diagonal and are symmetric") {
  Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    for (const auto& k : random_base_kernels(rng)) {
      for (int i = 0; i < 1000; ++i) {
        const double x = 10.0 * rng.normal();
        const double x2 = 10.0 * rng.normal();
        CHECK(std::abs(k.eval(x, x) - 1.0) < 1e-12);
        CHECK(k.eval(x, x2) == k.eval(x2, x));
      }
    }
  }
}

TEST_CASE("sum and product match their children") {
  Rng rng(3);
  const auto base = random_base_kernels(rng);
  for (const auto& a : base) {
    for (const auto& b : base) {
      const Kernel s = Kernel::sum(a, b);
      const Kernel p = Kernel::product(a, b);
      for (int i = 0; i < 50; ++i) {
        const double x = rng.normal();
        const double x2 = rng.normal();
        CHECK(s.eval(x, x2) == doctest::Approx(a.eval(x, x2) + b.eval(x, x2)).epsilon(1e-14));
        CHECK(p.eval(x, x2) == doctest::Approx(a.eval(x, x2) * b.eval(x, x2)).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("gram examples") {
  Vector one(1);
  one << 0.0;
  CHECK(gram(Kernel::rbf(0.3), one)(0, 0) == 1.0);
  Vector xs(2);
  xs << 0.0, 1.0;
  const Matrix k = gram(Kernel::rbf(1.0), xs);
  CHECK(k(0, 0) == 1.0);
  CHECK(k(1, 1) == 1.0);
  CHECK(k(0, 1) == doctest::Approx(std::exp(-0.5)));
  CHECK(k(1, 0) == k(0, 1));
  Rng rng(5);
  const Vector x3 = oracle::random_vector(3, rng);
  for (const auto& kern : random_base_kernels(rng)) {
    const Matrix g = gram(kern, x3);
    CHECK(g == g.transpose());
    CHECK((gram(kern, x3, x3) - g).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("gram plus small ridge is positive definite") {
  Rng rng(17);
  for (int rep = 0; rep < 8; ++rep) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(200));
    Vector xs(n);
    for (Eigen::Index i = 0; i < n; ++i) xs[i] = rng.uniform();
    for (const auto& k : random_base_kernels(rng)) {
      const Matrix g = gram(k, xs) + 1e-6 * Matrix::Identity(n, n);
      Eigen::LLT<Matrix> llt(g);
      CHECK(llt.info() == Eigen::Success);
    }
  }
}

TEST_CASE("parameter gradients match finite differences") {
  const Kernel k = Kernel::sum(Kernel::product(Kernel::rbf(0.7), Kernel::periodic(0.4, 1.1)),
                               Kernel::locally_periodic(0.6, 0.9, 1.5));
  const Vector base = k.log_params();
  std::vector<double> dlog(k.num_params());
  for (double r : {-0.8, -0.1, 0.23, 0.9}) {
    double dx = 0.0;
    k.eval_with_gradient(r, 0.0, dlog, dx);
    const double h = 1e-6;
    CHECK(dx == doctest::Approx((k.eval(r + h, 0.0) - k.eval(r - h, 0.0)) / (2 * h)).epsilon(1e-6));
    for (Eigen::Index p = 0; p < base.size(); ++p) {
      Vector up = base;
      Vector dn = base;
      up[p] += h;
      dn[p] -= h;
      const double fd = (k.with_log_params(up).eval(r, 0.0) - k.with_log_params(dn).eval(r, 0.0)) / (2 * h);
      CHECK(dlog[static_cast<std::size_t>(p)] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("parameter vector round trip") {
  const Kernel k = Kernel::sum(Kernel::rbf(0.35), Kernel::matern12(2.0));
  CHECK(k.num_params() == 2);
  CHECK(k.params()[0] == doctest::Approx(0.35));
  CHECK(k.param_names() == std::vector<std::string>{"sum[0].rbf.lengthscale", "sum[1].matern12.lengthscale"});
  Vector lt(2);
  lt << 0.1, -0.2;
  CHECK(k.with_log_params(lt).log_params() == lt);
  CHECK_THROWS_AS(k.with_log_params(Vector::Zero(3)), DomainError);
}

TEST_CASE("log_prior examples") {
  const std::array<HyperPrior, 1> one{HyperPrior{}};
  Vector theta(1);
  theta << 1.0;
  CHECK(log_prior(one, theta) == doctest::Approx(-std::log(std::sqrt(2 * std::numbers::pi))));
  theta << -1.0;
  CHECK(log_prior(one, theta) == -std::numeric_limits<double>::infinity());
  theta << 0.0;
  CHECK(log_prior(one, theta) == -std::numeric_limits<double>::infinity());

  const std::array<HyperPrior, 2> two{HyperPrior{0.2, 0.5}, HyperPrior{-1.0, 2.0}};
  Vector t2(2);
  t2 << 0.7, 3.1;
  Vector a(1), b(1);
  a << 0.7;
  b << 3.1;
  const std::array<HyperPrior, 1> p0{two[0]};
  const std::array<HyperPrior, 1> p1{two[1]};
  CHECK(log_prior(two, t2) == doctest::Approx(log_prior(p0, a) + log_prior(p1, b)).epsilon(1e-15));
  CHECK_THROWS_AS(log_prior(one, t2), DomainError);
}

TEST_CASE("log-axis prior differs from the density by the log-Jacobian") {
  const HyperPrior p{0.3, 0.8};
  for (double t : {0.1, 1.0, 4.5}) {
    CHECK(p.log_density_log_axis(std::log(t)) == doctest::Approx(p.log_density(t) + std::log(t)));
    CHECK(std::isfinite(p.log_density(t)));
  }
}
