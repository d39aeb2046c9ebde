#include "gwp/gp.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace gwp {

double CholeskyFactor::log_det() const {
  return 2.0 * lower.diagonal().array().log().sum();
}

Matrix CholeskyFactor::solve(const Matrix& b) const {
  Matrix x = lower.triangularView<Eigen::Lower>().solve(b);
  lower.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
  return x;
}

Matrix CholeskyFactor::solve_lower(const Matrix& b) const {
  return lower.triangularView<Eigen::Lower>().solve(b);
}

CholeskyFactor chol_jitter(const Matrix& a, std::string_view what) {
  if (a.rows() != a.cols()) {
    throw DomainError(std::string(what) + " is not square");
  }
  if (!a.allFinite()) {
    throw SingularMatrixError(std::string(what) + " has non-finite entries");
  }
  const Eigen::Index n = a.rows();
  for (double jitter : kJitterLadder) {
    Eigen::LLT<Matrix> llt;
    if (jitter == 0.0) {
      llt.compute(a);
    } else {
      llt.compute(a + jitter * Matrix::Identity(n, n));
    }
    if (llt.info() != Eigen::Success) continue;
    Matrix l = llt.matrixL();
    if ((l.diagonal().array() > 0.0).all() && l.allFinite()) {
      return CholeskyFactor{std::move(l), jitter};
    }
  }
  throw SingularMatrixError(std::string(what) + " is not positive definite after jitter up to " +
                            std::to_string(kJitterLadder.back()));
}

Matrix sample_gp_prior(const CholeskyFactor& chol_k, Eigen::Index count, Rng& rng) {
  const Eigen::Index n = chol_k.size();
  Matrix z(n, count);
  for (Eigen::Index c = 0; c < count; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) z(i, c) = rng.normal();
  }
  return (chol_k.lower.triangularView<Eigen::Lower>() * z).transpose();
}

Matrix sample_gp_prior(const Kernel& kernel, const Vector& xs, Eigen::Index count, Rng& rng) {
  if (count < 0) throw DomainError("sample count must be nonnegative");
  if (xs.size() == 0 || count == 0) return Matrix(count, xs.size());
  return sample_gp_prior(chol_jitter(gram(kernel, xs), "prior Gram matrix"), count, rng);
}

GPConditional gp_predict(const Kernel& kernel, const Vector& xs_train, const Vector& f_train,
                         const Vector& xs_test) {
  if (xs_train.size() != f_train.size()) {
    throw DomainError("training values and training inputs differ in length");
  }
  const Matrix k_ss = gram(kernel, xs_test);
  if (xs_train.size() == 0) {
    return {Vector::Zero(xs_test.size()), k_ss};
  }
  const CholeskyFactor chol = chol_jitter(gram(kernel, xs_train), "training Gram matrix");
  const Matrix k_xs = gram(kernel, xs_train, xs_test);
  const Matrix v = chol.solve_lower(k_xs);
  const Vector alpha = chol.solve(f_train);
  GPConditional out;
  out.mean = k_xs.transpose() * alpha;
  out.cov = k_ss - v.transpose() * v;
  out.cov = (0.5 * (out.cov + out.cov.transpose())).eval();
  return out;
}

double mvn_logpdf_chol(const Vector& centered, const CholeskyFactor& chol) {
  const Vector z = chol.solve_lower(centered);
  const double n = static_cast<double>(centered.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + chol.log_det() + z.squaredNorm());
}

double mvn_logpdf(const Vector& y, const Vector& mean, const Matrix& cov) {
  if (y.size() != mean.size() || cov.rows() != y.size() || cov.cols() != y.size()) {
    throw DomainError("mvn_logpdf dimension mismatch");
  }
  if (y.size() == 0) return 0.0;
  return mvn_logpdf_chol(y - mean, chol_jitter(cov, "MVN covariance"));
}

Vector sample_mvn(const Vector& mean, const CholeskyFactor& chol, Rng& rng) {
  Vector z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + chol.lower.triangularView<Eigen::Lower>() * z;
}

}  // namespace gwp
