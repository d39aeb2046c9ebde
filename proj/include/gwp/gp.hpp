#pragma once

#include "gwp/common.hpp"
#include "gwp/kernels.hpp"
#include "gwp/rng.hpp"

#include <array>
#include <string_view>

namespace gwp {

inline constexpr std::array<double, 4> kJitterLadder{0.0, 1e-8, 1e-6, 1e-4};

/// Lower Cholesky factor of A + jitter * I.
struct CholeskyFactor {
  Matrix lower;
  double jitter = 0.0;

  [[nodiscard]] Eigen::Index size() const { return lower.rows(); }
  [[nodiscard]] double log_det() const;
  /// Solves (L L^T) x = b.
  [[nodiscard]] Matrix solve(const Matrix& b) const;
  /// Solves L x = b.
  [[nodiscard]] Matrix solve_lower(const Matrix& b) const;
};

/// Factorizes a symmetric matrix, escalating jitter through kJitterLadder.
/// Throws SingularMatrixError naming `what` when every level fails.
CholeskyFactor chol_jitter(const Matrix& a, std::string_view what = "matrix");

struct GPConditional {
  Vector mean;
  Matrix cov;
};

/// count x n matrix whose rows are independent draws from GP(0, kernel) at xs.
Matrix sample_gp_prior(const Kernel& kernel, const Vector& xs, Eigen::Index count, Rng& rng);

/// Same as above with a precomputed factor of the Gram matrix.
Matrix sample_gp_prior(const CholeskyFactor& chol_k, Eigen::Index count, Rng& rng);

GPConditional gp_predict(const Kernel& kernel, const Vector& xs_train, const Vector& f_train,
                         const Vector& xs_test);

/// log N(y; mean, cov) via Cholesky; never forms an inverse.
double mvn_logpdf(const Vector& y, const Vector& mean, const Matrix& cov);

/// log N(y; 0, L L^T) for an existing factor.
double mvn_logpdf_chol(const Vector& centered, const CholeskyFactor& chol);

/// Draws from MVN(mean, L L^T).
Vector sample_mvn(const Vector& mean, const CholeskyFactor& chol, Rng& rng);

}  // namespace gwp
