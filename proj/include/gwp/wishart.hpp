#pragma once

#include "gwp/common.hpp"
#include "gwp/gp.hpp"
#include "gwp/kernels.hpp"
#include "gwp/rng.hpp"

#include <string>
#include <vector>

namespace gwp {

/// Observation mean: zero, or a causal exponential moving average of Y
/// with smoothing alpha = 2 / (window + 1).
struct MeanFunction {
  enum class Kind { Zero, Ema };
  Kind kind = Kind::Zero;
  int window = 10;
};

/// Generative model: Sigma(x) = sum_l L f_l(x) f_l(x)^T L^T + diag(Lambda),
/// with f_jl ~ GP(0, kernel), L_jo ~ N(0, 1) and log-normal hyperpriors.
struct WishartModel {
  int d = 1;
  int v = 1;
  Kernel kernel = Kernel::rbf(1.0);
  /// One per kernel hyperparameter; empty means the default log-normal(0, 1).
  std::vector<HyperPrior> hyperpriors;
  /// Diagonal noise term on/off.
  bool noise = false;
  /// Initial (and, for the samplers, fixed) value of each Lambda_jj.
  double noise_init = 0.001;
  bool learn_kernel = true;
  bool learn_scale = true;
  MeanFunction mean;

  /// Throws DomainError on invalid settings; returns non-fatal warnings.
  std::vector<std::string> validate() const;
  [[nodiscard]] std::vector<HyperPrior> priors() const;
  [[nodiscard]] Eigen::Index blocks() const { return static_cast<Eigen::Index>(d) * v; }
};

/// One point in parameter space.
/// f has one row per GP block (row j * v + l) and one column per input.
struct LatentState {
  Matrix f;
  Vector log_theta;
  Matrix scale_chol;
  Vector noise;

  [[nodiscard]] Vector theta() const { return log_theta.array().exp(); }
  [[nodiscard]] Eigen::Index n() const { return f.cols(); }
};

/// Inputs, outputs and mean-function values, prepared once per dataset.
struct Observations {
  Vector x;
  Matrix y;
  Matrix mean;

  [[nodiscard]] Eigen::Index n() const { return y.rows(); }
};

Observations make_observations(const WishartModel& model, const Vector& x, const Matrix& y);

/// Causal EMA: row 0 is zero, row i + 1 is alpha * y_i + (1 - alpha) * row i.
Matrix ema_mean(const Matrix& y, int k);

Matrix mean_values(const MeanFunction& mean, const Matrix& y);

Matrix construct_sigma(const LatentState& state, Eigen::Index i);

/// Sigma(x_i) for every column of state.f.
CovariancePath covariance_path(const LatentState& state, const Vector& x);

double log_likelihood(const WishartModel& model, const LatentState& state, const Vector& xs,
                      const Matrix& y, const Matrix& mean);
double log_likelihood(const LatentState& state, const Observations& obs);

/// log p(theta) + sum log N(L_jo; 0, 1) over the lower triangle
/// + sum over GP blocks of log N(f_jl; 0, K_xx(theta)).
double log_prior(const WishartModel& model, const LatentState& state, const Vector& xs);

/// GP term of log_prior for a given factor of K_xx.
double gp_block_log_prior(const Matrix& f, const CholeskyFactor& chol_k);

/// Draws theta, L and F from the prior (theta and L kept at the model's
/// values when they are not learned).
LatentState sample_prior_state(const WishartModel& model, const Vector& xs, Rng& rng);

/// State holding the model's own kernel hyperparameters, L = I and F = 0.
LatentState initial_state(const WishartModel& model, Eigen::Index n);

/// Per-point log-likelihood with reusable buffers; avoids heap traffic in
/// sampler inner loops.
class PointLikelihood {
 public:
  PointLikelihood(int d, int v);
  /// log N(y; mean, L M M^T L^T + diag(noise)) where column holds the d*v
  /// latent values at one input.
  double operator()(const double* column, const Matrix& scale_chol, const Vector& noise,
                    const double* y, const double* mean, Eigen::Index y_stride);

 private:
  int d_;
  int v_;
  Matrix t_;
  Matrix s_;
  Vector r_;
};

struct Prediction {
  CovariancePath path;
  /// n_test x d draws of y*, empty unless requested.
  Matrix y;
};

/// Posterior predictive at xs_test: one draw of F* per posterior state.
std::vector<Prediction> predict(const WishartModel& model, const std::vector<LatentState>& states,
                                const Vector& xs_train, const Vector& xs_test, Rng& rng,
                                bool sample_y = false);

}  // namespace gwp
