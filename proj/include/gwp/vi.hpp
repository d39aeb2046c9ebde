#pragma once

#include "gwp/common.hpp"
#include "gwp/gp.hpp"
#include "gwp/rng.hpp"
#include "gwp/wishart.hpp"

#include <vector>

namespace gwp {

/// Sparse variational posterior: q(u_b) = N(m_b, S_b) at shared inducing
/// inputs z for every GP block b, plus point values of theta, L and Lambda.
struct VariationalState {
  Vector z;
  /// blocks x w, row b is m_b.
  Matrix m;
  /// Lower Cholesky factor of each S_b.
  std::vector<Matrix> s_chol;
  Vector log_theta;
  Matrix scale_chol;
  /// Lambda = softplus(noise_raw).
  Vector noise_raw;

  [[nodiscard]] Eigen::Index w() const { return z.size(); }
  [[nodiscard]] Eigen::Index blocks() const { return m.rows(); }
  [[nodiscard]] Vector noise() const;
};

double softplus(double x);
double softplus_inverse(double y);

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int mc_samples = 3;
  /// Stop once the ELBO has not improved for this many iterations.
  int patience = 10000;

  void validate() const;
};

struct ViConfig {
  AdamConfig adam;
  int max_iterations = 100000;
  int restarts = 4;
  /// Inducing points; 0 picks min(n, 50).
  int inducing = 0;
  bool optimize_inducing = true;
  /// MC draws for the ELBO used to rank restarts.
  int eval_mc_samples = 100;
  /// Fresh initializations allowed per restart after a non-finite ELBO.
  int max_retries = 3;

  void validate() const;
};

/// KL(N(m, S) || N(0, K_zz)) with S = s_chol s_chol^T.
double kl_gaussian(const Vector& m, const Matrix& s_chol, const Matrix& k_zz);

/// Monte Carlo ELBO: expected log-likelihood from mc_count reparameterized
/// draws of the marginals of q(f) minus the KL terms.
double elbo_estimate(const VariationalState& state, const WishartModel& model,
                     const Observations& data, int mc_count, Rng& rng);

struct ElboGradient {
  double elbo = 0.0;
  /// Same layout as VariationalState; entries are d ELBO / d parameter.
  VariationalState grad;
};

/// Exact gradient of the estimator drawn with the same rng state as
/// elbo_estimate, so the pair is consistent under common random numbers.
ElboGradient elbo_gradient(const VariationalState& state, const WishartModel& model,
                           const Observations& data, int mc_count, Rng& rng);

/// Coordinates with m_b = L_K m~_b and S_b factor = L_K S~_b, L_K = chol(K_zz).
/// q = N(0, I) in these coordinates is the prior; the optimizer works here.
VariationalState whiten(const VariationalState& state, const WishartModel& model);
VariationalState unwhiten(const VariationalState& white, const WishartModel& model);

/// elbo_gradient evaluated at unwhiten(white), returned with respect to the
/// whitened coordinates (theta and z include the path through L_K).
ElboGradient elbo_gradient_whitened(const VariationalState& white, const WishartModel& model,
                                    const Observations& data, int mc_count, Rng& rng);

/// Flat parameter vector: z, m (block-major), lower triangles of each S
/// factor (column-major), log theta, lower triangle of L, noise_raw.
Vector pack(const VariationalState& state);
VariationalState unpack(const Vector& flat, const VariationalState& like);

/// Initialization: z on a uniform grid over the input range, random m,
/// S = (0.5)^2 K_zz, theta and L at the model's values (jittered when
/// `perturb` is set), Lambda at noise_init.
VariationalState init_variational(const WishartModel& model, const Observations& data, int w,
                                  Rng& rng, bool perturb);

struct ViRun {
  VariationalState state;
  std::vector<double> trace;
  int iterations = 0;
  int retries = 0;
  /// ELBO with eval_mc_samples draws at the final state.
  double eval_elbo = 0.0;
};

struct ViResult {
  VariationalState state;
  std::size_t best_restart = 0;
  std::vector<ViRun> runs;
};

/// Adam ascent in whitened coordinates with patience stopping. Restart r uses rng.split(r); its
/// attempt a initializes from split(r).split(a).split(0) and optimizes with
/// split(r).split(a).split(1). The first restart starts from the model's
/// hyperparameters; the others perturb them.
ViResult fit_vi(const WishartModel& model, const Observations& data, const ViConfig& config,
                const Rng& rng);

/// q(f_b(xs)) = N(K_xz K_zz^-1 m_b, K_xx + K_xz K_zz^-1 (S_b - K_zz) K_zz^-1 K_zx).
GPConditional sparse_marginal(const VariationalState& state, const WishartModel& model,
                              Eigen::Index block, const Vector& xs);

/// Draws u ~ q, then f* | u, and assembles Sigma(x*) for each draw.
std::vector<CovariancePath> predict_vi(const VariationalState& state, const WishartModel& model,
                                       const Vector& xs_test, int draw_count, Rng& rng);

}  // namespace gwp
