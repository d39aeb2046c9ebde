#include "gwp/wishart.hpp"

#include <cmath>
#include <numbers>

namespace gwp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace

std::vector<std::string> WishartModel::validate() const {
  if (d < 1) throw DomainError("model needs d >= 1");
  if (v < 1) throw DomainError("model needs v >= 1");
  if (!hyperpriors.empty() && hyperpriors.size() != kernel.num_params()) {
    throw DomainError("expected " + std::to_string(kernel.num_params()) +
                      " hyperpriors, got " + std::to_string(hyperpriors.size()));
  }
  for (const auto& p : hyperpriors) {
    if (!(p.sigma_log > 0.0) || !std::isfinite(p.mu_log)) {
      throw DomainError("hyperprior scale must be positive and location finite");
    }
  }
  if (noise && !(noise_init >= 0.0)) throw DomainError("noise_init must be nonnegative");
  if (mean.kind == MeanFunction::Kind::Ema && mean.window < 1) {
    throw DomainError("EMA window must be >= 1");
  }
  std::vector<std::string> warnings;
  if (v < d) {
    warnings.push_back("v < d: Sigma(x) is rank deficient unless the noise term is enabled");
  }
  return warnings;
}

std::vector<HyperPrior> WishartModel::priors() const {
  if (!hyperpriors.empty()) return hyperpriors;
  return std::vector<HyperPrior>(kernel.num_params());
}

Matrix ema_mean(const Matrix& y, int k) {
  if (k < 1) throw DomainError("EMA window k must be >= 1");
  const double alpha = 2.0 / (k + 1.0);
  Matrix out = Matrix::Zero(y.rows(), y.cols());
  for (Eigen::Index i = 0; i + 1 < y.rows(); ++i) {
    out.row(i + 1) = alpha * y.row(i) + (1.0 - alpha) * out.row(i);
  }
  return out;
}

Matrix mean_values(const MeanFunction& mean, const Matrix& y) {
  if (mean.kind == MeanFunction::Kind::Ema) return ema_mean(y, mean.window);
  return Matrix::Zero(y.rows(), y.cols());
}

Observations make_observations(const WishartModel& model, const Vector& x, const Matrix& y) {
  if (x.size() != y.rows()) throw DomainError("x and Y disagree on the number of observations");
  if (y.rows() > 0 && y.cols() != model.d) {
    throw DomainError("Y has " + std::to_string(y.cols()) + " columns but the model has d = " +
                      std::to_string(model.d));
  }
  Matrix yy = y.rows() == 0 ? Matrix(0, model.d) : y;
  return Observations{x, yy, mean_values(model.mean, yy)};
}

Matrix construct_sigma(const LatentState& state, Eigen::Index i) {
  const Eigen::Index d = state.scale_chol.rows();
  const Eigen::Index v = state.f.rows() / d;
  Eigen::Map<const Matrix> mt(state.f.col(i).data(), v, d);
  const Matrix t = state.scale_chol.triangularView<Eigen::Lower>() * mt.transpose();
  Matrix sigma = t * t.transpose();
  if (state.noise.size() == d) sigma.diagonal() += state.noise;
  return sigma;
}

CovariancePath covariance_path(const LatentState& state, const Vector& x) {
  CovariancePath path;
  path.x = x;
  path.sigma.reserve(static_cast<std::size_t>(state.f.cols()));
  for (Eigen::Index i = 0; i < state.f.cols(); ++i) path.sigma.push_back(construct_sigma(state, i));
  return path;
}

PointLikelihood::PointLikelihood(int d, int v) : d_(d), v_(v), t_(d, v), s_(d, d), r_(d) {}

double PointLikelihood::operator()(const double* column, const Matrix& scale_chol,
                                   const Vector& noise, const double* y, const double* mean,
                                   Eigen::Index y_stride) {
  Eigen::Map<const Matrix> mt(column, v_, d_);
  t_.noalias() = scale_chol.triangularView<Eigen::Lower>() * mt.transpose();
  s_.noalias() = t_ * t_.transpose();
  if (noise.size() == d_) s_.diagonal() += noise;
  for (int j = 0; j < d_; ++j) r_[j] = y[j * y_stride] - mean[j * y_stride];

  // In-place Cholesky on the lower triangle of s_.
  bool ok = true;
  double log_det = 0.0;
  for (int j = 0; j < d_ && ok; ++j) {
    double diag = s_(j, j);
    for (int k = 0; k < j; ++k) diag -= s_(j, k) * s_(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) {
      ok = false;
      break;
    }
    const double ljj = std::sqrt(diag);
    s_(j, j) = ljj;
    log_det += 2.0 * std::log(ljj);
    for (int i = j + 1; i < d_; ++i) {
      double acc = s_(i, j);
      for (int k = 0; k < j; ++k) acc -= s_(i, k) * s_(j, k);
      s_(i, j) = acc / ljj;
    }
  }
  if (!ok) {
    s_.noalias() = t_ * t_.transpose();
    if (noise.size() == d_) s_.diagonal() += noise;
    return mvn_logpdf_chol(r_, chol_jitter(s_, "Sigma(x_i)"));
  }
  double quad = 0.0;
  for (int j = 0; j < d_; ++j) {
    double acc = r_[j];
    for (int k = 0; k < j; ++k) acc -= s_(j, k) * r_[k];
    r_[j] = acc / s_(j, j);
    quad += r_[j] * r_[j];
  }
  return -0.5 * (d_ * kLog2Pi + log_det + quad);
}

double log_likelihood(const LatentState& state, const Observations& obs) {
  const Eigen::Index n = obs.n();
  if (n == 0) return 0.0;
  const auto d = static_cast<int>(state.scale_chol.rows());
  if (state.f.cols() != n || obs.y.cols() != d) {
    throw DomainError("latent state shape does not match the observations");
  }
  const auto v = static_cast<int>(state.f.rows() / d);
  PointLikelihood point(d, v);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    total += point(state.f.col(i).data(), state.scale_chol, state.noise, obs.y.data() + i,
                   obs.mean.data() + i, obs.y.rows());
  }
  return total;
}

double log_likelihood(const WishartModel& model, const LatentState& state, const Vector& xs,
                      const Matrix& y, const Matrix& mean) {
  if (xs.size() != y.rows()) throw DomainError("x and Y disagree on the number of observations");
  if (state.f.rows() != model.blocks() || state.scale_chol.rows() != model.d) {
    throw DomainError("latent state is not sized for (d, v)");
  }
  if (mean.rows() != y.rows() || mean.cols() != y.cols()) {
    throw DomainError("mean values are not aligned with Y");
  }
  return log_likelihood(state, Observations{xs, y, mean});
}

double gp_block_log_prior(const Matrix& f, const CholeskyFactor& chol_k) {
  const Eigen::Index n = f.cols();
  if (n == 0) return 0.0;
  const Matrix z = chol_k.solve_lower(f.transpose());
  const double blocks = static_cast<double>(f.rows());
  return -0.5 * (blocks * (n * kLog2Pi + chol_k.log_det()) + z.squaredNorm());
}

double log_prior(const WishartModel& model, const LatentState& state, const Vector& xs) {
  if (state.f.cols() != xs.size() || state.f.rows() != model.blocks()) {
    throw DomainError("latent state is not sized for (d, v, n)");
  }
  const auto priors = model.priors();
  double total = log_prior(priors, state.theta());
  for (Eigen::Index j = 0; j < model.d; ++j) {
    for (Eigen::Index o = 0; o <= j; ++o) {
      const double l = state.scale_chol(j, o);
      total += -0.5 * (kLog2Pi + l * l);
    }
  }
  if (xs.size() > 0) {
    const Kernel kernel = model.kernel.with_log_params(state.log_theta);
    total += gp_block_log_prior(state.f, chol_jitter(gram(kernel, xs), "K_xx"));
  }
  return total;
}

LatentState initial_state(const WishartModel& model, Eigen::Index n) {
  LatentState s;
  s.f = Matrix::Zero(model.blocks(), n);
  s.log_theta = model.kernel.log_params();
  s.scale_chol = Matrix::Identity(model.d, model.d);
  s.noise = model.noise ? Vector::Constant(model.d, model.noise_init) : Vector::Zero(model.d);
  return s;
}

LatentState sample_prior_state(const WishartModel& model, const Vector& xs, Rng& rng) {
  LatentState s = initial_state(model, xs.size());
  if (model.learn_kernel) {
    const auto priors = model.priors();
    for (Eigen::Index k = 0; k < s.log_theta.size(); ++k) {
      const auto& p = priors[static_cast<std::size_t>(k)];
      s.log_theta[k] = p.mu_log + p.sigma_log * rng.normal();
    }
  }
  if (model.learn_scale) {
    s.scale_chol.setZero();
    for (Eigen::Index j = 0; j < model.d; ++j) {
      for (Eigen::Index o = 0; o <= j; ++o) s.scale_chol(j, o) = rng.normal();
    }
  }
  if (xs.size() > 0) {
    const Kernel kernel = model.kernel.with_log_params(s.log_theta);
    s.f = sample_gp_prior(chol_jitter(gram(kernel, xs), "K_xx"), model.blocks(), rng);
  }
  return s;
}

std::vector<Prediction> predict(const WishartModel& model, const std::vector<LatentState>& states,
                                const Vector& xs_train, const Vector& xs_test, Rng& rng,
                                bool sample_y) {
  std::vector<Prediction> out;
  out.reserve(states.size());
  const Eigen::Index blocks = model.blocks();
  for (const auto& state : states) {
    if (state.f.cols() != xs_train.size() || state.f.rows() != blocks) {
      throw DomainError("posterior state is not consistent with the training inputs");
    }
    const Kernel kernel = model.kernel.with_log_params(state.log_theta);
    LatentState test_state = state;
    test_state.f.resize(blocks, xs_test.size());
    if (xs_test.size() > 0) {
      const Matrix k_ss = gram(kernel, xs_test);
      Matrix mean_part;
      CholeskyFactor cond_chol;
      if (xs_train.size() > 0) {
        const CholeskyFactor chol = chol_jitter(gram(kernel, xs_train), "K_xx");
        const Matrix k_xs = gram(kernel, xs_train, xs_test);
        const Matrix v = chol.solve_lower(k_xs);
        Matrix cov = k_ss - v.transpose() * v;
        cov = (0.5 * (cov + cov.transpose())).eval();
        cond_chol = chol_jitter(cov, "predictive covariance");
        mean_part = (k_xs.transpose() * chol.solve(state.f.transpose())).transpose();
      } else {
        cond_chol = chol_jitter(k_ss, "K_**");
        mean_part = Matrix::Zero(blocks, xs_test.size());
      }
      const Matrix noise_draws = sample_gp_prior(cond_chol, blocks, rng);
      test_state.f = mean_part + noise_draws;
    }
    Prediction p;
    p.path = covariance_path(test_state, xs_test);
    if (sample_y) {
      p.y.resize(xs_test.size(), model.d);
      for (std::size_t i = 0; i < p.path.size(); ++i) {
        const CholeskyFactor c = chol_jitter(p.path.sigma[i], "Sigma(x*)");
        p.y.row(static_cast<Eigen::Index>(i)) =
            sample_mvn(Vector::Zero(model.d), c, rng).transpose();
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

CovariancePath mean_path(const std::vector<CovariancePath>& draws) {
  if (draws.empty()) throw DomainError("mean_path needs at least one draw");
  CovariancePath out = draws.front();
  for (std::size_t k = 1; k < draws.size(); ++k) {
    if (draws[k].size() != out.size()) throw DomainError("paths differ in length");
    for (std::size_t i = 0; i < out.size(); ++i) out.sigma[i] += draws[k].sigma[i];
  }
  const double scale = 1.0 / static_cast<double>(draws.size());
  for (auto& s : out.sigma) s *= scale;
  return out;
}

}  // namespace gwp
