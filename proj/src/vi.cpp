#include "gwp/vi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace gwp {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_shapes(const VariationalState& s, const WishartModel& model) {
  const Eigen::Index w = s.w();
  if (w < 1) throw DomainError("variational state needs at least one inducing point");
  if (s.m.rows() != model.blocks() || s.m.cols() != w) {
    throw DomainError("variational means do not match blocks x inducing points");
  }
  if (static_cast<Eigen::Index>(s.s_chol.size()) != model.blocks()) {
    throw DomainError("one covariance factor per GP block is required");
  }
  for (const auto& ls : s.s_chol) {
    if (ls.rows() != w || ls.cols() != w) throw DomainError("covariance factor must be w x w");
  }
  if (s.scale_chol.rows() != model.d || s.scale_chol.cols() != model.d) {
    throw DomainError("scale factor must be d x d");
  }
  if (s.noise_raw.size() != model.d) throw DomainError("noise vector must have length d");
  if (s.log_theta.size() != static_cast<Eigen::Index>(model.kernel.num_params())) {
    throw DomainError("kernel parameter count mismatch");
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Kernel quantities shared by every block.
struct Sparse {
  CholeskyFactor chol;
  Matrix kinv;
  Matrix kzx;
  /// K_zz^-1 K_zx.
  Matrix b;
  Vector kdiag;
  /// diag(K_xz K_zz^-1 K_zx).
  Vector q;
};

Sparse prepare(const Kernel& kernel, const Vector& z, const Vector& x) {
  Sparse p;
  p.chol = chol_jitter(gram(kernel, z), "K_zz");
  p.kinv = p.chol.solve(Matrix::Identity(z.size(), z.size()));
  p.kzx = gram(kernel, z, x);
  p.b = p.chol.solve(p.kzx);
  p.kdiag.resize(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) p.kdiag[i] = kernel.eval(x[i], x[i]);
  p.q = p.kzx.cwiseProduct(p.b).colwise().sum().transpose();
  return p;
}

struct KlTerms {
  double value = 0.0;
  Vector dm;
  Matrix dls;
  Matrix dk;
};

KlTerms kl_terms(const Vector& m, const Matrix& s_chol, const CholeskyFactor& chol,
                 const Matrix& kinv, bool grad) {
  const Eigen::Index w = m.size();
  const Matrix ls = s_chol.triangularView<Eigen::Lower>();
  const Matrix half = chol.solve_lower(ls);
  const Vector alpha = chol.solve(m);
  double log_det_s = 0.0;
  for (Eigen::Index k = 0; k < w; ++k) log_det_s += 2.0 * std::log(std::abs(ls(k, k)));
  KlTerms out;
  out.value = 0.5 * (half.squaredNorm() + m.dot(alpha) - static_cast<double>(w) + chol.log_det() -
                     log_det_s);
  if (grad) {
    out.dm = alpha;
    const Matrix kinv_ls = chol.solve(ls);
    out.dls = kinv_ls;
    for (Eigen::Index k = 0; k < w; ++k) out.dls(k, k) -= 1.0 / ls(k, k);
    out.dls = out.dls.triangularView<Eigen::Lower>();
    out.dk = 0.5 * (kinv - kinv_ls * kinv_ls.transpose() - alpha * alpha.transpose());
  }
  return out;
}

/// Adds sum_ac kbar(a, c) dK_zz(a, c) to the theta and z entries of `grad`.
void chain_kzz(const Kernel& kernel, const Vector& z, const Matrix& kbar, VariationalState& grad) {
  const auto p = static_cast<Eigen::Index>(grad.log_theta.size());
  std::vector<double> dlog(static_cast<std::size_t>(p));
  double dx = 0.0;
  for (Eigen::Index a = 0; a < z.size(); ++a) {
    for (Eigen::Index c = 0; c < z.size(); ++c) {
      kernel.eval_with_gradient(z[a], z[c], dlog, dx);
      for (Eigen::Index k = 0; k < p; ++k) {
        grad.log_theta[k] += kbar(a, c) * dlog[static_cast<std::size_t>(k)];
      }
      if (a != c) grad.z[a] += (kbar(a, c) + kbar(c, a)) * dx;
    }
  }
}

/// Reverse mode through K = L L^T: returns the symmetric adjoint of K given
/// the adjoint of the lower factor.
Matrix cholesky_adjoint(const CholeskyFactor& chol, const Matrix& lbar) {
  Matrix phi = (chol.lower.transpose() * lbar).triangularView<Eigen::Lower>();
  phi.diagonal() *= 0.5;
  const auto lo = chol.lower.triangularView<Eigen::Lower>();
  // L^-T phi L^-1.
  Matrix t = lo.transpose().solve(phi);
  t = lo.transpose().solve(t.transpose()).transpose();
  return 0.5 * (t + t.transpose());
}

CholeskyFactor kzz_factor(const WishartModel& model, const VariationalState& s) {
  return chol_jitter(gram(model.kernel.with_log_params(s.log_theta), s.z), "K_zz");
}

std::vector<Matrix> draw_eps(Eigen::Index blocks, Eigen::Index n, int mc, Rng& rng) {
  std::vector<Matrix> eps(static_cast<std::size_t>(mc), Matrix(blocks, n));
  for (auto& e : eps) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index b = 0; b < blocks; ++b) e(b, i) = rng.normal();
    }
  }
  return eps;
}

/// ELBO for fixed standard-normal draws; fills `grad` when given.
double evaluate(const VariationalState& state, const WishartModel& model, const Observations& data,
                const std::vector<Matrix>& eps, VariationalState* grad) {
  check_shapes(state, model);
  const Eigen::Index n = data.n();
  const Eigen::Index w = state.w();
  const Eigen::Index blocks = model.blocks();
  const int d = model.d;
  const int v = model.v;
  if (data.y.cols() != d) throw DomainError("observations have the wrong dimension");
  const Kernel kernel = model.kernel.with_log_params(state.log_theta);
  const Sparse sp = prepare(kernel, state.z, data.x);

  // Marginals of q(f_b) at the training inputs.
  Matrix mu(blocks, n);
  Matrix sig(blocks, n);
  std::vector<Matrix> t(static_cast<std::size_t>(blocks));
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Matrix ls = state.s_chol[static_cast<std::size_t>(b)].triangularView<Eigen::Lower>();
    mu.row(b) = (sp.b.transpose() * state.m.row(b).transpose()).transpose();
    t[static_cast<std::size_t>(b)] = ls.transpose() * sp.b;
    const Vector extra = t[static_cast<std::size_t>(b)].colwise().squaredNorm().transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double var = sp.kdiag[i] - sp.q[i] + extra[i];
      sig(b, i) = var > 0.0 ? std::sqrt(var) : 0.0;
    }
  }

  const Matrix scale = state.scale_chol.triangularView<Eigen::Lower>();
  const Vector lambda = model.noise ? state.noise() : Vector::Zero(d);
  const double inv_mc = 1.0 / static_cast<double>(eps.size());

  Matrix g_mu = Matrix::Zero(blocks, n);
  Matrix g_sig = Matrix::Zero(blocks, n);
  Matrix g_scale = Matrix::Zero(d, d);
  Vector g_lambda = Vector::Zero(d);
  double ell = 0.0;

  Matrix f(blocks, n);
  Matrix gf(blocks, n);
  for (const auto& e : eps) {
    f = mu + sig.cwiseProduct(e);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Map<const Matrix> mt(f.col(i).data(), v, d);
      const Matrix a = scale * mt.transpose();
      Matrix sigma = a * a.transpose();
      sigma.diagonal() += lambda;
      Eigen::LLT<Matrix> llt(sigma);
      if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
      const Vector r = (data.y.row(i) - data.mean.row(i)).transpose();
      const Vector alpha = llt.solve(r);
      double log_det = 0.0;
      for (int j = 0; j < d; ++j) log_det += 2.0 * std::log(llt.matrixLLT()(j, j));
      ell -= 0.5 * (d * kLog2Pi + log_det + r.dot(alpha));
      if (grad) {
        const Matrix sinv = llt.solve(Matrix::Identity(d, d));
        const Matrix wmat = 0.5 * (alpha * alpha.transpose() - sinv);
        const Matrix gm = 2.0 * scale.transpose() * wmat * a;
        Eigen::Map<Matrix>(gf.col(i).data(), v, d) = gm.transpose();
        g_scale += 2.0 * wmat * a * mt;
        g_lambda += wmat.diagonal();
      }
    }
    if (grad) {
      g_mu += gf;
      g_sig += gf.cwiseProduct(e);
    }
  }
  ell *= inv_mc;

  double kl = 0.0;
  std::vector<KlTerms> kls;
  kls.reserve(static_cast<std::size_t>(blocks));
  for (Eigen::Index b = 0; b < blocks; ++b) {
    kls.push_back(kl_terms(state.m.row(b).transpose(), state.s_chol[static_cast<std::size_t>(b)],
                           sp.chol, sp.kinv, grad != nullptr));
    kl += kls.back().value;
  }
  if (!grad) return ell - kl;

  g_mu *= inv_mc;
  g_sig *= inv_mc;
  g_scale *= inv_mc;
  g_lambda *= inv_mc;

  grad->z = Vector::Zero(w);
  grad->m.resize(blocks, w);
  grad->s_chol.assign(static_cast<std::size_t>(blocks), Matrix());
  grad->log_theta = Vector::Zero(state.log_theta.size());
  grad->scale_chol = g_scale.triangularView<Eigen::Lower>();
  grad->noise_raw = Vector::Zero(d);
  if (model.noise) {
    for (int j = 0; j < d; ++j) grad->noise_raw[j] = g_lambda[j] * sigmoid(state.noise_raw[j]);
  }

  Matrix bbar_total = Matrix::Zero(w, n);
  Vector h2_total = Vector::Zero(n);
  Matrix kzz_bar = Matrix::Zero(w, w);
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const auto bi = static_cast<std::size_t>(b);
    Vector h2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      h2[i] = sig(b, i) > 0.0 ? g_sig(b, i) / (2.0 * sig(b, i)) : 0.0;
    }
    const Matrix ls = state.s_chol[bi].triangularView<Eigen::Lower>();
    const Matrix bh = sp.b * h2.asDiagonal();
    grad->m.row(b) = (sp.b * g_mu.row(b).transpose()).transpose() - kls[bi].dm.transpose();
    const Matrix s_bar = bh * sp.b.transpose();
    Matrix g_ls = 2.0 * s_bar * ls - kls[bi].dls;
    grad->s_chol[bi] = g_ls.triangularView<Eigen::Lower>();
    // d sigma^2 / d B at fixed K_zx is 2 S B - K_zx; S B = ls * t.
    const Matrix sb = ls * t[bi];
    bbar_total += state.m.row(b).transpose() * g_mu.row(b) + (2.0 * sb - sp.kzx) * h2.asDiagonal();
    h2_total += h2;
    kzz_bar -= kls[bi].dk;
  }
  const Matrix kinv_bbar = sp.chol.solve(bbar_total);
  const Matrix kzx_bar = kinv_bbar - sp.b * h2_total.asDiagonal();
  kzz_bar -= kinv_bbar * sp.b.transpose();

  // Chain the kernel-matrix adjoints into theta and z.
  chain_kzz(kernel, state.z, kzz_bar, *grad);
  const auto p = static_cast<Eigen::Index>(state.log_theta.size());
  std::vector<double> dlog(static_cast<std::size_t>(p));
  double dx = 0.0;
  for (Eigen::Index a = 0; a < w; ++a) {
    for (Eigen::Index i = 0; i < n; ++i) {
      kernel.eval_with_gradient(state.z[a], data.x[i], dlog, dx);
      for (Eigen::Index k = 0; k < p; ++k) {
        grad->log_theta[k] += kzx_bar(a, i) * dlog[static_cast<std::size_t>(k)];
      }
      grad->z[a] += kzx_bar(a, i) * dx;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    kernel.eval_with_gradient(data.x[i], data.x[i], dlog, dx);
    for (Eigen::Index k = 0; k < p; ++k) {
      grad->log_theta[k] += h2_total[i] * dlog[static_cast<std::size_t>(k)];
    }
  }
  return ell - kl;
}

template <typename Fn>
void for_each_param(VariationalState& s, Fn&& fn) {
  for (Eigen::Index k = 0; k < s.z.size(); ++k) fn(s.z[k]);
  for (Eigen::Index b = 0; b < s.m.rows(); ++b) {
    for (Eigen::Index k = 0; k < s.m.cols(); ++k) fn(s.m(b, k));
  }
  for (auto& ls : s.s_chol) {
    for (Eigen::Index c = 0; c < ls.cols(); ++c) {
      for (Eigen::Index r = c; r < ls.rows(); ++r) fn(ls(r, c));
    }
  }
  for (Eigen::Index k = 0; k < s.log_theta.size(); ++k) fn(s.log_theta[k]);
  for (Eigen::Index c = 0; c < s.scale_chol.cols(); ++c) {
    for (Eigen::Index r = c; r < s.scale_chol.rows(); ++r) fn(s.scale_chol(r, c));
  }
  for (Eigen::Index k = 0; k < s.noise_raw.size(); ++k) fn(s.noise_raw[k]);
}

/// 1 for optimized coordinates, 0 for held ones.
Vector parameter_mask(const VariationalState& like, const WishartModel& model,
                      const ViConfig& config) {
  VariationalState m = like;
  for_each_param(m, [](double& x) { x = 1.0; });
  if (!config.optimize_inducing) m.z.setZero();
  if (!model.learn_kernel) m.log_theta.setZero();
  if (!model.learn_scale) m.scale_chol.setZero();
  if (!model.noise) m.noise_raw.setZero();
  return pack(m);
}

}  // namespace

Vector VariationalState::noise() const {
  return noise_raw.unaryExpr([](double x) { return softplus(x); });
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw DomainError("softplus inverse needs a positive value");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DomainError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw DomainError("Adam decay rates must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw DomainError("Adam epsilon must be positive");
  if (mc_samples < 1) throw DomainError("MC sample count must be >= 1");
  if (patience < 1) throw DomainError("patience must be >= 1");
}

void ViConfig::validate() const {
  adam.validate();
  if (max_iterations < 0) throw DomainError("max iterations must be nonnegative");
  if (restarts < 1) throw DomainError("restarts must be >= 1");
  if (inducing < 0) throw DomainError("inducing point count must be nonnegative");
  if (eval_mc_samples < 1) throw DomainError("evaluation MC count must be >= 1");
  if (max_retries < 0) throw DomainError("retry cap must be nonnegative");
}

double kl_gaussian(const Vector& m, const Matrix& s_chol, const Matrix& k_zz) {
  if (m.size() != k_zz.rows() || k_zz.rows() != k_zz.cols() || s_chol.rows() != m.size() ||
      s_chol.cols() != m.size()) {
    throw DomainError("KL inputs have inconsistent sizes");
  }
  const CholeskyFactor chol = chol_jitter(k_zz, "K_zz");
  return kl_terms(m, s_chol, chol, Matrix(), false).value;
}

double elbo_estimate(const VariationalState& state, const WishartModel& model,
                     const Observations& data, int mc_count, Rng& rng) {
  if (mc_count < 1) throw DomainError("MC sample count must be >= 1");
  const auto eps = draw_eps(model.blocks(), data.n(), mc_count, rng);
  return evaluate(state, model, data, eps, nullptr);
}

ElboGradient elbo_gradient(const VariationalState& state, const WishartModel& model,
                           const Observations& data, int mc_count, Rng& rng) {
  if (mc_count < 1) throw DomainError("MC sample count must be >= 1");
  const auto eps = draw_eps(model.blocks(), data.n(), mc_count, rng);
  ElboGradient out;
  out.elbo = evaluate(state, model, data, eps, &out.grad);
  return out;
}

VariationalState whiten(const VariationalState& state, const WishartModel& model) {
  check_shapes(state, model);
  const CholeskyFactor chol = kzz_factor(model, state);
  const auto lo = chol.lower.triangularView<Eigen::Lower>();
  VariationalState out = state;
  out.m = lo.solve(state.m.transpose()).transpose();
  for (auto& ls : out.s_chol) ls = lo.solve(Matrix(ls.triangularView<Eigen::Lower>()));
  return out;
}

VariationalState unwhiten(const VariationalState& white, const WishartModel& model) {
  check_shapes(white, model);
  const CholeskyFactor chol = kzz_factor(model, white);
  const Matrix lo = chol.lower.triangularView<Eigen::Lower>();
  VariationalState out = white;
  out.m = white.m * lo.transpose();
  for (auto& ls : out.s_chol) ls = lo * Matrix(ls.triangularView<Eigen::Lower>());
  return out;
}

ElboGradient elbo_gradient_whitened(const VariationalState& white, const WishartModel& model,
                                    const Observations& data, int mc_count, Rng& rng) {
  check_shapes(white, model);
  const CholeskyFactor chol = kzz_factor(model, white);
  const Matrix lo = chol.lower.triangularView<Eigen::Lower>();
  VariationalState state = white;
  state.m = white.m * lo.transpose();
  for (auto& ls : state.s_chol) ls = lo * Matrix(ls.triangularView<Eigen::Lower>());
  ElboGradient g = elbo_gradient(state, model, data, mc_count, rng);
  Matrix lbar = g.grad.m.transpose() * white.m;
  g.grad.m = g.grad.m * lo;
  for (std::size_t b = 0; b < white.s_chol.size(); ++b) {
    const Matrix sw = white.s_chol[b].triangularView<Eigen::Lower>();
    lbar += g.grad.s_chol[b] * sw.transpose();
    g.grad.s_chol[b] = (lo.transpose() * g.grad.s_chol[b]).triangularView<Eigen::Lower>();
  }
  lbar = lbar.triangularView<Eigen::Lower>();
  const Kernel kernel = model.kernel.with_log_params(white.log_theta);
  chain_kzz(kernel, white.z, cholesky_adjoint(chol, lbar), g.grad);
  return g;
}

Vector pack(const VariationalState& state) {
  std::vector<double> values;
  VariationalState copy = state;
  for_each_param(copy, [&](double& x) { values.push_back(x); });
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

VariationalState unpack(const Vector& flat, const VariationalState& like) {
  VariationalState out = like;
  Eigen::Index k = 0;
  for_each_param(out, [&](double& x) {
    if (k >= flat.size()) throw DomainError("flat parameter vector is too short");
    x = flat[k++];
  });
  if (k != flat.size()) throw DomainError("flat parameter vector is too long");
  return out;
}

VariationalState init_variational(const WishartModel& model, const Observations& data, int w,
                                  Rng& rng, bool perturb) {
  if (w < 1) throw DomainError("need at least one inducing point");
  VariationalState s;
  const Eigen::Index n = data.n();
  double lo = 0.0;
  double hi = 0.0;
  if (n > 0) {
    lo = data.x.minCoeff();
    hi = data.x.maxCoeff();
  }
  if (hi <= lo) w = 1;
  s.z.resize(w);
  for (int k = 0; k < w; ++k) {
    s.z[k] = w == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * k / static_cast<double>(w - 1);
  }
  s.log_theta = model.kernel.log_params();
  s.scale_chol = Matrix::Identity(model.d, model.d);
  if (perturb) {
    if (model.learn_kernel) {
      for (Eigen::Index k = 0; k < s.log_theta.size(); ++k) s.log_theta[k] += 0.5 * rng.normal();
    }
    if (model.learn_scale) {
      for (int c = 0; c < model.d; ++c) {
        for (int r = c; r < model.d; ++r) s.scale_chol(r, c) += 0.1 * rng.normal();
      }
    }
  }
  s.noise_raw = Vector::Constant(model.d, softplus_inverse(std::max(model.noise_init, 1e-12)));
  const Kernel kernel = model.kernel.with_log_params(s.log_theta);
  const CholeskyFactor chol = chol_jitter(gram(kernel, s.z), "K_zz");
  s.m.resize(model.blocks(), w);
  s.s_chol.assign(static_cast<std::size_t>(model.blocks()), 0.5 * chol.lower);
  for (Eigen::Index b = 0; b < model.blocks(); ++b) {
    Vector e(w);
    for (int k = 0; k < w; ++k) e[k] = rng.normal();
    s.m.row(b) = (0.5 * chol.lower * e).transpose();
  }
  return s;
}

namespace {

ViRun optimize(const WishartModel& model, const Observations& data, const ViConfig& config, int w,
               Rng init_rng, Rng opt_rng, bool perturb) {
  ViRun run;
  const VariationalState white = whiten(init_variational(model, data, w, init_rng, perturb), model);
  const Vector mask = parameter_mask(white, model, config);
  Vector x = pack(white);
  Vector m1 = Vector::Zero(x.size());
  Vector m2 = Vector::Zero(x.size());
  const AdamConfig& adam = config.adam;
  double best = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  double b1t = 1.0;
  double b2t = 1.0;
  for (int it = 0; it < config.max_iterations; ++it) {
    const ElboGradient g =
        elbo_gradient_whitened(unpack(x, white), model, data, adam.mc_samples, opt_rng);
    const Vector gv = pack(g.grad).cwiseProduct(mask);
    if (!std::isfinite(g.elbo) || !gv.allFinite()) {
      throw FitError("non-finite ELBO at iteration " + std::to_string(it));
    }
    run.trace.push_back(g.elbo);
    run.iterations = it + 1;
    if (g.elbo > best) {
      best = g.elbo;
      since_best = 0;
    } else if (++since_best >= adam.patience) {
      break;
    }
    b1t *= adam.beta1;
    b2t *= adam.beta2;
    m1 = adam.beta1 * m1 + (1.0 - adam.beta1) * gv;
    m2 = adam.beta2 * m2 + (1.0 - adam.beta2) * gv.cwiseAbs2();
    const Vector mhat = m1 / (1.0 - b1t);
    const Vector vhat = m2 / (1.0 - b2t);
    x.array() += adam.learning_rate * mhat.array() / (vhat.array().sqrt() + adam.epsilon);
  }
  run.state = unwhiten(unpack(x, white), model);
  return run;
}

}  // namespace

ViResult fit_vi(const WishartModel& model, const Observations& data, const ViConfig& config,
                const Rng& rng) {
  config.validate();
  model.validate();
  const int w = config.inducing > 0
                    ? config.inducing
                    : static_cast<int>(std::clamp<Eigen::Index>(data.n(), 1, 50));
  ViResult result;
  const Rng eval_stream = rng.split(0xe7a1);
  double best = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < config.restarts; ++r) {
    const Rng restart = rng.split(static_cast<std::uint64_t>(r));
    std::string last_error;
    bool done = false;
    for (int attempt = 0; attempt <= config.max_retries && !done; ++attempt) {
      const Rng stream = restart.split(static_cast<std::uint64_t>(attempt));
      try {
        ViRun run = optimize(model, data, config, w, stream.split(0), stream.split(1),
                             r > 0 || attempt > 0);
        run.retries = attempt;
        Rng eval = eval_stream;
        run.eval_elbo = elbo_estimate(run.state, model, data, config.eval_mc_samples, eval);
        if (!std::isfinite(run.eval_elbo)) throw FitError("non-finite evaluation ELBO");
        if (run.eval_elbo > best) {
          best = run.eval_elbo;
          result.best_restart = result.runs.size();
        }
        result.runs.push_back(std::move(run));
        done = true;
      } catch (const Error& e) {
        last_error = e.what();
      }
    }
    if (!done) {
      throw FitError("VI restart " + std::to_string(r) + " diverged after " +
                     std::to_string(config.max_retries + 1) + " attempts: " + last_error);
    }
  }
  result.state = result.runs[result.best_restart].state;
  return result;
}

GPConditional sparse_marginal(const VariationalState& state, const WishartModel& model,
                              Eigen::Index block, const Vector& xs) {
  check_shapes(state, model);
  if (block < 0 || block >= model.blocks()) throw DomainError("block index out of range");
  const Kernel kernel = model.kernel.with_log_params(state.log_theta);
  const CholeskyFactor chol = chol_jitter(gram(kernel, state.z), "K_zz");
  const Matrix kzs = gram(kernel, state.z, xs);
  const Matrix proj = chol.solve(kzs);
  const Matrix ls = state.s_chol[static_cast<std::size_t>(block)].triangularView<Eigen::Lower>();
  const Matrix t = ls.transpose() * proj;
  GPConditional out;
  out.mean = proj.transpose() * state.m.row(block).transpose();
  out.cov = gram(kernel, xs) - kzs.transpose() * proj + t.transpose() * t;
  out.cov = (0.5 * (out.cov + out.cov.transpose())).eval();
  return out;
}

std::vector<CovariancePath> predict_vi(const VariationalState& state, const WishartModel& model,
                                       const Vector& xs_test, int draw_count, Rng& rng) {
  check_shapes(state, model);
  if (draw_count < 0) throw DomainError("draw count must be nonnegative");
  std::vector<CovariancePath> out;
  if (draw_count == 0) return out;
  const Kernel kernel = model.kernel.with_log_params(state.log_theta);
  const CholeskyFactor chol = chol_jitter(gram(kernel, state.z), "K_zz");
  const Matrix kzs = gram(kernel, state.z, xs_test);
  const Matrix proj = chol.solve(kzs);
  Matrix cond = gram(kernel, xs_test) - kzs.transpose() * proj;
  cond = (0.5 * (cond + cond.transpose())).eval();
  const CholeskyFactor cond_chol = chol_jitter(cond, "sparse predictive covariance");
  const Eigen::Index blocks = model.blocks();
  const Eigen::Index w = state.w();

  LatentState s;
  s.log_theta = state.log_theta;
  s.scale_chol = state.scale_chol.triangularView<Eigen::Lower>();
  s.noise = model.noise ? state.noise() : Vector::Zero(model.d);
  s.f.resize(blocks, xs_test.size());
  out.reserve(static_cast<std::size_t>(draw_count));
  for (int k = 0; k < draw_count; ++k) {
    for (Eigen::Index b = 0; b < blocks; ++b) {
      Vector e(w);
      for (Eigen::Index c = 0; c < w; ++c) e[c] = rng.normal();
      const Vector u = state.m.row(b).transpose() +
                       state.s_chol[static_cast<std::size_t>(b)].triangularView<Eigen::Lower>() * e;
      s.f.row(b) = (proj.transpose() * u).transpose();
    }
    s.f += sample_gp_prior(cond_chol, blocks, rng);
    out.push_back(covariance_path(s, xs_test));
  }
  return out;
}

}  // namespace gwp
