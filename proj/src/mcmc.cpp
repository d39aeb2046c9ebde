#include "gwp/mcmc.hpp"

#include "gwp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace gwp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace

void GibbsConfig::validate() const {
  if (!(step_size > 0.0)) throw DomainError("step size must be positive");
  if (thinning < 1) throw DomainError("thinning must be >= 1");
  if (burn_in < 0) throw DomainError("burn-in must be nonnegative");
  if (chains < 1) throw DomainError("need at least one chain");
  if (draws_per_chain < 0) throw DomainError("draws per chain must be nonnegative");
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("beta must lie in [0, 1]");
}

double AcceptanceCounts::theta_rate() const {
  return theta_proposed ? static_cast<double>(theta_accepted) / static_cast<double>(theta_proposed)
                        : 0.0;
}

double AcceptanceCounts::scale_rate() const {
  return scale_proposed ? static_cast<double>(scale_accepted) / static_cast<double>(scale_proposed)
                        : 0.0;
}

AcceptanceCounts& AcceptanceCounts::operator+=(const AcceptanceCounts& o) {
  theta_proposed += o.theta_proposed;
  theta_accepted += o.theta_accepted;
  scale_proposed += o.scale_proposed;
  scale_accepted += o.scale_accepted;
  ess_blocks += o.ess_blocks;
  ess_proposals += o.ess_proposals;
  return *this;
}

EssResult ess_transition(const Vector& f, double current_loglik, const CholeskyFactor& chol_k,
                         const LogDensity& loglik, Rng& rng) {
  if (!std::isfinite(current_loglik)) {
    throw InvalidStateError("elliptical slice sampling started from a state with non-finite log-likelihood");
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const Vector nu = sample_mvn(Vector::Zero(f.size()), chol_k, rng);
  const double threshold = current_loglik + std::log(rng.uniform());
  double angle = two_pi * rng.uniform();
  double lo = angle - two_pi;
  double hi = angle;
  EssResult out;
  for (;;) {
    ++out.proposals;
    Vector proposal = f * std::cos(angle) + nu * std::sin(angle);
    const double ll = loglik(proposal);
    if (ll > threshold) {
      out.f = std::move(proposal);
      out.loglik = ll;
      return out;
    }
    if (angle < 0.0) {
      lo = angle;
    } else {
      hi = angle;
    }
    if (hi - lo < 1e-12) {
      // Bracket collapsed onto the current point, which lies on the slice.
      out.f = f;
      out.loglik = current_loglik;
      return out;
    }
    angle = lo + (hi - lo) * rng.uniform();
  }
}

Vector ess_update_block(const Vector& f, const CholeskyFactor& chol_k, const LogDensity& loglik,
                        Rng& rng) {
  return ess_transition(f, loglik(f), chol_k, loglik, rng).f;
}

RwmhResult rwmh_update(const Vector& value, double current_logdensity, const LogDensity& logdensity,
                       double step, Rng& rng) {
  if (!(step > 0.0)) throw DomainError("random-walk step must be positive");
  if (!std::isfinite(current_logdensity)) {
    throw InvalidStateError("random-walk Metropolis started from a state with non-finite density");
  }
  Vector proposal = value;
  for (Eigen::Index i = 0; i < proposal.size(); ++i) proposal[i] += step * rng.normal();
  const double proposed = logdensity(proposal);
  const double log_u = std::log(rng.uniform());
  if (std::isfinite(proposed) && log_u < proposed - current_logdensity) {
    return {std::move(proposal), true, proposed};
  }
  return {value, false, current_logdensity};
}

RwmhResult rwmh_update(const Vector& value, const LogDensity& logdensity, double step, Rng& rng) {
  return rwmh_update(value, logdensity(value), logdensity, step, rng);
}

GibbsSampler::GibbsSampler(const WishartModel& model, const Observations& data, double step_size)
    : model_(model), data_(data), step_size_(step_size), priors_(model.priors()) {
  if (!(step_size > 0.0)) throw DomainError("step size must be positive");
}

CholeskyFactor GibbsSampler::factor_k(const Vector& log_theta) const {
  const Kernel kernel = model_.kernel.with_log_params(log_theta);
  return chol_jitter(gram(kernel, data_.x), "K_xx");
}

double GibbsSampler::scale_log_prior(const Matrix& scale_chol) const {
  double total = 0.0;
  for (Eigen::Index j = 0; j < scale_chol.rows(); ++j) {
    for (Eigen::Index o = 0; o <= j; ++o) {
      total += -0.5 * (kLog2Pi + scale_chol(j, o) * scale_chol(j, o));
    }
  }
  return total;
}

GibbsSampler::Workspace GibbsSampler::prepare(LatentState state) const {
  if (state.f.rows() != model_.blocks() || state.f.cols() != data_.n()) {
    throw DomainError("latent state does not match the model and data shapes");
  }
  Workspace ws;
  ws.state = std::move(state);
  if (data_.n() > 0) {
    ws.chol_k = factor_k(ws.state.log_theta);
    ws.gp_logprior = gp_block_log_prior(ws.state.f, ws.chol_k);
  }
  ws.loglik = log_likelihood(ws.state, data_);
  return ws;
}

void GibbsSampler::cycle(Workspace& ws, double beta, Rng& rng) const {
  const Eigen::Index n = data_.n();
  LatentState& s = ws.state;
  const bool tempered = beta > 0.0;

  if (n > 0) {
    for (Eigen::Index b = 0; b < model_.blocks(); ++b) {
      const LogDensity block_loglik = [&](const Vector& row) {
        if (!tempered) return 0.0;
        s.f.row(b) = row.transpose();
        return beta * log_likelihood(s, data_);
      };
      const Vector current = s.f.row(b).transpose();
      EssResult r = ess_transition(current, tempered ? beta * ws.loglik : 0.0, ws.chol_k,
                                   block_loglik, rng);
      s.f.row(b) = r.f.transpose();
      if (tempered) ws.loglik = r.loglik / beta;
      ws.counts.ess_blocks += 1;
      ws.counts.ess_proposals += static_cast<std::uint64_t>(r.proposals);
    }
    if (!tempered) ws.loglik = log_likelihood(s, data_);
    ws.gp_logprior = gp_block_log_prior(s.f, ws.chol_k);
  }

  if (model_.learn_kernel) {
    CholeskyFactor proposed_chol;
    double proposed_gp = 0.0;
    const LogDensity theta_target = [&](const Vector& log_theta) {
      if (!log_theta.allFinite()) return -std::numeric_limits<double>::infinity();
      double lp = log_prior_log_axis(priors_, log_theta);
      if (n > 0) {
        try {
          proposed_chol = factor_k(log_theta);
        } catch (const SingularMatrixError&) {
          return -std::numeric_limits<double>::infinity();
        }
        proposed_gp = gp_block_log_prior(s.f, proposed_chol);
        lp += proposed_gp;
      }
      return lp;
    };
    const double current = log_prior_log_axis(priors_, s.log_theta) + ws.gp_logprior;
    RwmhResult r = rwmh_update(s.log_theta, current, theta_target, step_size_, rng);
    ws.counts.theta_proposed += 1;
    if (r.accepted) {
      ws.counts.theta_accepted += 1;
      s.log_theta = r.value;
      if (n > 0) {
        ws.chol_k = std::move(proposed_chol);
        ws.gp_logprior = proposed_gp;
      }
    }
  }

  if (model_.learn_scale) {
    const Eigen::Index d = model_.d;
    const auto packed = static_cast<Eigen::Index>(d * (d + 1) / 2);
    Vector current(packed);
    for (Eigen::Index j = 0, k = 0; j < d; ++j) {
      for (Eigen::Index o = 0; o <= j; ++o) current[k++] = s.scale_chol(j, o);
    }
    LatentState trial = s;
    double trial_loglik = ws.loglik;
    const LogDensity scale_target = [&](const Vector& packed_l) {
      for (Eigen::Index j = 0, k = 0; j < d; ++j) {
        for (Eigen::Index o = 0; o <= j; ++o) trial.scale_chol(j, o) = packed_l[k++];
      }
      double lp = scale_log_prior(trial.scale_chol);
      if (tempered) {
        try {
          trial_loglik = log_likelihood(trial, data_);
        } catch (const SingularMatrixError&) {
          return -std::numeric_limits<double>::infinity();
        }
        lp += beta * trial_loglik;
      }
      return lp;
    };
    const double current_density =
        scale_log_prior(s.scale_chol) + (tempered ? beta * ws.loglik : 0.0);
    RwmhResult r = rwmh_update(current, current_density, scale_target, step_size_, rng);
    ws.counts.scale_proposed += 1;
    if (r.accepted) {
      ws.counts.scale_accepted += 1;
      s.scale_chol = trial.scale_chol;
      ws.loglik = tempered ? trial_loglik : log_likelihood(s, data_);
    }
  }
}

LatentState gibbs_cycle(const LatentState& state, const WishartModel& model,
                        const Observations& data, const GibbsConfig& config, Rng& rng) {
  config.validate();
  const GibbsSampler sampler(model, data, config.step_size);
  auto ws = sampler.prepare(state);
  sampler.cycle(ws, config.beta, rng);
  return ws.state;
}

std::vector<std::string> monitored_names(const WishartModel& model, Eigen::Index n) {
  std::vector<std::string> names;
  if (model.learn_kernel) {
    for (const auto& p : model.kernel.param_names()) names.push_back("log_theta:" + p);
  }
  if (model.learn_scale) {
    for (int j = 0; j < model.d; ++j) {
      for (int o = 0; o <= j; ++o) {
        names.push_back("L[" + std::to_string(j) + "," + std::to_string(o) + "]");
      }
    }
  }
  const Eigen::Index points = std::min<Eigen::Index>(n, 5);
  for (Eigen::Index p = 0; p < points; ++p) {
    const Eigen::Index i = points == 1 ? 0 : p * (n - 1) / (points - 1);
    for (int c = 0; c < model.d; ++c) {
      for (int r = 0; r <= c; ++r) {
        names.push_back("Sigma[" + std::to_string(i) + "][" + std::to_string(r) + "," +
                        std::to_string(c) + "]");
      }
    }
  }
  return names;
}

Vector monitored_values(const WishartModel& model, const LatentState& state) {
  std::vector<double> out;
  if (model.learn_kernel) {
    for (Eigen::Index k = 0; k < state.log_theta.size(); ++k) out.push_back(state.log_theta[k]);
  }
  if (model.learn_scale) {
    for (int j = 0; j < model.d; ++j) {
      for (int o = 0; o <= j; ++o) out.push_back(state.scale_chol(j, o));
    }
  }
  const Eigen::Index n = state.f.cols();
  const Eigen::Index points = std::min<Eigen::Index>(n, 5);
  for (Eigen::Index p = 0; p < points; ++p) {
    const Eigen::Index i = points == 1 ? 0 : p * (n - 1) / (points - 1);
    const Matrix sigma = construct_sigma(state, i);
    for (int c = 0; c < model.d; ++c) {
      for (int r = 0; r <= c; ++r) out.push_back(sigma(r, c));
    }
  }
  return Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

namespace {

PsrfReport report_for_prefix(const std::vector<Chain>& chains, const WishartModel& model,
                             std::size_t length) {
  const Eigen::Index n = chains.front().draws.front().f.cols();
  const auto names = monitored_names(model, n);
  std::vector<std::vector<Vector>> traces(names.size(),
                                          std::vector<Vector>(chains.size(), Vector(static_cast<Eigen::Index>(length))));
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (std::size_t t = 0; t < length; ++t) {
      const Vector values = monitored_values(model, chains[c].draws[t]);
      for (std::size_t k = 0; k < names.size(); ++k) {
        traces[k][c][static_cast<Eigen::Index>(t)] = values[static_cast<Eigen::Index>(k)];
      }
    }
  }
  PsrfReport report;
  report.names = names;
  report.converged = true;
  for (const auto& t : traces) {
    double value = std::numeric_limits<double>::quiet_NaN();
    try {
      value = psrf(t);
    } catch (const DegenerateError&) {
      report.converged = false;
    }
    if (!(value < kPsrfThreshold)) report.converged = false;
    report.values.push_back(value);
  }
  return report;
}

}  // namespace

PsrfReport convergence_report(const std::vector<Chain>& chains, const WishartModel& model) {
  if (chains.size() < 2) return {};
  std::size_t length = chains.front().draws.size();
  for (const auto& c : chains) length = std::min(length, c.draws.size());
  if (length < 2) return {};
  return report_for_prefix(chains, model, length);
}

ChainsResult run_chains(const WishartModel& model, const Observations& data,
                        const GibbsConfig& config, const Rng& rng) {
  config.validate();
  model.validate();
  const GibbsSampler sampler(model, data, config.step_size);
  std::vector<Chain> chains(static_cast<std::size_t>(config.chains));
  std::vector<bool> done(chains.size(), false);
  std::vector<std::string> failures(chains.size());
  parallel_for(chains.size(), [&](std::size_t c) {
    try {
      Rng stream = rng.split(c);
      Rng init = stream.split(0x1417);
      auto ws = sampler.prepare(sample_prior_state(model, data.x, init));
      for (int t = 0; t < config.burn_in; ++t) sampler.cycle(ws, config.beta, stream);
      Chain& chain = chains[c];
      chain.draws.reserve(static_cast<std::size_t>(config.draws_per_chain));
      for (int k = 0; k < config.draws_per_chain; ++k) {
        for (int t = 0; t < config.thinning; ++t) sampler.cycle(ws, config.beta, stream);
        chain.draws.push_back(ws.state);
      }
      chain.acceptance = ws.counts;
      done[c] = true;
    } catch (const std::exception& e) {
      failures[c] = e.what();
    }
  });
  std::vector<Chain> completed;
  std::string message;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    if (done[c]) {
      completed.push_back(chains[c]);
    } else {
      message += "chain " + std::to_string(c) + ": " + failures[c] + "; ";
    }
  }
  if (completed.size() != chains.size()) {
    throw PartialResultsError("MCMC aborted: " + message, std::move(completed));
  }

  ChainsResult result;
  result.chains = std::move(chains);
  result.psrf = convergence_report(result.chains, model);
  const std::size_t length = result.chains.front().draws.size();
  if (result.chains.size() >= 2 && length >= 4) {
    for (int k = 1; k <= 10; ++k) {
      const std::size_t prefix = std::max<std::size_t>(2, length * static_cast<std::size_t>(k) / 10);
      const PsrfReport r = report_for_prefix(result.chains, model, prefix);
      double worst = 0.0;
      for (double v : r.values) worst = std::isnan(v) ? v : std::max(worst, v);
      if (result.psrf_trace.empty() || result.psrf_trace.back().first != prefix) {
        result.psrf_trace.emplace_back(prefix, worst);
      }
    }
  }
  return result;
}

std::vector<LatentState> pool_draws(const std::vector<Chain>& chains, std::size_t per_chain,
                                    Rng& rng) {
  std::vector<LatentState> out;
  for (const auto& chain : chains) {
    const std::size_t n = chain.draws.size();
    if (n <= per_chain) {
      out.insert(out.end(), chain.draws.begin(), chain.draws.end());
      continue;
    }
    std::vector<std::size_t> index(n);
    std::iota(index.begin(), index.end(), 0);
    // Partial Fisher-Yates: the first per_chain slots become a uniform subset.
    for (std::size_t i = 0; i < per_chain; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
      std::swap(index[i], index[j]);
    }
    for (std::size_t i = 0; i < per_chain; ++i) out.push_back(chain.draws[index[i]]);
  }
  return out;
}

}  // namespace gwp
