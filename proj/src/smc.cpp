#include "gwp/smc.hpp"

#include "gwp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gwp {

void SmcConfig::validate() const {
  if (particles < 2) throw DomainError("SMC needs at least two particles");
  if (!(ess_fraction > 0.0 && ess_fraction < 1.0)) {
    throw DomainError("ESS target fraction must lie in (0, 1)");
  }
  if (mutation_steps < 0) throw DomainError("mutation steps must be nonnegative");
  if (max_cycles < 1) throw DomainError("max cycles must be >= 1");
  if (!(beta_tolerance > 0.0)) throw DomainError("beta tolerance must be positive");
  if (!(step_size > 0.0)) throw DomainError("step size must be positive");
}

IncrementalWeights incremental_weights(const Vector& loglik, double delta_beta) {
  const Eigen::Index s = loglik.size();
  if (s == 0) throw DomainError("incremental weights need at least one particle");
  if (!(delta_beta >= 0.0)) throw DomainError("temperature increment must be nonnegative");
  Vector logw(s);
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < s; ++i) {
    const double ll = loglik[i];
    if (std::isnan(ll)) throw DomainError("NaN log-likelihood in incremental weights");
    logw[i] = ll == -std::numeric_limits<double>::infinity()
                  ? -std::numeric_limits<double>::infinity()
                  : delta_beta * ll;
    top = std::max(top, logw[i]);
  }
  if (!std::isfinite(top)) {
    throw DegenerateError("all particles have zero incremental weight");
  }
  IncrementalWeights out;
  // Scalar exp: the vectorized one clamps -inf to a denormal instead of 0.
  out.weights.resize(s);
  for (Eigen::Index i = 0; i < s; ++i) out.weights[i] = std::exp(logw[i] - top);
  const double total = out.weights.sum();
  out.weights /= total;
  out.log_evidence_increment = top + std::log(total / static_cast<double>(s));
  return out;
}

double effective_sample_size(const Vector& weights) {
  const double sq = weights.squaredNorm();
  if (!(sq > 0.0)) throw DegenerateError("ESS of all-zero weights");
  return 1.0 / sq;
}

double find_next_beta(const Vector& loglik, double beta, double ess_fraction, std::size_t particles,
                      double tol) {
  if (!(beta < 1.0)) throw DomainError("temperature already at 1; no increment to search");
  if (!(ess_fraction > 0.0 && ess_fraction < 1.0)) {
    throw DomainError("ESS target fraction must lie in (0, 1)");
  }
  const double target = ess_fraction * static_cast<double>(particles);
  const auto ess_at = [&](double delta) {
    return effective_sample_size(incremental_weights(loglik, delta).weights);
  };
  const double cap = 1.0 - beta;
  if (ess_at(cap) >= target) return cap;
  double lo = 0.0;
  double hi = cap;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (ess_at(mid) >= target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo > 0.0 ? lo : hi;
}

std::vector<std::size_t> systematic_indices(const Vector& weights, Rng& rng) {
  const auto s = static_cast<std::size_t>(weights.size());
  std::vector<std::size_t> out(s);
  const double offset = rng.uniform();
  double cumulative = weights[0];
  std::size_t j = 0;
  for (std::size_t k = 0; k < s; ++k) {
    const double position = (offset + static_cast<double>(k)) / static_cast<double>(s);
    while (position > cumulative && j + 1 < s) {
      ++j;
      cumulative += weights[static_cast<Eigen::Index>(j)];
    }
    out[k] = j;
  }
  return out;
}

ParticleSwarm resample_systematic(const ParticleSwarm& swarm, Rng& rng) {
  const std::size_t s = swarm.size();
  if (s == 0 || static_cast<std::size_t>(swarm.weights.size()) != s) {
    throw DomainError("swarm weights do not match the particle count");
  }
  const auto index = systematic_indices(swarm.weights, rng);
  ParticleSwarm out;
  out.beta = swarm.beta;
  out.particles.reserve(s);
  out.loglik.resize(static_cast<Eigen::Index>(s));
  for (std::size_t k = 0; k < s; ++k) {
    out.particles.push_back(swarm.particles[index[k]]);
    out.loglik[static_cast<Eigen::Index>(k)] = swarm.loglik[static_cast<Eigen::Index>(index[k])];
  }
  out.weights = Vector::Constant(static_cast<Eigen::Index>(s), 1.0 / static_cast<double>(s));
  return out;
}

std::pair<LatentState, double> mutate_particle(const LatentState& particle,
                                               const GibbsSampler& sampler, double beta,
                                               int steps, Rng stream) {
  auto ws = sampler.prepare(particle);
  for (int t = 0; t < steps; ++t) sampler.cycle(ws, beta, stream);
  return {std::move(ws.state), ws.loglik};
}

ParticleSwarm mutate(const ParticleSwarm& swarm, const WishartModel& model,
                     const Observations& data, int steps, double step_size, const Rng& rng,
                     std::vector<std::string>* log) {
  if (steps < 0) throw DomainError("mutation steps must be nonnegative");
  if (steps == 0) return swarm;
  const GibbsSampler sampler(model, data, step_size);
  const std::size_t s = swarm.size();
  ParticleSwarm out = swarm;
  std::vector<std::string> failures(s);
  parallel_for(s, [&](std::size_t i) {
    try {
      auto [state, ll] = mutate_particle(swarm.particles[i], sampler, swarm.beta, steps, rng.split(i));
      out.particles[i] = std::move(state);
      out.loglik[static_cast<Eigen::Index>(i)] = ll;
    } catch (const std::exception& e) {
      failures[i] = e.what();
      if (failures[i].empty()) failures[i] = "unknown error";
    }
  });
  std::vector<std::size_t> ok;
  for (std::size_t i = 0; i < s; ++i) {
    if (failures[i].empty()) ok.push_back(i);
  }
  if (ok.empty()) throw DegenerateError("every particle failed during mutation: " + failures[0]);
  if (ok.size() != s) {
    Rng repair = rng.split(0xfa11);
    for (std::size_t i = 0; i < s; ++i) {
      if (failures[i].empty()) continue;
      const std::size_t donor = ok[repair.below(ok.size())];
      out.particles[i] = out.particles[donor];
      out.loglik[static_cast<Eigen::Index>(i)] = out.loglik[static_cast<Eigen::Index>(donor)];
      if (log) {
        log->push_back("particle " + std::to_string(i) + " replaced by " + std::to_string(donor) +
                       " after mutation failure: " + failures[i]);
      }
    }
  }
  return out;
}

SmcResult run_smc(const WishartModel& model, const Observations& data, const SmcConfig& config,
                  const Rng& rng, const SmcCallback& on_cycle, std::optional<SmcCheckpoint> resume) {
  config.validate();
  model.validate();
  const auto s = static_cast<std::size_t>(config.particles);

  SmcCheckpoint state;
  if (resume) {
    state = std::move(*resume);
    if (state.swarm.size() != s) throw DomainError("checkpoint particle count differs from config");
  } else {
    state.swarm.particles.resize(s);
    state.swarm.loglik.resize(static_cast<Eigen::Index>(s));
    const Rng init = rng.split(0);
    parallel_for(s, [&](std::size_t i) {
      Rng stream = init.split(i);
      state.swarm.particles[i] = sample_prior_state(model, data.x, stream);
      state.swarm.loglik[static_cast<Eigen::Index>(i)] =
          log_likelihood(state.swarm.particles[i], data);
    });
    state.swarm.weights = Vector::Constant(static_cast<Eigen::Index>(s), 1.0 / static_cast<double>(s));
    state.swarm.beta = 0.0;
    state.beta_ladder = {0.0};
  }

  SmcResult result;
  while (state.swarm.beta < 1.0) {
    if (state.cycle >= config.max_cycles) {
      throw NonConvergenceError("SMC reached " + std::to_string(config.max_cycles) +
                                    " cycles before beta = 1",
                                state.beta_ladder);
    }
    const Rng cycle_rng = rng.split(static_cast<std::uint64_t>(state.cycle) + 1);
    const double delta = find_next_beta(state.swarm.loglik, state.swarm.beta, config.ess_fraction, s,
                                        config.beta_tolerance);
    const IncrementalWeights iw = incremental_weights(state.swarm.loglik, delta);
    double next = state.swarm.beta + delta;
    if (1.0 - next < 1e-12) next = 1.0;
    state.log_evidence += iw.log_evidence_increment;
    state.ess_history.push_back(effective_sample_size(iw.weights));
    state.beta_ladder.push_back(next);
    state.swarm.weights = iw.weights;
    state.swarm.beta = next;

    Rng resample_rng = cycle_rng.split(0);
    state.swarm = resample_systematic(state.swarm, resample_rng);
    state.swarm = mutate(state.swarm, model, data, config.mutation_steps, config.step_size,
                         cycle_rng.split(1), &result.events);
    ++state.cycle;
    if (on_cycle) on_cycle(state);
  }

  result.swarm = std::move(state.swarm);
  result.beta_ladder = std::move(state.beta_ladder);
  result.ess_history = std::move(state.ess_history);
  result.log_evidence = state.log_evidence;
  result.cycles = state.cycle;
  return result;
}

}  // namespace gwp
