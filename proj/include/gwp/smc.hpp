#pragma once

#include "gwp/common.hpp"
#include "gwp/mcmc.hpp"
#include "gwp/rng.hpp"
#include "gwp/wishart.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gwp {

/// Weighted particle population at temperature beta.
struct ParticleSwarm {
  std::vector<LatentState> particles;
  Vector weights;
  double beta = 0.0;
  /// Untempered log-likelihood of each particle.
  Vector loglik;

  [[nodiscard]] std::size_t size() const { return particles.size(); }
};

struct SmcConfig {
  int particles = 1000;
  double ess_fraction = 0.5;
  int mutation_steps = 2000;
  int max_cycles = 500;
  double beta_tolerance = 1e-6;
  /// Random-walk step used inside the mutation Gibbs cycles.
  double step_size = 0.01;

  void validate() const;
};

struct IncrementalWeights {
  Vector weights;
  /// log of the mean incremental weight, i.e. the log-evidence increment.
  double log_evidence_increment = 0.0;
};

/// w_i proportional to exp(delta_beta * loglik_i), normalized via log-sum-exp.
/// Particles with loglik = -inf get weight 0.
IncrementalWeights incremental_weights(const Vector& loglik, double delta_beta);

/// 1 / sum w_i^2.
double effective_sample_size(const Vector& weights);

/// Largest temperature increment whose incremental weights keep
/// ESS >= ess_fraction * particles, found by bisection; returns 1 - beta when
/// that whole step already keeps the ESS above target.
double find_next_beta(const Vector& loglik, double beta, double ess_fraction, std::size_t particles,
                      double tol);

/// Systematic resampling (single uniform offset); indices of the survivors.
std::vector<std::size_t> systematic_indices(const Vector& weights, Rng& rng);

ParticleSwarm resample_systematic(const ParticleSwarm& swarm, Rng& rng);

/// `steps` tempered Gibbs cycles per particle; particle i uses rng.split(i).
/// A particle whose mutation throws is replaced by a copy of a randomly
/// chosen successful particle; events are appended to `log` when given.
ParticleSwarm mutate(const ParticleSwarm& swarm, const WishartModel& model,
                     const Observations& data, int steps, double step_size, const Rng& rng,
                     std::vector<std::string>* log = nullptr);

/// Mutates a single particle with its own stream; returns the new state and
/// its untempered log-likelihood.
std::pair<LatentState, double> mutate_particle(const LatentState& particle,
                                               const GibbsSampler& sampler, double beta,
                                               int steps, Rng stream);

struct SmcCheckpoint {
  ParticleSwarm swarm;
  std::vector<double> beta_ladder;
  std::vector<double> ess_history;
  double log_evidence = 0.0;
  int cycle = 0;
};

struct SmcResult {
  ParticleSwarm swarm;
  std::vector<double> beta_ladder;
  /// ESS right after each reweighting step (before resampling).
  std::vector<double> ess_history;
  double log_evidence = 0.0;
  int cycles = 0;
  std::vector<std::string> events;
};

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, std::vector<double> ladder)
      : Error(what), ladder_(std::move(ladder)) {}
  [[nodiscard]] const std::vector<double>& ladder() const { return ladder_; }

 private:
  std::vector<double> ladder_;
};

using SmcCallback = std::function<void(const SmcCheckpoint&)>;

/// Adaptive-tempering SMC: prior initialization, then
/// reweight -> resample -> mutate until beta reaches 1. Cycle t draws its
/// randomness from rng.split(t + 1), so a run resumed from a checkpoint
/// replays the uninterrupted run exactly.
SmcResult run_smc(const WishartModel& model, const Observations& data, const SmcConfig& config,
                  const Rng& rng, const SmcCallback& on_cycle = {},
                  std::optional<SmcCheckpoint> resume = std::nullopt);

}  // namespace gwp
