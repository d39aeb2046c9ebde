#pragma once

#include "gwp/common.hpp"
#include "gwp/diagnostics.hpp"
#include "gwp/gp.hpp"
#include "gwp/rng.hpp"
#include "gwp/wishart.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gwp {

struct GibbsConfig {
  /// Random-walk step for theta (log axis) and L.
  double step_size = 0.01;
  int thinning = 1000;
  int burn_in = 0;
  int chains = 4;
  int draws_per_chain = 250;
  /// Likelihood exponent; 1 for plain MCMC.
  double beta = 1.0;

  void validate() const;
};

struct AcceptanceCounts {
  std::uint64_t theta_proposed = 0;
  std::uint64_t theta_accepted = 0;
  std::uint64_t scale_proposed = 0;
  std::uint64_t scale_accepted = 0;
  std::uint64_t ess_blocks = 0;
  std::uint64_t ess_proposals = 0;

  [[nodiscard]] double theta_rate() const;
  [[nodiscard]] double scale_rate() const;
  AcceptanceCounts& operator+=(const AcceptanceCounts& other);
};

using LogDensity = std::function<double(const Vector&)>;

struct EssResult {
  Vector f;
  double loglik = 0.0;
  int proposals = 0;
};

/// One elliptical slice sampling transition for f ~ N(0, K) * exp(loglik(f)).
/// Throws InvalidStateError when loglik(f) is not finite.
EssResult ess_transition(const Vector& f, double current_loglik, const CholeskyFactor& chol_k,
                         const LogDensity& loglik, Rng& rng);

Vector ess_update_block(const Vector& f, const CholeskyFactor& chol_k, const LogDensity& loglik,
                        Rng& rng);

struct RwmhResult {
  Vector value;
  bool accepted = false;
  double logdensity = 0.0;
};

/// Gaussian random-walk Metropolis step value + step * z.
RwmhResult rwmh_update(const Vector& value, double current_logdensity, const LogDensity& logdensity,
                       double step, Rng& rng);
RwmhResult rwmh_update(const Vector& value, const LogDensity& logdensity, double step, Rng& rng);

/// Gibbs kernel over (F, theta, L) that keeps the K_xx factor and the
/// untempered log-likelihood of the current state alongside it.
class GibbsSampler {
 public:
  struct Workspace {
    LatentState state;
    CholeskyFactor chol_k;
    double gp_logprior = 0.0;
    double loglik = 0.0;
    AcceptanceCounts counts;
  };

  GibbsSampler(const WishartModel& model, const Observations& data, double step_size);

  [[nodiscard]] Workspace prepare(LatentState state) const;
  /// ESS on every GP block, then RWMH on theta (likelihood-free
  /// conditional), then a joint RWMH move on the lower triangle of L.
  void cycle(Workspace& ws, double beta, Rng& rng) const;

  [[nodiscard]] const WishartModel& model() const { return model_; }
  [[nodiscard]] const Observations& data() const { return data_; }

 private:
  [[nodiscard]] CholeskyFactor factor_k(const Vector& log_theta) const;
  double scale_log_prior(const Matrix& scale_chol) const;

  const WishartModel& model_;
  const Observations& data_;
  double step_size_;
  std::vector<HyperPrior> priors_;
};

LatentState gibbs_cycle(const LatentState& state, const WishartModel& model,
                        const Observations& data, const GibbsConfig& config, Rng& rng);

struct Chain {
  std::vector<LatentState> draws;
  AcceptanceCounts acceptance;
};

struct ChainsResult {
  std::vector<Chain> chains;
  /// Convergence over theta, L and a few Sigma entries; empty names when
  /// chains are too short to assess.
  PsrfReport psrf;
  /// (retained draws per chain, max PSRF) at growing prefixes.
  std::vector<std::pair<std::size_t, double>> psrf_trace;
};

class PartialResultsError : public Error {
 public:
  PartialResultsError(const std::string& what, std::vector<Chain> completed)
      : Error(what), completed_(std::move(completed)) {}
  [[nodiscard]] const std::vector<Chain>& completed() const { return completed_; }

 private:
  std::vector<Chain> completed_;
};

/// Independent chains from prior initializations; chain c uses rng.split(c).
/// Each chain runs burn_in cycles, then keeps every thinning-th state until
/// draws_per_chain are retained.
ChainsResult run_chains(const WishartModel& model, const Observations& data,
                        const GibbsConfig& config, const Rng& rng);

/// Scalars monitored for convergence: log theta, lower L and Sigma entries at
/// up to five inputs.
std::vector<std::string> monitored_names(const WishartModel& model, Eigen::Index n);
Vector monitored_values(const WishartModel& model, const LatentState& state);

PsrfReport convergence_report(const std::vector<Chain>& chains, const WishartModel& model);

/// Combines chains by drawing `per_chain` states from each without
/// replacement; shorter chains contribute all of their draws.
std::vector<LatentState> pool_draws(const std::vector<Chain>& chains, std::size_t per_chain,
                                    Rng& rng);

}  // namespace gwp
