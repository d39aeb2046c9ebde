#pragma once

#include "gwp/common.hpp"

#include <string>
#include <utility>
#include <vector>

namespace gwp {

inline constexpr double kPsrfThreshold = 1.1;

struct PsrfReport {
  std::vector<std::string> names;
  std::vector<double> values;
  bool converged = false;

  [[nodiscard]] double max() const;
};

/// Gelman-Rubin potential scale reduction factor, sqrt(V / W) with
/// V = (m-1)/m W + B/m. Needs >= 2 chains of equal length >= 2.
double psrf(const std::vector<Vector>& chains);

/// PSRF for every named scalar; traces[k][c] is the trace of scalar k in chain c.
PsrfReport psrf_report(const std::vector<std::string>& names,
                       const std::vector<std::vector<Vector>>& traces);

/// Mean over unique entries (upper triangle incl. diagonal) and inputs of the
/// squared difference between two aligned paths.
double mse_mean_path(const CovariancePath& estimated, const CovariancePath& truth);

/// mse_mean_path averaged over draws.
double mse_samples(const std::vector<CovariancePath>& draws, const CovariancePath& truth);

/// (1/n) sum_i log N(y_i; mean_i, Sigma_i).
double avg_loglik(const Matrix& y_test, const Matrix& mean, const CovariancePath& sigma);

/// KL(N(mean0, cov0) || N(mean1, cov1)).
double kl_mvn(const Vector& mean0, const Matrix& cov0, const Vector& mean1, const Matrix& cov1);

/// Shortest interval holding ceil(level * N) of the samples.
std::pair<double, double> hdi(std::vector<double> samples, double level);

enum class DynamicsLabel { Uncorrelated, Static, Dynamic };

std::string to_string(DynamicsLabel label);

struct DynamicsVerdict {
  std::pair<int, int> pair;
  DynamicsLabel label = DynamicsLabel::Uncorrelated;
  double level = 0.95;
  double rope = 0.005;
  /// Per-input HDI bounds before ROPE widening.
  Vector lower;
  Vector upper;
  std::vector<std::string> warnings;
};

/// Classifies Sigma_ij(x) as uncorrelated / static / dynamic from posterior
/// draws via pointwise HDIs widened by the ROPE half-width.
DynamicsVerdict dynamics_test(const std::vector<CovariancePath>& draws, std::pair<int, int> pair,
                              double level = 0.95, double rope = 0.005);

/// Per draw: max_x Sigma_ij(x) - min_x Sigma_ij(x).
std::vector<double> effect_size_distribution(const std::vector<CovariancePath>& draws,
                                             std::pair<int, int> pair);

}  // namespace gwp
