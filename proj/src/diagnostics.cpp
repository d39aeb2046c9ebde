#include "gwp/diagnostics.hpp"

#include "gwp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gwp {

double PsrfReport::max() const {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

double psrf(const std::vector<Vector>& chains) {
  const std::size_t m = chains.size();
  if (m < 2) throw DomainError("PSRF needs at least two chains");
  const Eigen::Index n = chains.front().size();
  if (n < 2) throw DomainError("PSRF needs chains of length >= 2");
  for (const auto& c : chains) {
    if (c.size() != n) throw DomainError("PSRF needs chains of equal length");
  }
  Vector means(static_cast<Eigen::Index>(m));
  double within = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    const double mu = chains[c].mean();
    means[static_cast<Eigen::Index>(c)] = mu;
    within += (chains[c].array() - mu).square().sum() / static_cast<double>(n - 1);
  }
  within /= static_cast<double>(m);
  if (!(within > 0.0)) {
    throw DegenerateError("PSRF undefined: zero within-chain variance");
  }
  const double grand = means.mean();
  const double between = static_cast<double>(n) * (means.array() - grand).square().sum() /
                         static_cast<double>(m - 1);
  const double nn = static_cast<double>(n);
  const double var_hat = (nn - 1.0) / nn * within + between / nn;
  return std::sqrt(var_hat / within);
}

PsrfReport psrf_report(const std::vector<std::string>& names,
                       const std::vector<std::vector<Vector>>& traces) {
  if (names.size() != traces.size()) throw DomainError("one name per monitored scalar expected");
  PsrfReport report;
  report.names = names;
  report.values.reserve(traces.size());
  for (const auto& t : traces) report.values.push_back(psrf(t));
  report.converged = std::all_of(report.values.begin(), report.values.end(),
                                 [](double v) { return v < kPsrfThreshold; });
  return report;
}

namespace {

void check_aligned(const CovariancePath& a, const CovariancePath& b) {
  if (a.size() != b.size()) throw DomainError("covariance paths differ in length");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.sigma[i].rows() != b.sigma[i].rows() || a.sigma[i].cols() != b.sigma[i].cols()) {
      throw DomainError("covariance paths differ in matrix shape");
    }
  }
}

double sum_sq_upper(const CovariancePath& a, const CovariancePath& b, std::size_t& count) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Eigen::Index d = a.sigma[i].rows();
    for (Eigen::Index c = 0; c < d; ++c) {
      for (Eigen::Index r = 0; r <= c; ++r) {
        const double e = a.sigma[i](r, c) - b.sigma[i](r, c);
        total += e * e;
        ++count;
      }
    }
  }
  return total;
}

}  // namespace

double mse_mean_path(const CovariancePath& estimated, const CovariancePath& truth) {
  check_aligned(estimated, truth);
  std::size_t count = 0;
  const double total = sum_sq_upper(estimated, truth, count);
  if (count == 0) throw DomainError("empty covariance path");
  return total / static_cast<double>(count);
}

double mse_samples(const std::vector<CovariancePath>& draws, const CovariancePath& truth) {
  if (draws.empty()) throw DomainError("mse_samples needs at least one draw");
  double total = 0.0;
  for (const auto& d : draws) total += mse_mean_path(d, truth);
  return total / static_cast<double>(draws.size());
}

double avg_loglik(const Matrix& y_test, const Matrix& mean, const CovariancePath& sigma) {
  if (y_test.rows() != static_cast<Eigen::Index>(sigma.size()) || mean.rows() != y_test.rows() ||
      mean.cols() != y_test.cols()) {
    throw DomainError("avg_loglik inputs are not aligned");
  }
  if (y_test.rows() == 0) throw DomainError("avg_loglik needs at least one observation");
  double total = 0.0;
  for (Eigen::Index i = 0; i < y_test.rows(); ++i) {
    total += mvn_logpdf(y_test.row(i).transpose(), mean.row(i).transpose(),
                        sigma.sigma[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(y_test.rows());
}

double kl_mvn(const Vector& mean0, const Matrix& cov0, const Vector& mean1, const Matrix& cov1) {
  const Eigen::Index d = mean0.size();
  if (mean1.size() != d || cov0.rows() != d || cov1.rows() != d) {
    throw DomainError("kl_mvn dimension mismatch");
  }
  const CholeskyFactor c0 = chol_jitter(cov0, "cov0");
  const CholeskyFactor c1 = chol_jitter(cov1, "cov1");
  const Matrix a = c1.solve_lower(c0.lower);
  const Vector diff = c1.solve_lower(mean1 - mean0);
  const double kl = 0.5 * (a.squaredNorm() + diff.squaredNorm() - static_cast<double>(d) +
                           c1.log_det() - c0.log_det());
  return std::max(kl, 0.0);
}

std::pair<double, double> hdi(std::vector<double> samples, double level) {
  if (samples.empty()) throw DomainError("hdi needs samples");
  if (!(level > 0.0 && level <= 1.0)) throw DomainError("hdi level must lie in (0, 1]");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(level * static_cast<double>(n) - 1e-9)));
  std::size_t best = 0;
  double width = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + keep <= n; ++i) {
    const double w = samples[i + keep - 1] - samples[i];
    if (w < width) {
      width = w;
      best = i;
    }
  }
  return {samples[best], samples[best + keep - 1]};
}

std::string to_string(DynamicsLabel label) {
  switch (label) {
    case DynamicsLabel::Uncorrelated: return "uncorrelated";
    case DynamicsLabel::Static: return "static";
    case DynamicsLabel::Dynamic: return "dynamic";
  }
  return "?";
}

namespace {

void check_pair(const std::vector<CovariancePath>& draws, std::pair<int, int> pair) {
  const Eigen::Index d = draws.front().dim();
  if (pair.first < 0 || pair.second < 0 || pair.first >= d || pair.second >= d) {
    throw DomainError("variable pair out of range");
  }
  for (const auto& p : draws) {
    if (p.size() != draws.front().size()) throw DomainError("draws differ in path length");
  }
}

}  // namespace

DynamicsVerdict dynamics_test(const std::vector<CovariancePath>& draws, std::pair<int, int> pair,
                              double level, double rope) {
  if (draws.size() < 2) throw DomainError("dynamics test needs at least two posterior draws");
  if (!(rope >= 0.0)) throw DomainError("ROPE half-width must be nonnegative");
  check_pair(draws, pair);
  DynamicsVerdict verdict;
  verdict.pair = pair;
  verdict.level = level;
  verdict.rope = rope;
  if (draws.size() < 100) {
    verdict.warnings.push_back("fewer than 100 draws; HDI bounds are noisy");
  }
  const std::size_t n = draws.front().size();
  verdict.lower.resize(static_cast<Eigen::Index>(n));
  verdict.upper.resize(static_cast<Eigen::Index>(n));
  std::vector<double> column(draws.size());
  bool zero_everywhere = true;
  double max_lower = -std::numeric_limits<double>::infinity();
  double min_upper = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < draws.size(); ++s) {
      column[s] = draws[s].sigma[i](pair.first, pair.second);
    }
    const auto [lo, hi] = hdi(column, level);
    verdict.lower[static_cast<Eigen::Index>(i)] = lo;
    verdict.upper[static_cast<Eigen::Index>(i)] = hi;
    const double wlo = lo - rope;
    const double whi = hi + rope;
    if (!(wlo <= 0.0 && 0.0 <= whi)) zero_everywhere = false;
    max_lower = std::max(max_lower, wlo);
    min_upper = std::min(min_upper, whi);
  }
  if (zero_everywhere) {
    verdict.label = DynamicsLabel::Uncorrelated;
  } else if (max_lower <= min_upper) {
    verdict.label = DynamicsLabel::Static;
  } else {
    verdict.label = DynamicsLabel::Dynamic;
  }
  return verdict;
}

std::vector<double> effect_size_distribution(const std::vector<CovariancePath>& draws,
                                             std::pair<int, int> pair) {
  if (draws.empty()) throw DomainError("effect sizes need at least one draw");
  check_pair(draws, pair);
  std::vector<double> out;
  out.reserve(draws.size());
  for (const auto& path : draws) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& s : path.sigma) {
      lo = std::min(lo, s(pair.first, pair.second));
      hi = std::max(hi, s(pair.first, pair.second));
    }
    out.push_back(path.size() == 0 ? 0.0 : hi - lo);
  }
  return out;
}

}  // namespace gwp
