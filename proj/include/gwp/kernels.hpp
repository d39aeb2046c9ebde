#pragma once

#include "gwp/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace gwp {

enum class KernelKind { Rbf, Matern12, Periodic, LocallyPeriodic, Sum, Product };

/// Covariance function over scalar inputs, built as an expression tree of
/// stationary base kernels joined by Sum and Product nodes.
///
/// Hyperparameters are stored on the log axis. The flat parameter vector
/// lists leaves depth-first; within a leaf the order is
///   rbf:              lengthscale
///   matern12:         lengthscale
///   periodic:         period, lengthscale
///   locally_periodic: period, lengthscale_periodic, lengthscale_rbf
class Kernel {
 public:
  static Kernel rbf(double lengthscale);
  /// exp(-|x - x'| / (2 l^2))
  static Kernel matern12(double lengthscale);
  static Kernel periodic(double period, double lengthscale);
  static Kernel locally_periodic(double period, double lengthscale_periodic,
                                 double lengthscale_rbf);
  static Kernel sum(Kernel a, Kernel b);
  static Kernel product(Kernel a, Kernel b);

  [[nodiscard]] KernelKind kind() const { return kind_; }
  [[nodiscard]] const std::vector<Kernel>& children() const { return children_; }

  /// k(x, x'). Throws DomainError on non-finite input.
  [[nodiscard]] double eval(double x, double x2) const;
  [[nodiscard]] double operator()(double x, double x2) const { return eval(x, x2); }

  /// Evaluates k and writes dk/dx into `dx` and dk/dlog(theta) into `dlog`
  /// (length num_params()).
  double eval_with_gradient(double x, double x2, std::span<double> dlog, double& dx) const;

  [[nodiscard]] std::size_t num_params() const;
  [[nodiscard]] Vector log_params() const;
  [[nodiscard]] Vector params() const { return log_params().array().exp(); }
  [[nodiscard]] Kernel with_log_params(const Vector& log_theta) const;
  [[nodiscard]] std::vector<std::string> param_names() const;

  /// Short human-readable form, e.g. "sum(rbf(0.35), matern12(1))".
  [[nodiscard]] std::string describe() const;

 private:
  Kernel(KernelKind kind, std::vector<double> log_params, std::vector<Kernel> children);

  [[nodiscard]] double value(double r) const;
  double value_with_gradient(double r, double* dlog, double& dr) const;
  void collect(std::vector<double>& out) const;
  std::size_t assign(const Vector& log_theta, std::size_t offset);
  void collect_names(const std::string& prefix, std::vector<std::string>& out) const;

  KernelKind kind_;
  std::vector<double> log_params_;
  std::vector<Kernel> children_;
};

/// Pairwise evaluations k(xs[i], xs2[j]).
Matrix gram(const Kernel& kernel, const Vector& xs, const Vector& xs2);
Matrix gram(const Kernel& kernel, const Vector& xs);

/// Log-normal prior on one positive hyperparameter.
struct HyperPrior {
  double mu_log = 0.0;
  double sigma_log = 1.0;

  /// Log-normal log-density at theta; -inf for theta <= 0.
  [[nodiscard]] double log_density(double theta) const;
  /// Normal log-density of log(theta), the density a log-axis sampler targets.
  [[nodiscard]] double log_density_log_axis(double log_theta) const;
};

/// Sum of log-normal log-densities. Lengths must match.
double log_prior(std::span<const HyperPrior> priors, const Vector& theta);

/// Log-axis counterpart of log_prior (includes the log-Jacobian).
double log_prior_log_axis(std::span<const HyperPrior> priors, const Vector& log_theta);

}  // namespace gwp
