#include "gwp/kernels.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace gwp {

namespace {

double checked_log(double value, const char* what) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw DomainError(std::string("kernel hyperparameter '") + what + "' must be positive and finite");
  }
  return std::log(value);
}

const char* leaf_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::Rbf: return "rbf";
    case KernelKind::Matern12: return "matern12";
    case KernelKind::Periodic: return "periodic";
    case KernelKind::LocallyPeriodic: return "locally_periodic";
    case KernelKind::Sum: return "sum";
    case KernelKind::Product: return "product";
  }
  return "?";
}

std::vector<std::string> leaf_param_names(KernelKind kind) {
  switch (kind) {
    case KernelKind::Rbf:
    case KernelKind::Matern12: return {"lengthscale"};
    case KernelKind::Periodic: return {"period", "lengthscale"};
    case KernelKind::LocallyPeriodic: return {"period", "lengthscale_periodic", "lengthscale_rbf"};
    default: return {};
  }
}

}  // namespace

Kernel::Kernel(KernelKind kind, std::vector<double> log_params, std::vector<Kernel> children)
    : kind_(kind), log_params_(std::move(log_params)), children_(std::move(children)) {}

Kernel Kernel::rbf(double lengthscale) {
  return Kernel(KernelKind::Rbf, {checked_log(lengthscale, "lengthscale")}, {});
}

Kernel Kernel::matern12(double lengthscale) {
  return Kernel(KernelKind::Matern12, {checked_log(lengthscale, "lengthscale")}, {});
}

Kernel Kernel::periodic(double period, double lengthscale) {
  return Kernel(KernelKind::Periodic,
                {checked_log(period, "period"), checked_log(lengthscale, "lengthscale")}, {});
}

Kernel Kernel::locally_periodic(double period, double lengthscale_periodic, double lengthscale_rbf) {
  return Kernel(KernelKind::LocallyPeriodic,
                {checked_log(period, "period"),
                 checked_log(lengthscale_periodic, "lengthscale_periodic"),
                 checked_log(lengthscale_rbf, "lengthscale_rbf")},
                {});
}

Kernel Kernel::sum(Kernel a, Kernel b) {
  return Kernel(KernelKind::Sum, {}, {std::move(a), std::move(b)});
}

Kernel Kernel::product(Kernel a, Kernel b) {
  return Kernel(KernelKind::Product, {}, {std::move(a), std::move(b)});
}

double Kernel::eval(double x, double x2) const {
  if (!std::isfinite(x) || !std::isfinite(x2)) {
    throw DomainError("kernel evaluated at a non-finite input");
  }
  return value(x - x2);
}

double Kernel::value(double r) const {
  using std::numbers::pi;
  switch (kind_) {
    case KernelKind::Rbf: {
      const double l = std::exp(log_params_[0]);
      return std::exp(-0.5 * r * r / (l * l));
    }
    case KernelKind::Matern12: {
      const double l = std::exp(log_params_[0]);
      return std::exp(-std::abs(r) / (2.0 * l * l));
    }
    case KernelKind::Periodic: {
      const double p = std::exp(log_params_[0]);
      const double l = std::exp(log_params_[1]);
      const double s = std::sin(pi * r / p);
      return std::exp(-2.0 * s * s / (l * l));
    }
    case KernelKind::LocallyPeriodic: {
      const double p = std::exp(log_params_[0]);
      const double lp = std::exp(log_params_[1]);
      const double lr = std::exp(log_params_[2]);
      const double s = std::sin(pi * r / p);
      return std::exp(-2.0 * s * s / (lp * lp) - 0.5 * r * r / (lr * lr));
    }
    case KernelKind::Sum: return children_[0].value(r) + children_[1].value(r);
    case KernelKind::Product: return children_[0].value(r) * children_[1].value(r);
  }
  return 0.0;
}

double Kernel::value_with_gradient(double r, double* dlog, double& dr) const {
  using std::numbers::pi;
  switch (kind_) {
    case KernelKind::Rbf: {
      const double l2 = std::exp(2.0 * log_params_[0]);
      const double k = std::exp(-0.5 * r * r / l2);
      dr = -r / l2 * k;
      dlog[0] = r * r / l2 * k;
      return k;
    }
    case KernelKind::Matern12: {
      const double l2 = std::exp(2.0 * log_params_[0]);
      const double a = std::abs(r);
      const double k = std::exp(-a / (2.0 * l2));
      // The cusp at r = 0 gets derivative 0.
      const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
      dr = -sign / (2.0 * l2) * k;
      dlog[0] = a / l2 * k;
      return k;
    }
    case KernelKind::Periodic:
    case KernelKind::LocallyPeriodic: {
      const double p = std::exp(log_params_[0]);
      const double lp2 = std::exp(2.0 * log_params_[1]);
      const double s = std::sin(pi * r / p);
      const double s2r = std::sin(2.0 * pi * r / p);
      double k = std::exp(-2.0 * s * s / lp2);
      double dk_dr = -(2.0 * pi / (p * lp2)) * s2r * k;
      double dk_dlogp = (2.0 * pi * r / (p * lp2)) * s2r * k;
      double dk_dloglp = 4.0 * s * s / lp2 * k;
      if (kind_ == KernelKind::Periodic) {
        dr = dk_dr;
        dlog[0] = dk_dlogp;
        dlog[1] = dk_dloglp;
        return k;
      }
      const double lr2 = std::exp(2.0 * log_params_[2]);
      const double g = std::exp(-0.5 * r * r / lr2);
      const double dg_dr = -r / lr2 * g;
      const double dg_dloglr = r * r / lr2 * g;
      dr = dk_dr * g + k * dg_dr;
      dlog[0] = dk_dlogp * g;
      dlog[1] = dk_dloglp * g;
      dlog[2] = k * dg_dloglr;
      return k * g;
    }
    case KernelKind::Sum:
    case KernelKind::Product: {
      const std::size_t na = children_[0].num_params();
      const std::size_t nb = children_[1].num_params();
      double dra = 0.0;
      double drb = 0.0;
      const double a = children_[0].value_with_gradient(r, dlog, dra);
      const double b = children_[1].value_with_gradient(r, dlog + na, drb);
      if (kind_ == KernelKind::Sum) {
        dr = dra + drb;
        return a + b;
      }
      for (std::size_t i = 0; i < na; ++i) dlog[i] *= b;
      for (std::size_t i = 0; i < nb; ++i) dlog[na + i] *= a;
      dr = dra * b + a * drb;
      return a * b;
    }
  }
  return 0.0;
}

double Kernel::eval_with_gradient(double x, double x2, std::span<double> dlog, double& dx) const {
  if (dlog.size() != num_params()) {
    throw DomainError("gradient buffer length does not match kernel parameter count");
  }
  return value_with_gradient(x - x2, dlog.data(), dx);
}

std::size_t Kernel::num_params() const {
  std::size_t n = log_params_.size();
  for (const auto& c : children_) n += c.num_params();
  return n;
}

void Kernel::collect(std::vector<double>& out) const {
  out.insert(out.end(), log_params_.begin(), log_params_.end());
  for (const auto& c : children_) c.collect(out);
}

Vector Kernel::log_params() const {
  std::vector<double> flat;
  collect(flat);
  return Eigen::Map<const Vector>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

std::size_t Kernel::assign(const Vector& log_theta, std::size_t offset) {
  for (auto& p : log_params_) {
    p = log_theta[static_cast<Eigen::Index>(offset++)];
  }
  for (auto& c : children_) offset = c.assign(log_theta, offset);
  return offset;
}

Kernel Kernel::with_log_params(const Vector& log_theta) const {
  if (static_cast<std::size_t>(log_theta.size()) != num_params()) {
    throw DomainError("kernel expects " + std::to_string(num_params()) + " hyperparameters, got " +
                      std::to_string(log_theta.size()));
  }
  if (!log_theta.allFinite()) {
    throw DomainError("kernel hyperparameters must be finite on the log axis");
  }
  Kernel out = *this;
  out.assign(log_theta, 0);
  return out;
}

void Kernel::collect_names(const std::string& prefix, std::vector<std::string>& out) const {
  const std::string here = prefix + leaf_name(kind_);
  for (const auto& name : leaf_param_names(kind_)) out.push_back(here + "." + name);
  for (std::size_t i = 0; i < children_.size(); ++i) {
    children_[i].collect_names(here + "[" + std::to_string(i) + "].", out);
  }
}

std::vector<std::string> Kernel::param_names() const {
  std::vector<std::string> out;
  collect_names("", out);
  return out;
}

std::string Kernel::describe() const {
  std::ostringstream os;
  os << leaf_name(kind_) << "(";
  if (children_.empty()) {
    for (std::size_t i = 0; i < log_params_.size(); ++i) {
      if (i) os << ", ";
      os << std::exp(log_params_[i]);
    }
  } else {
    os << children_[0].describe() << ", " << children_[1].describe();
  }
  os << ")";
  return os.str();
}

Matrix gram(const Kernel& kernel, const Vector& xs, const Vector& xs2) {
  if (!xs.allFinite() || !xs2.allFinite()) {
    throw DomainError("gram matrix requested at non-finite inputs");
  }
  Matrix k(xs.size(), xs2.size());
  for (Eigen::Index j = 0; j < xs2.size(); ++j) {
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
      k(i, j) = kernel.eval(xs[i], xs2[j]);
    }
  }
  return k;
}

Matrix gram(const Kernel& kernel, const Vector& xs) {
  if (!xs.allFinite()) {
    throw DomainError("gram matrix requested at non-finite inputs");
  }
  const Eigen::Index n = xs.size();
  Matrix k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k(j, j) = kernel.eval(xs[j], xs[j]);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      k(i, j) = kernel.eval(xs[i], xs[j]);
      k(j, i) = k(i, j);
    }
  }
  return k;
}

double HyperPrior::log_density(double theta) const {
  if (!(theta > 0.0)) return -std::numeric_limits<double>::infinity();
  const double z = (std::log(theta) - mu_log) / sigma_log;
  return -std::log(theta) - std::log(sigma_log) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * z * z;
}

double HyperPrior::log_density_log_axis(double log_theta) const {
  const double z = (log_theta - mu_log) / sigma_log;
  return -std::log(sigma_log) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * z * z;
}

double log_prior(std::span<const HyperPrior> priors, const Vector& theta) {
  if (priors.size() != static_cast<std::size_t>(theta.size())) {
    throw DomainError("hyperprior count does not match hyperparameter count");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    total += priors[i].log_density(theta[static_cast<Eigen::Index>(i)]);
  }
  return total;
}

double log_prior_log_axis(std::span<const HyperPrior> priors, const Vector& log_theta) {
  if (priors.size() != static_cast<std::size_t>(log_theta.size())) {
    throw DomainError("hyperprior count does not match hyperparameter count");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    total += priors[i].log_density_log_axis(log_theta[static_cast<Eigen::Index>(i)]);
  }
  return total;
}

}  // namespace gwp
