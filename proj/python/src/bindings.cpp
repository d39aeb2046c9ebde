#include "gwp/data_io.hpp"
#include "gwp/diagnostics.hpp"
#include "gwp/garch.hpp"
#include "gwp/io_json.hpp"
#include "gwp/kernels.hpp"
#include "gwp/mcmc.hpp"
#include "gwp/smc.hpp"
#include "gwp/vi.hpp"
#include "gwp/wishart.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

namespace py = pybind11;
using namespace gwp;

namespace {

// (n, d, d) array.
py::array_t<double> path_to_array(const CovariancePath& p) {
  const auto n = static_cast<py::ssize_t>(p.size());
  const auto d = static_cast<py::ssize_t>(p.dim());
  py::array_t<double> out({n, d, d});
  auto a = out.mutable_unchecked<3>();
  for (py::ssize_t i = 0; i < n; ++i) {
    for (py::ssize_t r = 0; r < d; ++r) {
      for (py::ssize_t c = 0; c < d; ++c) a(i, r, c) = p.sigma[static_cast<std::size_t>(i)](r, c);
    }
  }
  return out;
}

// (draws, n, d, d) array.
py::array_t<double> paths_to_array(const std::vector<CovariancePath>& draws) {
  const auto k = static_cast<py::ssize_t>(draws.size());
  const auto n = k ? static_cast<py::ssize_t>(draws[0].size()) : 0;
  const auto d = k ? static_cast<py::ssize_t>(draws[0].dim()) : 0;
  py::array_t<double> out({k, n, d, d});
  auto a = out.mutable_unchecked<4>();
  for (py::ssize_t t = 0; t < k; ++t) {
    const auto& p = draws[static_cast<std::size_t>(t)];
    if (static_cast<py::ssize_t>(p.size()) != n || p.dim() != d) throw DomainError("ragged path draws");
    for (py::ssize_t i = 0; i < n; ++i) {
      for (py::ssize_t r = 0; r < d; ++r) {
        for (py::ssize_t c = 0; c < d; ++c) a(t, i, r, c) = p.sigma[static_cast<std::size_t>(i)](r, c);
      }
    }
  }
  return out;
}

CovariancePath array_to_path(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr,
                             const Vector& x) {
  if (arr.ndim() != 3 || arr.shape(1) != arr.shape(2)) throw DomainError("expected an (n, d, d) array");
  auto a = arr.unchecked<3>();
  CovariancePath p;
  p.x = x.size() ? x : Vector::LinSpaced(arr.shape(0), 0.0, static_cast<double>(arr.shape(0) - 1));
  if (p.x.size() != arr.shape(0)) throw DomainError("x length does not match the path");
  for (py::ssize_t i = 0; i < arr.shape(0); ++i) {
    Matrix s(arr.shape(1), arr.shape(2));
    for (py::ssize_t r = 0; r < s.rows(); ++r) {
      for (py::ssize_t c = 0; c < s.cols(); ++c) s(r, c) = a(i, r, c);
    }
    p.sigma.push_back(std::move(s));
  }
  return p;
}

std::vector<CovariancePath> array_to_paths(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 4) throw DomainError("expected a (draws, n, d, d) array");
  std::vector<CovariancePath> out;
  for (py::ssize_t t = 0; t < arr.shape(0); ++t) {
    py::array_t<double> slice({arr.shape(1), arr.shape(2), arr.shape(3)});
    std::memcpy(slice.mutable_data(), arr.data(t), sizeof(double) * static_cast<std::size_t>(slice.size()));
    out.push_back(array_to_path(slice, Vector()));
  }
  return out;
}

py::dict dataset_dict(const Dataset& ds) {
  py::dict out;
  out["x"] = ds.x;
  out["y"] = ds.y;
  out["truth"] = ds.truth ? py::object(path_to_array(*ds.truth)) : py::none();
  out["metadata"] = ds.metadata;
  return out;
}

std::vector<CovariancePath> state_paths(const std::vector<LatentState>& states, const Vector& x) {
  std::vector<CovariancePath> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(covariance_path(s, x));
  return out;
}

Matrix theta_matrix(const std::vector<LatentState>& states) {
  if (states.empty()) return Matrix();
  Matrix out(static_cast<Eigen::Index>(states.size()), states[0].log_theta.size());
  for (std::size_t k = 0; k < states.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = states[k].theta().transpose();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Generalised Wishart process covariance models";
  m.attr("__version__") = kVersion;

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<SingularMatrixError>(m, "SingularMatrixError", base.ptr());
  py::register_exception<DegenerateError>(m, "DegenerateError", base.ptr());
  py::register_exception<FitError>(m, "FitError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", base.ptr());

  py::class_<Kernel>(m, "Kernel")
      .def_static("rbf", &Kernel::rbf, py::arg("lengthscale"))
      .def_static("matern12", &Kernel::matern12, py::arg("lengthscale"))
      .def_static("periodic", &Kernel::periodic, py::arg("period"), py::arg("lengthscale"))
      .def_static("locally_periodic", &Kernel::locally_periodic, py::arg("period"),
                  py::arg("lengthscale_periodic"), py::arg("lengthscale_rbf"))
      .def_static("sum", &Kernel::sum)
      .def_static("product", &Kernel::product)
      .def("__call__", &Kernel::eval)
      .def("gram", [](const Kernel& k, const Vector& a, std::optional<Vector> b) {
        return b ? gram(k, a, *b) : gram(k, a);
      }, py::arg("xs"), py::arg("xs2") = py::none())
      .def_property_readonly("params", &Kernel::params)
      .def_property_readonly("param_names", &Kernel::param_names)
      .def("to_json", [](const Kernel& k) { return kernel_to_json(k).dump(); })
      .def_static("from_json", [](const std::string& s) { return kernel_from_json(Json::parse(s)); })
      .def("__repr__", &Kernel::describe);

  py::class_<WishartModel>(m, "WishartModel")
      .def(py::init([](int d, int v, Kernel kernel, bool noise, double noise_init, bool learn_kernel,
                       bool learn_scale) {
             WishartModel w;
             w.d = d;
             w.v = v < 0 ? d + 1 : v;
             w.kernel = std::move(kernel);
             w.noise = noise;
             w.noise_init = noise_init;
             w.learn_kernel = learn_kernel;
             w.learn_scale = learn_scale;
             w.validate();
             return w;
           }),
           py::arg("d"), py::arg("v") = -1, py::arg("kernel") = Kernel::rbf(1.0), py::arg("noise") = false,
           py::arg("noise_init") = 0.001, py::arg("learn_kernel") = true, py::arg("learn_scale") = true)
      .def_readwrite("d", &WishartModel::d)
      .def_readwrite("v", &WishartModel::v)
      .def_readwrite("kernel", &WishartModel::kernel)
      .def_readwrite("noise", &WishartModel::noise)
      .def_readwrite("noise_init", &WishartModel::noise_init)
      .def_readwrite("learn_kernel", &WishartModel::learn_kernel)
      .def_readwrite("learn_scale", &WishartModel::learn_scale);

  m.def("generate_sim1", [](std::uint64_t seed, Eigen::Index n, int d, int v, double ell) {
    return dataset_dict(generate_sim1(seed, n, d, v, ell));
  }, py::arg("seed"), py::arg("n") = 300, py::arg("d") = 3, py::arg("v") = 4, py::arg("lengthscale") = 0.35);
  m.def("generate_sim2", [](std::uint64_t seed, Eigen::Index n, Eigen::Index period, double high,
                            Eigen::Index n_train) {
    return dataset_dict(generate_sim2(seed, n, period, high, n_train));
  }, py::arg("seed"), py::arg("n") = 600, py::arg("period") = 50, py::arg("high") = 0.8,
     py::arg("n_train") = 300);

  m.def("fit_smc", [](const WishartModel& model, const Vector& x, const Matrix& y, int particles,
                      int mutation_steps, double step_size, std::uint64_t seed) {
    SmcConfig cfg;
    cfg.particles = particles;
    cfg.mutation_steps = mutation_steps;
    cfg.step_size = step_size;
    const Observations obs = make_observations(model, x, y);
    SmcResult r;
    {
      py::gil_scoped_release release;
      r = run_smc(model, obs, cfg, Rng(seed));
    }
    py::dict out;
    out["sigma"] = paths_to_array(state_paths(r.swarm.particles, x));
    out["theta"] = theta_matrix(r.swarm.particles);
    out["beta_ladder"] = r.beta_ladder;
    out["ess"] = r.ess_history;
    out["log_evidence"] = r.log_evidence;
    out["cycles"] = r.cycles;
    return out;
  }, py::arg("model"), py::arg("x"), py::arg("y"), py::arg("particles") = 1000,
     py::arg("mutation_steps") = 2000, py::arg("step_size") = 0.01, py::arg("seed") = 0,
     "Adaptive tempered SMC. Returns posterior Sigma draws (particles, n, d, d) at x.");

  m.def("fit_mcmc", [](const WishartModel& model, const Vector& x, const Matrix& y, int chains,
                       int draws_per_chain, int burn_in, int thinning, double step_size, std::uint64_t seed) {
    GibbsConfig cfg;
    cfg.chains = chains;
    cfg.draws_per_chain = draws_per_chain;
    cfg.burn_in = burn_in;
    cfg.thinning = thinning;
    cfg.step_size = step_size;
    const Observations obs = make_observations(model, x, y);
    ChainsResult r;
    {
      py::gil_scoped_release release;
      r = run_chains(model, obs, cfg, Rng(seed));
    }
    std::vector<LatentState> pooled;
    for (const auto& c : r.chains) pooled.insert(pooled.end(), c.draws.begin(), c.draws.end());
    py::dict out;
    out["sigma"] = paths_to_array(state_paths(pooled, x));
    out["theta"] = theta_matrix(pooled);
    std::map<std::string, double> psrf;
    for (std::size_t k = 0; k < r.psrf.names.size(); ++k) psrf[r.psrf.names[k]] = r.psrf.values[k];
    out["psrf"] = psrf;
    return out;
  }, py::arg("model"), py::arg("x"), py::arg("y"), py::arg("chains") = 4, py::arg("draws_per_chain") = 250,
     py::arg("burn_in") = 0, py::arg("thinning") = 1000, py::arg("step_size") = 0.01, py::arg("seed") = 0,
     "Gibbs chains (ESS on F, random walk on theta and L). Returns pooled Sigma draws at x.");

  m.def("fit_vi", [](const WishartModel& model, const Vector& x, const Matrix& y, const Vector& x_pred,
                     int restarts, int max_iterations, double learning_rate, int inducing, int draws,
                     std::uint64_t seed) {
    ViConfig cfg;
    cfg.restarts = restarts;
    cfg.max_iterations = max_iterations;
    cfg.adam.learning_rate = learning_rate;
    cfg.inducing = inducing;
    const Observations obs = make_observations(model, x, y);
    ViResult r;
    std::vector<CovariancePath> paths;
    {
      py::gil_scoped_release release;
      r = fit_vi(model, obs, cfg, Rng(seed));
      Rng draw_rng = Rng(seed).split(2);
      paths = predict_vi(r.state, model, x_pred.size() ? x_pred : x, draws, draw_rng);
    }
    py::dict out;
    out["sigma"] = paths_to_array(paths);
    out["best_restart"] = r.best_restart;
    std::vector<double> evals;
    for (const auto& run : r.runs) evals.push_back(run.eval_elbo);
    out["eval_elbo"] = evals;
    out["trace"] = r.runs[r.best_restart].trace;
    out["theta"] = Vector(r.state.log_theta.array().exp());
    out["state"] = variational_to_json(r.state).dump();
    return out;
  }, py::arg("model"), py::arg("x"), py::arg("y"), py::arg("x_pred") = Vector(), py::arg("restarts") = 4,
     py::arg("max_iterations") = 100000, py::arg("learning_rate") = 0.001, py::arg("inducing") = 0,
     py::arg("draws") = 200, py::arg("seed") = 0,
     "Sparse variational fit. Returns Sigma draws at x_pred (x when empty).");

  m.def("fit_dcc_garch", [](const Matrix& y, int horizon) {
    const DccGarchFit fit = fit_dcc_garch(y);
    py::dict out;
    std::vector<py::dict> uni;
    for (const auto& f : fit.fits) {
      py::dict u;
      u["omega"] = f.omega;
      u["a"] = f.a;
      u["b"] = f.b;
      u["loglik"] = f.loglik;
      u["warnings"] = f.warnings;
      uni.push_back(u);
    }
    out["univariate"] = uni;
    out["alpha"] = fit.dcc.alpha;
    out["beta"] = fit.dcc.beta;
    out["loglik"] = fit.dcc.loglik;
    out["sigma"] = path_to_array(garch_covariance_path(fit.dcc, fit.fits));
    if (horizon > 0) out["forecast"] = path_to_array(garch_forecast(fit.dcc, fit.fits, horizon));
    return out;
  }, py::arg("y"), py::arg("horizon") = 0);

  m.def("psrf", &psrf, py::arg("chains"));
  m.def("mse_mean_path", [](const py::array_t<double>& est, const py::array_t<double>& truth) {
    return mse_mean_path(array_to_path(est, Vector()), array_to_path(truth, Vector()));
  }, py::arg("estimated"), py::arg("truth"));
  m.def("mean_path", [](const py::array_t<double>& draws) { return path_to_array(mean_path(array_to_paths(draws))); },
        py::arg("draws"));
  m.def("dynamics_test", [](const py::array_t<double>& draws, std::pair<int, int> pair, double level, double rope) {
    const DynamicsVerdict v = dynamics_test(array_to_paths(draws), pair, level, rope);
    py::dict out;
    out["label"] = to_string(v.label);
    out["lower"] = v.lower;
    out["upper"] = v.upper;
    out["warnings"] = v.warnings;
    return out;
  }, py::arg("draws"), py::arg("pair"), py::arg("level") = 0.95, py::arg("rope") = 0.005);
}
