#include "gwp/data_io.hpp"
#include "gwp/diagnostics.hpp"
#include "gwp/garch.hpp"
#include "gwp/io_json.hpp"
#include "gwp/mcmc.hpp"
#include "gwp/rng.hpp"
#include "gwp/smc.hpp"
#include "gwp/vi.hpp"
#include "gwp/wishart.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace gwp;

namespace {

constexpr const char* kFitSchema = "gwp.fit/1";

// Stream labels under the root seed, one per subcommand.
enum StreamLabel : std::uint64_t { kFitStream = 1, kPredictStream = 2, kCompareStream = 3 };

struct RunConfig {
  Json model = Json::object();
  std::string backend = "smc";
  GibbsConfig mcmc;
  SmcConfig smc;
  ViConfig vi;
  int predict_draws = 200;
};

template <typename T>
void read_field(const Json& j, const char* key, T& target) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad value for '") + key + "': " + e.what());
  }
}

RunConfig parse_config(const Json& j) {
  reject_unknown_keys(j, {"model", "backend", "mcmc", "smc", "vi", "predict_draws"}, "config");
  RunConfig c;
  if (j.contains("model")) {
    c.model = j.at("model");
    if (!c.model.is_object()) throw SchemaError("config model must be an object");
  }
  read_field(j, "backend", c.backend);
  read_field(j, "predict_draws", c.predict_draws);
  if (j.contains("mcmc")) {
    const Json& m = j.at("mcmc");
    reject_unknown_keys(m, {"step_size", "thinning", "burn_in", "chains", "draws_per_chain"}, "mcmc config");
    read_field(m, "step_size", c.mcmc.step_size);
    read_field(m, "thinning", c.mcmc.thinning);
    read_field(m, "burn_in", c.mcmc.burn_in);
    read_field(m, "chains", c.mcmc.chains);
    read_field(m, "draws_per_chain", c.mcmc.draws_per_chain);
  }
  if (j.contains("smc")) {
    const Json& s = j.at("smc");
    reject_unknown_keys(s, {"particles", "ess_fraction", "mutation_steps", "max_cycles", "beta_tolerance",
                            "step_size"},
                        "smc config");
    read_field(s, "particles", c.smc.particles);
    read_field(s, "ess_fraction", c.smc.ess_fraction);
    read_field(s, "mutation_steps", c.smc.mutation_steps);
    read_field(s, "max_cycles", c.smc.max_cycles);
    read_field(s, "beta_tolerance", c.smc.beta_tolerance);
    read_field(s, "step_size", c.smc.step_size);
  }
  if (j.contains("vi")) {
    const Json& v = j.at("vi");
    reject_unknown_keys(v, {"learning_rate", "mc_samples", "patience", "max_iterations", "restarts", "inducing",
                            "optimize_inducing", "eval_mc_samples", "max_retries"},
                        "vi config");
    read_field(v, "learning_rate", c.vi.adam.learning_rate);
    read_field(v, "mc_samples", c.vi.adam.mc_samples);
    read_field(v, "patience", c.vi.adam.patience);
    read_field(v, "max_iterations", c.vi.max_iterations);
    read_field(v, "restarts", c.vi.restarts);
    read_field(v, "inducing", c.vi.inducing);
    read_field(v, "optimize_inducing", c.vi.optimize_inducing);
    read_field(v, "eval_mc_samples", c.vi.eval_mc_samples);
    read_field(v, "max_retries", c.vi.max_retries);
  }
  return c;
}

Json config_to_json(const RunConfig& c) {
  return {{"model", c.model},
          {"backend", c.backend},
          {"predict_draws", c.predict_draws},
          {"mcmc",
           {{"step_size", c.mcmc.step_size},
            {"thinning", c.mcmc.thinning},
            {"burn_in", c.mcmc.burn_in},
            {"chains", c.mcmc.chains},
            {"draws_per_chain", c.mcmc.draws_per_chain}}},
          {"smc",
           {{"particles", c.smc.particles},
            {"ess_fraction", c.smc.ess_fraction},
            {"mutation_steps", c.smc.mutation_steps},
            {"max_cycles", c.smc.max_cycles},
            {"beta_tolerance", c.smc.beta_tolerance},
            {"step_size", c.smc.step_size}}},
          {"vi",
           {{"learning_rate", c.vi.adam.learning_rate},
            {"mc_samples", c.vi.adam.mc_samples},
            {"patience", c.vi.adam.patience},
            {"max_iterations", c.vi.max_iterations},
            {"restarts", c.vi.restarts},
            {"inducing", c.vi.inducing},
            {"optimize_inducing", c.vi.optimize_inducing},
            {"eval_mc_samples", c.vi.eval_mc_samples},
            {"max_retries", c.vi.max_retries}}}};
}

// d defaults to the data width and v to d + 1.
WishartModel resolve_model(const Json& spec, Eigen::Index d) {
  Json j = spec;
  if (!j.contains("d")) j["d"] = d;
  if (!j.contains("v")) j["v"] = j["d"].get<int>() + 1;
  WishartModel m = model_from_json(j);
  if (m.d != d) {
    throw DomainError("model has d = " + std::to_string(m.d) + " but the data has " + std::to_string(d) +
                      " columns");
  }
  return m;
}

class Manifest {
 public:
  Manifest(std::string command, std::uint64_t seed, const std::vector<std::string>& argv)
      : start_(std::chrono::steady_clock::now()) {
    body_ = {{"schema", kManifestSchema},
             {"command", std::move(command)},
             {"version", kVersion},
             {"seed", seed},
             {"argv", argv},
             {"outputs", Json::array()},
             {"traces", Json::object()}};
  }

  void set_config(const Json& config) {
    body_["config"] = config;
    body_["config_hash"] = fnv1a_hex(config.dump());
  }
  void add_output(const fs::path& p) { body_["outputs"].push_back(p.filename().string()); }
  Json& traces() { return body_["traces"]; }
  Json& operator[](const char* key) { return body_[key]; }

  void write(const fs::path& dir) {
    body_["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_json_file((dir / "manifest.json").string(), body_);
  }

 private:
  std::chrono::steady_clock::time_point start_;
  Json body_;
};

struct DataSource {
  std::string dataset;
  std::string csv;
  std::string x_column;
  std::vector<std::string> columns;
  int downsample = 1;
  char delimiter = ',';
  long train_rows = -1;

  void add_options(CLI::App* cmd, bool train) {
    cmd->add_option("--data", dataset, "Dataset bundle (JSON) written by 'simulate'")->check(CLI::ExistingFile);
    cmd->add_option("--csv", csv, "CSV file with a header row")->check(CLI::ExistingFile);
    cmd->add_option("--x-column", x_column, "Input column of the CSV");
    cmd->add_option("--columns", columns, "Value columns of the CSV (default: all others)")->delimiter(',');
    cmd->add_option("--downsample", downsample, "Keep every k-th complete CSV row")->check(CLI::PositiveNumber);
    cmd->add_option("--delimiter", delimiter, "CSV field delimiter");
    if (train) {
      cmd->add_option("--train-rows", train_rows,
                      "Use only the first N rows (default: the dataset's n_train, else all)");
    }
  }

  [[nodiscard]] Dataset load() const {
    if (dataset.empty() == csv.empty()) throw CLI::ValidationError("give exactly one of --data or --csv");
    if (!dataset.empty()) return dataset_from_json(read_json_file(dataset));
    if (x_column.empty()) throw CLI::ValidationError("--csv needs --x-column");
    CsvOptions opt;
    opt.x_column = x_column;
    opt.value_columns = columns;
    opt.delimiter = delimiter;
    opt.downsample_every = downsample;
    CsvLoad load = load_csv(csv, opt);
    if (load.dropped_rows > 0) std::cerr << "dropped " << load.dropped_rows << " incomplete rows\n";
    return std::move(load.data);
  }

  [[nodiscard]] Eigen::Index train_size(const Dataset& d) const {
    if (train_rows >= 0) {
      if (train_rows < 1 || train_rows > d.n()) throw DomainError("--train-rows out of range");
      return train_rows;
    }
    const auto it = d.metadata.find("n_train");
    if (it != d.metadata.end()) return std::min<Eigen::Index>(d.n(), std::stol(it->second));
    return d.n();
  }
};

fs::path prepare_out(const std::string& out) {
  const fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

// ---- simulate ------------------------------------------------------------

struct SimulateArgs {
  int study = 1;
  std::uint64_t seed = 0;
  std::string out;
  long n = -1;
  int d = 3;
  int v = 4;
  double lengthscale = 0.35;
  long period = 50;
  double high = 0.8;
  long n_train = 300;
};

void cmd_simulate(const SimulateArgs& a, const std::vector<std::string>& argv) {
  const fs::path dir = prepare_out(a.out);
  Manifest manifest("simulate", a.seed, argv);
  Json config;
  Dataset data;
  if (a.study == 1) {
    const long n = a.n < 0 ? 300 : a.n;
    data = generate_sim1(a.seed, n, a.d, a.v, a.lengthscale);
    config = {{"study", 1}, {"n", n}, {"d", a.d}, {"v", a.v}, {"lengthscale", a.lengthscale}};
  } else {
    const long n = a.n < 0 ? 600 : a.n;
    data = generate_sim2(a.seed, n, a.period, a.high, a.n_train);
    config = {{"study", 2}, {"n", n}, {"period", a.period}, {"high", a.high}, {"n_train", a.n_train}};
  }
  manifest.set_config(config);
  write_json_file((dir / "dataset.json").string(), dataset_to_json(data));
  manifest.add_output(dir / "dataset.json");
  std::ofstream truth(dir / "truth_paths.csv");
  write_paths_csv(truth, {*data.truth});
  manifest.add_output(dir / "truth_paths.csv");
  manifest.write(dir);
  std::cout << "wrote " << data.n() << " x " << data.d() << " dataset to " << (dir / "dataset.json").string()
            << "\n";
}

// ---- fit -------------------------------------------------------------------

struct Overrides {
  std::optional<int> particles, mutation_steps, max_cycles, chains, draws_per_chain, thinning, burn_in,
      restarts, iterations, inducing, patience, mc_samples;
  std::optional<double> smc_step, ess_fraction, mcmc_step, learning_rate;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--particles", particles, "SMC particle count");
    cmd->add_option("--mutation-steps", mutation_steps, "Gibbs cycles per SMC mutation");
    cmd->add_option("--max-cycles", max_cycles, "SMC tempering cycle limit");
    cmd->add_option("--smc-step", smc_step, "SMC random-walk step size");
    cmd->add_option("--ess-fraction", ess_fraction, "SMC target ESS fraction");
    cmd->add_option("--chains", chains, "MCMC chain count");
    cmd->add_option("--draws-per-chain", draws_per_chain, "Retained MCMC draws per chain");
    cmd->add_option("--thinning", thinning, "MCMC thinning interval");
    cmd->add_option("--burn-in", burn_in, "MCMC burn-in cycles");
    cmd->add_option("--mcmc-step", mcmc_step, "MCMC random-walk step size");
    cmd->add_option("--restarts", restarts, "VI restarts");
    cmd->add_option("--iterations", iterations, "VI iteration limit per restart");
    cmd->add_option("--inducing", inducing, "VI inducing points (0 = min(n, 50))");
    cmd->add_option("--patience", patience, "VI early-stopping patience");
    cmd->add_option("--mc-samples", mc_samples, "VI Monte Carlo samples per gradient");
    cmd->add_option("--learning-rate", learning_rate, "VI Adam learning rate");
  }

  void apply(RunConfig& c) const {
    if (particles) c.smc.particles = *particles;
    if (mutation_steps) c.smc.mutation_steps = *mutation_steps;
    if (max_cycles) c.smc.max_cycles = *max_cycles;
    if (smc_step) c.smc.step_size = *smc_step;
    if (ess_fraction) c.smc.ess_fraction = *ess_fraction;
    if (chains) c.mcmc.chains = *chains;
    if (draws_per_chain) c.mcmc.draws_per_chain = *draws_per_chain;
    if (thinning) c.mcmc.thinning = *thinning;
    if (burn_in) c.mcmc.burn_in = *burn_in;
    if (mcmc_step) c.mcmc.step_size = *mcmc_step;
    if (restarts) c.vi.restarts = *restarts;
    if (iterations) c.vi.max_iterations = *iterations;
    if (inducing) c.vi.inducing = *inducing;
    if (patience) c.vi.adam.patience = *patience;
    if (mc_samples) c.vi.adam.mc_samples = *mc_samples;
    if (learning_rate) c.vi.adam.learning_rate = *learning_rate;
  }
};

struct CommonArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string backend;
  Overrides overrides;

  [[nodiscard]] RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : parse_config(read_json_file(config));
    if (!backend.empty()) c.backend = backend;
    overrides.apply(c);
    if (c.backend != "mcmc" && c.backend != "smc" && c.backend != "vi" && c.backend != "garch") {
      throw CLI::ValidationError("backend must be one of mcmc, smc, vi, garch");
    }
    return c;
  }
};

struct FitArgs {
  CommonArgs common;
  DataSource source;
  std::string resume;
};

Json states_to_json(const std::vector<LatentState>& states) {
  Json out = Json::array();
  for (const auto& s : states) out.push_back(state_to_json(s));
  return out;
}

std::vector<LatentState> states_from_json(const Json& j) {
  std::vector<LatentState> out;
  for (const auto& s : j) out.push_back(state_from_json(s));
  return out;
}

struct GarchParams {
  std::vector<UnivariateGarch> fits;
  DccModel dcc;
};

// Rebuilds the filtered GARCH state from stored parameters and training data.
GarchParams garch_from_json(const Json& j, const Matrix& y) {
  GarchParams out;
  const Json& series = j.at("univariate");
  if (static_cast<Eigen::Index>(series.size()) != y.cols()) throw SchemaError("GARCH fit does not match the data");
  Matrix u(y.rows(), y.cols());
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    const Json& s = series[static_cast<std::size_t>(c)];
    UnivariateGarch f;
    f.omega = s.at("omega").get<double>();
    f.a = s.at("a").get<double>();
    f.b = s.at("b").get<double>();
    f.y = y.col(c);
    f.h = garch_variances(f.y, f.omega, f.a, f.b);
    u.col(c) = f.y.array() / f.h.array().sqrt();
    out.fits.push_back(std::move(f));
  }
  const Json& dcc = j.at("dcc");
  out.dcc = dcc_filter(u, dcc.at("alpha").get<double>(), dcc.at("beta").get<double>(),
                       matrix_from_json(dcc.at("q_bar")));
  return out;
}

struct FitOutcome {
  Json bundle;
  std::vector<LatentState> states;
};

FitOutcome run_fit(const RunConfig& c, const Dataset& train, const Rng& rng, Manifest* manifest,
                   const fs::path* dir, const std::optional<SmcCheckpoint>& resume) {
  FitOutcome out;
  out.bundle = {{"schema", kFitSchema}, {"version", kVersion}, {"backend", c.backend},
                {"x_train", to_json(train.x)}, {"y_train", to_json(train.y)}};
  if (c.backend == "garch") {
    const Matrix& y = train.y;
    const DccGarchFit fit = fit_dcc_garch(y);
    out.bundle["garch"] = garch_to_json(fit);
    if (manifest) {
      manifest->traces()["dcc_loglik"] = fit.dcc.loglik;
      Json warnings = Json::array();
      for (const auto& f : fit.fits) {
        for (const auto& w : f.warnings) warnings.push_back(w);
      }
      manifest->traces()["warnings"] = warnings;
    }
    return out;
  }
  const WishartModel model = resolve_model(c.model, train.d());
  for (const auto& w : model.validate()) std::cerr << "warning: " << w << "\n";
  out.bundle["model"] = model_to_json(model);
  const Observations obs = make_observations(model, train.x, train.y);
  if (c.backend == "mcmc") {
    const ChainsResult res = run_chains(model, obs, c.mcmc, rng);
    Json chains = Json::array();
    for (const auto& ch : res.chains) {
      chains.push_back(states_to_json(ch.draws));
      out.states.insert(out.states.end(), ch.draws.begin(), ch.draws.end());
    }
    out.bundle["chains"] = chains;
    if (manifest) {
      Json acc = Json::array();
      for (const auto& ch : res.chains) {
        acc.push_back({{"theta", ch.acceptance.theta_rate()}, {"scale", ch.acceptance.scale_rate()}});
      }
      manifest->traces()["acceptance"] = acc;
      manifest->traces()["psrf"] = {{"names", res.psrf.names},
                                    {"values", res.psrf.values},
                                    {"converged", res.psrf.converged}};
      manifest->traces()["psrf_trace"] = res.psrf_trace;
    }
  } else if (c.backend == "smc") {
    SmcCallback on_cycle;
    if (dir) {
      on_cycle = [dir](const SmcCheckpoint& cp) {
        write_json_file((*dir / "checkpoint.json").string(), checkpoint_to_json(cp));
      };
    }
    const SmcResult res = run_smc(model, obs, c.smc, rng, on_cycle, resume);
    out.bundle["particles"] = states_to_json(res.swarm.particles);
    out.bundle["weights"] = to_json(res.swarm.weights);
    out.states = res.swarm.particles;
    if (manifest) {
      manifest->traces()["beta_ladder"] = res.beta_ladder;
      manifest->traces()["ess_history"] = res.ess_history;
      manifest->traces()["log_evidence"] = res.log_evidence;
      manifest->traces()["cycles"] = res.cycles;
      manifest->traces()["events"] = res.events;
    }
  } else {
    const ViResult res = fit_vi(model, obs, c.vi, rng);
    out.bundle["variational"] = variational_to_json(res.state);
    if (manifest) {
      Json runs = Json::array();
      for (const auto& r : res.runs) {
        runs.push_back({{"eval_elbo", r.eval_elbo},
                        {"iterations", r.iterations},
                        {"retries", r.retries},
                        {"trace", r.trace}});
      }
      manifest->traces()["restarts"] = runs;
      manifest->traces()["best_restart"] = res.best_restart;
      manifest->traces()["best_eval_elbo"] = res.runs[res.best_restart].eval_elbo;
    }
  }
  return out;
}

void cmd_fit(const FitArgs& a, const std::vector<std::string>& argv) {
  const RunConfig c = a.common.resolve();
  const Dataset data = a.source.load();
  const Dataset train = data.slice(0, a.source.train_size(data));
  const fs::path dir = prepare_out(a.common.out);
  Manifest manifest("fit", a.common.seed, argv);
  manifest.set_config(config_to_json(c));
  manifest["train_rows"] = train.n();
  std::optional<SmcCheckpoint> resume;
  if (!a.resume.empty()) {
    if (c.backend != "smc") throw CLI::ValidationError("--resume applies to the smc backend only");
    resume = checkpoint_from_json(read_json_file(a.resume));
  }
  const Rng rng = Rng(a.common.seed).split(kFitStream);
  const FitOutcome fit = run_fit(c, train, rng, &manifest, &dir, resume);
  write_json_file((dir / "fit.json").string(), fit.bundle);
  manifest.add_output(dir / "fit.json");
  if (!fit.states.empty()) {
    std::ofstream jsonl(dir / "states.jsonl");
    write_states_jsonl(jsonl, fit.states);
    manifest.add_output(dir / "states.jsonl");
  }
  if (c.backend == "smc") manifest.add_output(dir / "checkpoint.json");
  manifest.write(dir);
  std::cout << c.backend << " fit written to " << (dir / "fit.json").string() << "\n";
}

// ---- predict -------------------------------------------------------------

// Posterior draws of the covariance path at xs_test from a fit bundle.
std::vector<CovariancePath> predict_from_fit(const Json& fit, const Vector& xs_test, int draws, Rng& rng) {
  const auto backend = fit.at("backend").get<std::string>();
  const Vector x_train = vector_from_json(fit.at("x_train"));
  const Matrix y_train = matrix_from_json(fit.at("y_train"));
  if (backend == "garch") {
    // Deterministic forecast continuing from the end of the training rows.
    const GarchParams g = garch_from_json(fit.at("garch"), y_train);
    return {garch_forecast(g.dcc, g.fits, static_cast<int>(xs_test.size()), xs_test)};
  }
  const WishartModel model = model_from_json(fit.at("model"));
  if (backend == "vi") {
    return predict_vi(variational_from_json(fit.at("variational")), model, xs_test, draws, rng);
  }
  std::vector<LatentState> states;
  if (backend == "mcmc") {
    std::vector<Chain> chains;
    for (const auto& c : fit.at("chains")) chains.push_back(Chain{states_from_json(c), {}});
    const std::size_t per_chain = (static_cast<std::size_t>(draws) + chains.size() - 1) / chains.size();
    states = pool_draws(chains, per_chain, rng);
  } else if (backend == "smc") {
    ParticleSwarm swarm;
    swarm.particles = states_from_json(fit.at("particles"));
    swarm.weights = vector_from_json(fit.at("weights"));
    swarm.beta = 1.0;
    swarm.loglik = Vector::Zero(static_cast<Eigen::Index>(swarm.size()));
    states = resample_systematic(swarm, rng).particles;
    // Evenly spaced subset keeps the resampled proportions.
    if (states.size() > static_cast<std::size_t>(draws)) {
      std::vector<LatentState> kept;
      for (int k = 0; k < draws; ++k) kept.push_back(states[static_cast<std::size_t>(k) * states.size() / draws]);
      states = std::move(kept);
    }
  } else {
    throw SchemaError("unknown backend '" + backend + "' in fit bundle");
  }
  std::vector<CovariancePath> out;
  for (auto& p : predict(model, states, x_train, xs_test, rng)) out.push_back(std::move(p.path));
  return out;
}

CovariancePath mean_of(const std::vector<CovariancePath>& draws) {
  CovariancePath m = draws.front();
  for (std::size_t k = 1; k < draws.size(); ++k) {
    for (std::size_t i = 0; i < m.size(); ++i) m.sigma[i] += draws[k].sigma[i];
  }
  for (auto& s : m.sigma) s /= static_cast<double>(draws.size());
  return m;
}

struct PredictArgs {
  std::string fit;
  std::uint64_t seed = 0;
  std::string out;
  int draws = 200;
  DataSource source;
  std::string rows;
  std::vector<double> grid;
};

std::pair<Eigen::Index, Eigen::Index> parse_rows(const std::string& spec, Eigen::Index n) {
  if (spec.empty()) return {0, n};
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--rows expects begin:end");
  const Eigen::Index b = colon == 0 ? 0 : std::stol(spec.substr(0, colon));
  const Eigen::Index e = colon + 1 == spec.size() ? n : std::stol(spec.substr(colon + 1));
  if (b < 0 || e > n || b >= e) throw CLI::ValidationError("--rows range is empty or out of bounds");
  return {b, e};
}

void cmd_predict(const PredictArgs& a, const std::vector<std::string>& argv) {
  const Json fit = read_json_file(a.fit);
  Vector xs;
  std::optional<Dataset> test;
  if (!a.grid.empty()) {
    if (a.grid.size() != 3 || a.grid[2] < 1) throw CLI::ValidationError("--grid expects from,to,count");
    xs = Vector::LinSpaced(static_cast<Eigen::Index>(a.grid[2]), a.grid[0], a.grid[1]);
  } else {
    const Dataset data = a.source.load();
    const auto [b, e] = parse_rows(a.rows, data.n());
    test = data.slice(b, e);
    xs = test->x;
  }
  const fs::path dir = prepare_out(a.out);
  Manifest manifest("predict", a.seed, argv);
  manifest.set_config({{"fit", fs::path(a.fit).filename().string()}, {"draws", a.draws}, {"rows", a.rows}});
  Rng rng = Rng(a.seed).split(kPredictStream);
  const auto draws = predict_from_fit(fit, xs, a.draws, rng);
  std::ofstream csv(dir / "paths.csv");
  write_paths_csv(csv, draws);
  manifest.add_output(dir / "paths.csv");
  write_json_file((dir / "mean_path.json").string(), path_to_json(mean_of(draws)));
  manifest.add_output(dir / "mean_path.json");
  manifest.traces()["draw_count"] = draws.size();
  manifest.write(dir);
  std::cout << draws.size() << " covariance path draws at " << xs.size() << " inputs written to "
            << (dir / "paths.csv").string() << "\n";
}

// ---- diagnose --------------------------------------------------------------

struct DiagnoseArgs {
  std::string fit;
  std::string paths;
  DataSource source;
  std::string rows;
  std::string out;
};

std::vector<CovariancePath> read_paths(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  auto draws = read_paths_csv(in);
  if (draws.empty()) throw DomainError("'" + path + "' holds no covariance paths");
  return draws;
}

void cmd_diagnose(const DiagnoseArgs& a, const std::vector<std::string>& argv) {
  if (a.fit.empty() && a.paths.empty()) throw CLI::ValidationError("give --fit and/or --paths");
  const fs::path dir = prepare_out(a.out);
  Manifest manifest("diagnose", 0, argv);
  manifest.set_config({{"fit", a.fit}, {"paths", a.paths}, {"rows", a.rows}});
  Json metrics = Json::object();
  std::ostringstream table;
  table << "metric,value\n" << std::setprecision(12);
  if (!a.fit.empty()) {
    const Json fit = read_json_file(a.fit);
    if (fit.at("backend") != "mcmc") throw DomainError("PSRF needs an mcmc fit bundle");
    const WishartModel model = model_from_json(fit.at("model"));
    std::vector<Chain> chains;
    for (const auto& c : fit.at("chains")) chains.push_back(Chain{states_from_json(c), {}});
    const PsrfReport report = convergence_report(chains, model);
    if (report.names.empty()) throw DegenerateError("chains too short to compute PSRF");
    metrics["psrf"] = {{"names", report.names}, {"values", report.values}, {"converged", report.converged}};
    double worst = 0.0;
    for (std::size_t i = 0; i < report.names.size(); ++i) {
      table << "psrf:" << report.names[i] << ',' << report.values[i] << '\n';
      worst = std::max(worst, report.values[i]);
    }
    metrics["psrf_max"] = worst;
  }
  if (!a.paths.empty()) {
    const auto draws = read_paths(a.paths);
    if (a.source.dataset.empty() && a.source.csv.empty()) {
      throw CLI::ValidationError("--paths needs --data or --csv to score against");
    }
    const Dataset data = a.source.load();
    const auto [b, e] = parse_rows(a.rows, data.n());
    const Dataset test = data.slice(b, e);
    const CovariancePath mean = mean_of(draws);
    if (test.truth) {
      metrics["mse_mean_path"] = mse_mean_path(mean, *test.truth);
      metrics["mse_samples"] = mse_samples(draws, *test.truth);
      table << "mse_mean_path," << metrics["mse_mean_path"].get<double>() << '\n';
      table << "mse_samples," << metrics["mse_samples"].get<double>() << '\n';
    }
    metrics["avg_loglik"] = avg_loglik(test.y, Matrix::Zero(test.n(), test.d()), mean);
    table << "avg_loglik," << metrics["avg_loglik"].get<double>() << '\n';
  }
  write_json_file((dir / "metrics.json").string(), metrics);
  write_text_file((dir / "metrics.csv").string(), table.str());
  manifest.add_output(dir / "metrics.json");
  manifest.add_output(dir / "metrics.csv");
  manifest.write(dir);
  std::cout << table.str();
}

// ---- test-dynamics ---------------------------------------------------------

struct DynamicsArgs {
  std::string paths;
  double level = 0.95;
  double rope = 0.005;
  std::string out;
};

void cmd_test_dynamics(const DynamicsArgs& a, const std::vector<std::string>& argv) {
  const auto draws = read_paths(a.paths);
  const fs::path dir = prepare_out(a.out);
  Manifest manifest("test-dynamics", 0, argv);
  manifest.set_config({{"paths", a.paths}, {"level", a.level}, {"rope", a.rope}});
  const int d = static_cast<int>(draws.front().dim());
  std::ostringstream verdicts, effects;
  verdicts << "row,col,label,warnings\n";
  effects << "row,col,draw_id,effect_size\n" << std::setprecision(12);
  Json out = Json::array();
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const DynamicsVerdict v = dynamics_test(draws, {i, j}, a.level, a.rope);
      std::string warnings;
      for (const auto& w : v.warnings) warnings += (warnings.empty() ? "" : "; ") + w;
      verdicts << i << ',' << j << ',' << to_string(v.label) << ",\"" << warnings << "\"\n";
      const auto sizes = effect_size_distribution(draws, {i, j});
      for (std::size_t k = 0; k < sizes.size(); ++k) effects << i << ',' << j << ',' << k << ',' << sizes[k] << '\n';
      out.push_back({{"row", i},
                     {"col", j},
                     {"label", to_string(v.label)},
                     {"warnings", v.warnings},
                     {"hdi_lower", to_json(v.lower)},
                     {"hdi_upper", to_json(v.upper)}});
    }
  }
  write_text_file((dir / "verdicts.csv").string(), verdicts.str());
  write_json_file((dir / "verdicts.json").string(), out);
  write_text_file((dir / "effect_sizes.csv").string(), effects.str());
  for (const char* f : {"verdicts.csv", "verdicts.json", "effect_sizes.csv"}) manifest.add_output(dir / f);
  manifest.write(dir);
  std::cout << verdicts.str();
}

// ---- compare ---------------------------------------------------------------

struct CompareArgs {
  CommonArgs common;
  DataSource source;
  std::vector<std::string> backends{"mcmc", "smc", "vi", "garch"};
  int folds = 10;
  long test_len = 10;
};

void cmd_compare(const CompareArgs& a, const std::vector<std::string>& argv) {
  RunConfig base = a.common.resolve();
  const Dataset data = a.source.load();
  const CvPlan plan = expanding_cv(data.n(), a.folds, a.test_len);
  const fs::path dir = prepare_out(a.common.out);
  Manifest manifest("compare", a.common.seed, argv);
  Json cfg = config_to_json(base);
  cfg["backends"] = a.backends;
  cfg["folds"] = a.folds;
  cfg["test_len"] = a.test_len;
  manifest.set_config(cfg);
  const Rng root = Rng(a.common.seed).split(kCompareStream);

  std::ostringstream fold_table;
  fold_table << "backend,fold,train_rows,test_rows,avg_loglik\n" << std::setprecision(12);
  std::ostringstream summary;
  summary << "backend,mean_test_loglik,sd,folds\n" << std::setprecision(12);
  Json results = Json::object();
  for (std::size_t bi = 0; bi < a.backends.size(); ++bi) {
    RunConfig c = base;
    c.backend = a.backends[bi];
    if (c.backend != "mcmc" && c.backend != "smc" && c.backend != "vi" && c.backend != "garch") {
      throw CLI::ValidationError("unknown backend '" + c.backend + "'");
    }
    std::vector<double> lls;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
      const Fold& fold = plan.folds[f];
      const Dataset train = data.slice(0, fold.train_end);
      const Dataset test = data.slice(fold.test_begin, fold.test_end);
      const Rng stream = root.split(f).split(bi);
      const FitOutcome fit = run_fit(c, train, stream.split(0), nullptr, nullptr, std::nullopt);
      Rng prng = stream.split(1);
      const auto draws = predict_from_fit(fit.bundle, test.x, c.predict_draws, prng);
      // The test mean comes from the causal mean function run over train + test rows.
      Matrix mean = Matrix::Zero(test.n(), test.d());
      if (c.backend != "garch") {
        const WishartModel model = model_from_json(fit.bundle.at("model"));
        const Dataset upto = data.slice(0, fold.test_end);
        mean = mean_values(model.mean, upto.y).bottomRows(test.n());
      }
      const double ll = avg_loglik(test.y, mean, mean_of(draws));
      lls.push_back(ll);
      fold_table << c.backend << ',' << f + 1 << ',' << train.n() << ',' << test.n() << ',' << ll << '\n';
      std::cerr << c.backend << " fold " << f + 1 << "/" << plan.folds.size() << ": " << ll << "\n";
    }
    double m = 0.0;
    for (double v : lls) m += v;
    m /= static_cast<double>(lls.size());
    double var = 0.0;
    for (double v : lls) var += (v - m) * (v - m);
    const double sd = lls.size() > 1 ? std::sqrt(var / static_cast<double>(lls.size() - 1)) : 0.0;
    summary << c.backend << ',' << m << ',' << sd << ',' << lls.size() << '\n';
    results[c.backend] = {{"mean_test_loglik", m}, {"sd", sd}, {"per_fold", lls}};
  }
  write_text_file((dir / "folds.csv").string(), fold_table.str());
  write_text_file((dir / "table.csv").string(), summary.str());
  write_json_file((dir / "table.json").string(), results);
  for (const char* f : {"folds.csv", "table.csv", "table.json"}) manifest.add_output(dir / f);
  manifest.write(dir);
  std::cout << summary.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized Wishart process covariance models"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  const std::vector<std::string> args(argv, argv + argc);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset with ground truth");
  simulate->add_option("--study", sim.study, "1: smooth GP-driven paths, 2: block-switching correlations")
      ->check(CLI::IsMember({1, 2}));
  simulate->add_option("--seed", sim.seed, "Root random seed");
  simulate->add_option("--out", sim.out, "Output directory")->required();
  simulate->add_option("--n", sim.n, "Rows (default 300 for study 1, 600 for study 2)");
  simulate->add_option("--d", sim.d, "Study 1 dimension");
  simulate->add_option("--v", sim.v, "Study 1 degrees of freedom");
  simulate->add_option("--lengthscale", sim.lengthscale, "Study 1 RBF lengthscale");
  simulate->add_option("--period", sim.period, "Study 2 rows per block");
  simulate->add_option("--high", sim.high, "Study 2 covariance of the correlated blocks");
  simulate->add_option("--n-train", sim.n_train, "Study 2 training rows (sets the input scale)");

  const auto add_common = [](CLI::App* cmd, CommonArgs& c, bool backend) {
    cmd->add_option("--config", c.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "Root random seed");
    cmd->add_option("--out", c.out, "Output directory")->required();
    if (backend) cmd->add_option("--backend", c.backend, "mcmc, smc, vi or garch");
    c.overrides.add_options(cmd);
  };

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a backend to a dataset");
  add_common(fit_cmd, fit.common, true);
  fit.source.add_options(fit_cmd, true);
  fit_cmd->add_option("--resume", fit.resume, "Resume SMC from a checkpoint")->check(CLI::ExistingFile);

  PredictArgs pred;
  auto* predict_cmd = app.add_subcommand("predict", "Draw covariance paths at new inputs");
  predict_cmd->add_option("--fit", pred.fit, "fit.json from 'fit'")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--seed", pred.seed, "Root random seed");
  predict_cmd->add_option("--out", pred.out, "Output directory")->required();
  predict_cmd->add_option("--draws", pred.draws, "Posterior draws")->check(CLI::PositiveNumber);
  predict_cmd->add_option("--rows", pred.rows, "Dataset rows begin:end giving the test inputs");
  predict_cmd->add_option("--grid", pred.grid, "Evenly spaced inputs from,to,count")->delimiter(',');
  pred.source.add_options(predict_cmd, false);

  DiagnoseArgs diag;
  auto* diagnose_cmd = app.add_subcommand("diagnose", "PSRF and accuracy metrics");
  diagnose_cmd->add_option("--fit", diag.fit, "mcmc fit.json for PSRF")->check(CLI::ExistingFile);
  diagnose_cmd->add_option("--paths", diag.paths, "paths.csv to score")->check(CLI::ExistingFile);
  diagnose_cmd->add_option("--rows", diag.rows, "Dataset rows begin:end matching the paths");
  diagnose_cmd->add_option("--out", diag.out, "Output directory")->required();
  diag.source.add_options(diagnose_cmd, false);

  DynamicsArgs dyn;
  auto* dynamics_cmd = app.add_subcommand("test-dynamics", "Classify each variable pair as uncorrelated, static or dynamic");
  dynamics_cmd->add_option("--paths", dyn.paths, "paths.csv of posterior draws")->required()->check(CLI::ExistingFile);
  dynamics_cmd->add_option("--level", dyn.level, "HDI mass")->check(CLI::Range(0.0, 1.0));
  dynamics_cmd->add_option("--rope", dyn.rope, "ROPE half-width")->check(CLI::NonNegativeNumber);
  dynamics_cmd->add_option("--out", dyn.out, "Output directory")->required();

  CompareArgs cmp;
  auto* compare_cmd = app.add_subcommand("compare", "Expanding-window cross-validation across backends");
  add_common(compare_cmd, cmp.common, false);
  cmp.source.add_options(compare_cmd, false);
  compare_cmd->add_option("--backends", cmp.backends, "Backends to compare")->delimiter(',');
  compare_cmd->add_option("--folds", cmp.folds, "Fold count")->check(CLI::PositiveNumber);
  compare_cmd->add_option("--test-len", cmp.test_len, "Test rows per fold")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
    if (*simulate) cmd_simulate(sim, args);
    if (*fit_cmd) cmd_fit(fit, args);
    if (*predict_cmd) cmd_predict(pred, args);
    if (*diagnose_cmd) cmd_diagnose(diag, args);
    if (*dynamics_cmd) cmd_test_dynamics(dyn, args);
    if (*compare_cmd) cmd_compare(cmp, args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const PartialResultsError& e) {
    std::cerr << "error: " << e.what() << " (" << e.completed().size() << " chains completed)\n";
    return 1;
  } catch (const NonConvergenceError& e) {
    std::cerr << "error: " << e.what() << " (ladder reached " << e.ladder().back() << ")\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
