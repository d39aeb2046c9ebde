#include "gwp/io_json.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace gwp {

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw SchemaError("unknown key '" + item.key() + "' in " + where);
  }
}

namespace {

Json number(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

double number_from(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw SchemaError("expected a number, got " + j.dump());
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad value for '") + key + "': " + e.what());
  }
}

const Json& require(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw SchemaError("missing key '" + std::string(key) + "' in " + where);
  return j.at(key);
}

}  // namespace

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v[i]));
  return out;
}

Json to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(number(m(r, c)));
    out.push_back(std::move(row));
  }
  return out;
}

Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw SchemaError("expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number_from(j[i]);
  return v;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array()) throw SchemaError("expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw SchemaError("ragged matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number_from(row[static_cast<std::size_t>(c)]);
  }
  return m;
}

Json kernel_to_json(const Kernel& k) {
  static const char* kTypes[] = {"rbf", "matern12", "periodic", "locally_periodic", "sum", "product"};
  Json out = {{"type", kTypes[static_cast<int>(k.kind())]}, {"params", Json::object()},
              {"children", Json::array()}};
  if (k.kind() == KernelKind::Sum || k.kind() == KernelKind::Product) {
    for (const auto& c : k.children()) out["children"].push_back(kernel_to_json(c));
    return out;
  }
  const Vector p = k.params();
  const auto names = k.param_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto dot = names[i].rfind('.');
    out["params"][dot == std::string::npos ? names[i] : names[i].substr(dot + 1)] =
        p[static_cast<Eigen::Index>(i)];
  }
  return out;
}

Kernel kernel_from_json(const Json& j) {
  reject_unknown_keys(j, {"type", "params", "children"}, "kernel");
  const auto type = get_or<std::string>(j, "type", "");
  const Json params = j.contains("params") ? j.at("params") : Json::object();
  const Json children = j.contains("children") ? j.at("children") : Json::array();
  if (!params.is_object()) throw SchemaError("kernel params must be an object");
  if (!children.is_array()) throw SchemaError("kernel children must be an array");
  const auto num = [&](const char* key) {
    const double v = number_from(require(params, key, "kernel " + type + " params"));
    if (!(v > 0.0) || !std::isfinite(v)) throw SchemaError(std::string(key) + " must be positive");
    return v;
  };
  const auto leaf = [&](std::initializer_list<const char*> keys) {
    reject_unknown_keys(params, keys, "kernel " + type + " params");
    if (!children.empty()) throw SchemaError(type + " kernel takes no children");
  };
  if (type == "rbf" || type == "matern12") {
    leaf({"lengthscale"});
    return type == "rbf" ? Kernel::rbf(num("lengthscale")) : Kernel::matern12(num("lengthscale"));
  }
  if (type == "periodic") {
    leaf({"period", "lengthscale"});
    return Kernel::periodic(num("period"), num("lengthscale"));
  }
  if (type == "locally_periodic") {
    leaf({"period", "lengthscale_periodic", "lengthscale_rbf"});
    return Kernel::locally_periodic(num("period"), num("lengthscale_periodic"),
                                    num("lengthscale_rbf"));
  }
  if (type == "sum" || type == "product") {
    if (!params.empty()) throw SchemaError(type + " kernel takes no params");
    if (children.size() < 2) throw SchemaError(type + " needs at least two children");
    Kernel acc = kernel_from_json(children[0]);
    for (std::size_t i = 1; i < children.size(); ++i) {
      Kernel next = kernel_from_json(children[i]);
      acc = type == "sum" ? Kernel::sum(std::move(acc), std::move(next))
                          : Kernel::product(std::move(acc), std::move(next));
    }
    return acc;
  }
  throw SchemaError("unknown kernel type '" + type + "'");
}

Json model_to_json(const WishartModel& m) {
  Json priors = Json::array();
  for (const auto& p : m.hyperpriors) priors.push_back({{"mu_log", p.mu_log}, {"sigma_log", p.sigma_log}});
  return {{"d", m.d},
          {"v", m.v},
          {"kernel", kernel_to_json(m.kernel)},
          {"hyperpriors", priors},
          {"noise", m.noise},
          {"noise_init", m.noise_init},
          {"learn_kernel", m.learn_kernel},
          {"learn_scale", m.learn_scale},
          {"mean",
           {{"kind", m.mean.kind == MeanFunction::Kind::Ema ? "ema" : "zero"},
            {"window", m.mean.window}}}};
}

WishartModel model_from_json(const Json& j) {
  reject_unknown_keys(j, {"d", "v", "kernel", "hyperpriors", "noise", "noise_init", "learn_kernel",
                          "learn_scale", "mean"},
                      "model");
  WishartModel m;
  m.d = get_or(j, "d", m.d);
  m.v = get_or(j, "v", m.v);
  if (j.contains("kernel")) m.kernel = kernel_from_json(j.at("kernel"));
  if (j.contains("hyperpriors")) {
    for (const auto& p : j.at("hyperpriors")) {
      reject_unknown_keys(p, {"mu_log", "sigma_log"}, "hyperprior");
      m.hyperpriors.push_back({get_or(p, "mu_log", 0.0), get_or(p, "sigma_log", 1.0)});
    }
  }
  m.noise = get_or(j, "noise", m.noise);
  m.noise_init = get_or(j, "noise_init", m.noise_init);
  m.learn_kernel = get_or(j, "learn_kernel", m.learn_kernel);
  m.learn_scale = get_or(j, "learn_scale", m.learn_scale);
  if (j.contains("mean")) {
    const Json& mean = j.at("mean");
    reject_unknown_keys(mean, {"kind", "window"}, "mean");
    const auto kind = get_or<std::string>(mean, "kind", "zero");
    if (kind == "ema") {
      m.mean.kind = MeanFunction::Kind::Ema;
    } else if (kind != "zero") {
      throw SchemaError("mean kind must be 'zero' or 'ema'");
    }
    m.mean.window = get_or(mean, "window", m.mean.window);
  }
  m.validate();
  return m;
}

Json state_to_json(const LatentState& s) {
  return {{"f", to_json(s.f)},
          {"log_theta", to_json(s.log_theta)},
          {"scale_chol", to_json(s.scale_chol)},
          {"noise", to_json(s.noise)}};
}

LatentState state_from_json(const Json& j) {
  reject_unknown_keys(j, {"f", "log_theta", "scale_chol", "noise"}, "state");
  LatentState s;
  s.f = matrix_from_json(require(j, "f", "state"));
  s.log_theta = vector_from_json(require(j, "log_theta", "state"));
  s.scale_chol = matrix_from_json(require(j, "scale_chol", "state"));
  s.noise = vector_from_json(require(j, "noise", "state"));
  return s;
}

Json variational_to_json(const VariationalState& s) {
  Json chol = Json::array();
  for (const auto& c : s.s_chol) chol.push_back(to_json(c));
  return {{"z", to_json(s.z)},
          {"m", to_json(s.m)},
          {"s_chol", chol},
          {"log_theta", to_json(s.log_theta)},
          {"scale_chol", to_json(s.scale_chol)},
          {"noise_raw", to_json(s.noise_raw)}};
}

VariationalState variational_from_json(const Json& j) {
  reject_unknown_keys(j, {"z", "m", "s_chol", "log_theta", "scale_chol", "noise_raw"},
                      "variational state");
  VariationalState s;
  s.z = vector_from_json(require(j, "z", "variational state"));
  s.m = matrix_from_json(require(j, "m", "variational state"));
  for (const auto& c : require(j, "s_chol", "variational state")) s.s_chol.push_back(matrix_from_json(c));
  s.log_theta = vector_from_json(require(j, "log_theta", "variational state"));
  s.scale_chol = matrix_from_json(require(j, "scale_chol", "variational state"));
  s.noise_raw = vector_from_json(require(j, "noise_raw", "variational state"));
  if (s.m.rows() == 0 && !s.s_chol.empty()) s.m.resize(static_cast<Eigen::Index>(s.s_chol.size()), s.z.size());
  return s;
}

Json path_to_json(const CovariancePath& p) {
  Json sig = Json::array();
  for (const auto& s : p.sigma) sig.push_back(to_json(s));
  return {{"x", to_json(p.x)}, {"sigma", sig}};
}

CovariancePath path_from_json(const Json& j) {
  reject_unknown_keys(j, {"x", "sigma"}, "covariance path");
  CovariancePath p;
  p.x = vector_from_json(require(j, "x", "covariance path"));
  for (const auto& s : require(j, "sigma", "covariance path")) p.sigma.push_back(matrix_from_json(s));
  if (static_cast<Eigen::Index>(p.sigma.size()) != p.x.size()) {
    throw SchemaError("covariance path has mismatched x and sigma lengths");
  }
  return p;
}

Json dataset_to_json(const Dataset& d) {
  Json out = {{"schema", kDatasetSchema},
              {"version", kVersion},
              {"x", to_json(d.x)},
              {"y", to_json(d.y)},
              {"metadata", d.metadata}};
  if (d.truth) out["truth"] = path_to_json(*d.truth);
  return out;
}

Dataset dataset_from_json(const Json& j) {
  reject_unknown_keys(j, {"schema", "version", "x", "y", "truth", "metadata"}, "dataset");
  if (get_or<std::string>(j, "schema", kDatasetSchema) != kDatasetSchema) {
    throw SchemaError("unsupported dataset schema");
  }
  Dataset d;
  d.x = vector_from_json(require(j, "x", "dataset"));
  d.y = matrix_from_json(require(j, "y", "dataset"));
  if (d.y.rows() == 0) d.y.resize(0, 0);
  if (j.contains("truth")) d.truth = path_from_json(j.at("truth"));
  if (j.contains("metadata")) {
    d.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
  }
  d.validate();
  return d;
}

Json garch_to_json(const DccGarchFit& fit) {
  Json series = Json::array();
  for (const auto& f : fit.fits) {
    series.push_back({{"omega", f.omega}, {"a", f.a}, {"b", f.b}, {"loglik", f.loglik},
                      {"warnings", f.warnings}});
  }
  const int d = static_cast<int>(fit.fits.size());
  return {{"univariate", series},
          {"dcc", {{"alpha", fit.dcc.alpha}, {"beta", fit.dcc.beta}, {"q_bar", to_json(fit.dcc.q_bar)},
                   {"loglik", fit.dcc.loglik}}},
          {"parameter_count", dcc_parameter_count(d)},
          {"parameter_count_unit_target", dcc_parameter_count_unit_target(d)}};
}

void write_paths_csv(std::ostream& out, const std::vector<CovariancePath>& draws) {
  out << "x,row,col,value,draw_id\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < draws.size(); ++k) {
    const auto& p = draws[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Matrix& s = p.sigma[i];
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        for (Eigen::Index c = r; c < s.cols(); ++c) {
          out << p.x[static_cast<Eigen::Index>(i)] << ',' << r << ',' << c << ',' << s(r, c) << ','
              << k << '\n';
        }
      }
    }
  }
}

std::vector<CovariancePath> read_paths_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("x,row,col,value,draw_id", 0) != 0) {
    throw ParseError("expected header x,row,col,value,draw_id", line_no);
  }
  struct Entry {
    double x;
    long row, col;
    double value;
  };
  std::map<long, std::vector<Entry>> by_draw;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream ls(line);
    Entry e{};
    long draw = 0;
    char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    if (!(ls >> e.x >> c1 >> e.row >> c2 >> e.col >> c3 >> e.value >> c4 >> draw) || c1 != ',' ||
        c2 != ',' || c3 != ',' || c4 != ',' || e.row < 0 || e.col < e.row) {
      throw ParseError("malformed path row", line_no);
    }
    by_draw[draw].push_back(e);
  }
  std::vector<CovariancePath> out;
  for (auto& [draw, entries] : by_draw) {
    long d = 0;
    for (const auto& e : entries) d = std::max(d, e.col + 1);
    std::vector<double> xs;
    std::map<double, std::size_t> index;
    CovariancePath p;
    for (const auto& e : entries) {
      auto it = index.find(e.x);
      if (it == index.end()) {
        it = index.emplace(e.x, xs.size()).first;
        xs.push_back(e.x);
        p.sigma.push_back(Matrix::Zero(d, d));
      }
      Matrix& s = p.sigma[it->second];
      s(e.row, e.col) = e.value;
      s(e.col, e.row) = e.value;
    }
    p.x = Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    out.push_back(std::move(p));
  }
  return out;
}

void write_states_jsonl(std::ostream& out, const std::vector<LatentState>& states) {
  for (const auto& s : states) out << state_to_json(s).dump() << '\n';
}

std::vector<LatentState> read_states_jsonl(std::istream& in) {
  std::vector<LatentState> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(state_from_json(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

Json checkpoint_to_json(const SmcCheckpoint& c) {
  Json particles = Json::array();
  for (const auto& p : c.swarm.particles) particles.push_back(state_to_json(p));
  return {{"particles", particles},
          {"weights", to_json(c.swarm.weights)},
          {"beta", c.swarm.beta},
          {"loglik", to_json(c.swarm.loglik)},
          {"beta_ladder", c.beta_ladder},
          {"ess_history", c.ess_history},
          {"log_evidence", c.log_evidence},
          {"cycle", c.cycle}};
}

SmcCheckpoint checkpoint_from_json(const Json& j) {
  reject_unknown_keys(j, {"particles", "weights", "beta", "loglik", "beta_ladder", "ess_history",
                          "log_evidence", "cycle"},
                      "checkpoint");
  SmcCheckpoint c;
  for (const auto& p : require(j, "particles", "checkpoint")) c.swarm.particles.push_back(state_from_json(p));
  c.swarm.weights = vector_from_json(require(j, "weights", "checkpoint"));
  c.swarm.beta = require(j, "beta", "checkpoint").get<double>();
  c.swarm.loglik = vector_from_json(require(j, "loglik", "checkpoint"));
  c.beta_ladder = require(j, "beta_ladder", "checkpoint").get<std::vector<double>>();
  c.ess_history = require(j, "ess_history", "checkpoint").get<std::vector<double>>();
  c.log_evidence = require(j, "log_evidence", "checkpoint").get<double>();
  c.cycle = require(j, "cycle", "checkpoint").get<int>();
  return c;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write to '" + path + "' failed");
}

Json read_json_file(const std::string& path) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace gwp
