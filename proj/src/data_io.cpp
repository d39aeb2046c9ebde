#include "gwp/data_io.hpp"

#include "gwp/gp.hpp"
#include "gwp/rng.hpp"
#include "gwp/wishart.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace gwp {

void Dataset::validate() const {
  if (x.size() != y.rows()) throw DomainError("x and Y have different lengths");
  if (!x.allFinite()) throw DomainError("x contains non-finite values");
  if (!y.allFinite()) throw DomainError("Y contains non-finite values");
  if (truth && static_cast<Eigen::Index>(truth->size()) != y.rows()) {
    throw DomainError("ground-truth path length does not match the data");
  }
}

Dataset Dataset::slice(Eigen::Index begin, Eigen::Index end) const {
  if (begin < 0 || end < begin || end > n()) throw DomainError("slice out of range");
  Dataset out;
  out.x = x.segment(begin, end - begin);
  out.y = y.middleRows(begin, end - begin);
  out.metadata = metadata;
  if (truth) {
    CovariancePath p;
    p.x = truth->x.segment(begin, end - begin);
    p.sigma.assign(truth->sigma.begin() + begin, truth->sigma.begin() + end);
    out.truth = std::move(p);
  }
  return out;
}

namespace {

Matrix sample_rows(const CovariancePath& path, Rng& rng) {
  const Eigen::Index d = path.dim();
  Matrix y(static_cast<Eigen::Index>(path.size()), d);
  for (std::size_t i = 0; i < path.size(); ++i) {
    const CholeskyFactor chol = chol_jitter(path.sigma[i], "Sigma(x_i)");
    y.row(static_cast<Eigen::Index>(i)) = sample_mvn(Vector::Zero(d), chol, rng).transpose();
  }
  return y;
}

}  // namespace

Dataset generate_sim1(std::uint64_t seed, Eigen::Index n, int d, int v, double lengthscale) {
  if (n < 1 || d < 1 || v < 1) throw DomainError("sim1 needs n, d, v >= 1");
  if (!(lengthscale > 0.0)) throw DomainError("lengthscale must be positive");
  const Rng root(seed);
  Dataset out;
  out.x = n == 1 ? Vector(Vector::Zero(1)) : Vector(Vector::LinSpaced(n, 0.0, 1.0));
  LatentState state;
  Rng f_rng = root.split(1);
  state.f = sample_gp_prior(Kernel::rbf(lengthscale), out.x, static_cast<Eigen::Index>(d) * v, f_rng);
  state.scale_chol = Matrix::Identity(d, d);
  state.noise = Vector::Zero(d);
  out.truth = covariance_path(state, out.x);
  Rng y_rng = root.split(2);
  out.y = sample_rows(*out.truth, y_rng);
  out.metadata = {{"study", "1"},
                  {"seed", std::to_string(seed)},
                  {"d", std::to_string(d)},
                  {"v", std::to_string(v)},
                  {"lengthscale", std::to_string(lengthscale)}};
  return out;
}

Dataset generate_sim2(std::uint64_t seed, Eigen::Index n, Eigen::Index period, double high,
                      Eigen::Index n_train) {
  if (n < 1 || period < 1 || n_train < 1) throw DomainError("sim2 needs n, period, n_train >= 1");
  // Three unit variances with a common covariance c are PD iff -0.5 < c < 1.
  if (!(high > -0.5 && high < 1.0)) throw DomainError("sim2 covariance must lie in (-0.5, 1)");
  constexpr int d = 3;
  const Rng root(seed);
  Dataset out;
  out.x.resize(n);
  CovariancePath truth;
  truth.sigma.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    out.x[i] = static_cast<double>(i) / static_cast<double>(n_train);
    const double c = (i / period) % 2 == 0 ? 0.0 : high;
    Matrix s = Matrix::Constant(d, d, c);
    s.diagonal().setOnes();
    truth.sigma.push_back(s);
  }
  truth.x = out.x;
  out.truth = std::move(truth);
  Rng y_rng = root.split(2);
  out.y = sample_rows(*out.truth, y_rng);
  out.metadata = {{"study", "2"},
                  {"seed", std::to_string(seed)},
                  {"period_rows", std::to_string(period)},
                  {"high", std::to_string(high)},
                  {"n_train", std::to_string(n_train)},
                  {"n_test", std::to_string(std::max<Eigen::Index>(0, n - n_train))}};
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out = s.substr(b, e - b + 1);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') quoted = !quoted;
    if (ch == delim && !quoted) {
      out.push_back(trim(field));
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  out.push_back(trim(field));
  return out;
}

bool is_missing(const std::string& s) {
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower.empty() || lower == "na" || lower == "nan" || lower == "null";
}

}  // namespace

CsvLoad parse_csv(const std::string& text, const CsvOptions& options) {
  if (options.downsample_every < 1) throw DomainError("downsample factor must be >= 1");
  if (options.x_column.empty()) throw SchemaError("no x column given");
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_fields(line, options.delimiter);
      break;
    }
  }
  if (header.empty()) throw ParseError("missing header row", line_no);
  const auto find = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t x_idx = find(options.x_column);
  std::vector<std::size_t> cols;
  if (options.value_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c != x_idx) cols.push_back(c);
    }
  } else {
    for (const auto& name : options.value_columns) cols.push_back(find(name));
  }
  if (cols.empty()) throw SchemaError("no value columns selected");

  std::vector<double> xs;
  std::vector<std::vector<double>> rows;
  CsvLoad out;
  const auto parse = [&](const std::string& field, std::size_t ln) {
    double value = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    if (!field.empty() && *begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) throw ParseError("non-numeric value '" + field + "'", ln);
    return value;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, options.delimiter);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    bool missing = is_missing(fields[x_idx]);
    for (auto c : cols) missing = missing || is_missing(fields[c]);
    if (missing) {
      ++out.dropped_rows;
      continue;
    }
    xs.push_back(parse(fields[x_idx], line_no));
    std::vector<double> row;
    row.reserve(cols.size());
    for (auto c : cols) row.push_back(parse(fields[c], line_no));
    rows.push_back(std::move(row));
  }

  const auto k = static_cast<std::size_t>(options.downsample_every);
  const std::size_t kept = (rows.size() + k - 1) / k;
  out.data.x.resize(static_cast<Eigen::Index>(kept));
  out.data.y.resize(static_cast<Eigen::Index>(kept), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < kept; ++r) {
    out.data.x[static_cast<Eigen::Index>(r)] = xs[r * k];
    for (std::size_t c = 0; c < cols.size(); ++c) {
      out.data.y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r * k][c];
    }
  }
  out.data.metadata["x_column"] = options.x_column;
  out.data.metadata["dropped_rows"] = std::to_string(out.dropped_rows);
  out.data.metadata["downsample_every"] = std::to_string(options.downsample_every);
  std::string names;
  for (auto c : cols) names += (names.empty() ? "" : ",") + header[c];
  out.data.metadata["value_columns"] = names;
  return out;
}

CsvLoad load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), options);
}

CvPlan expanding_cv(Eigen::Index n, int fold_count, Eigen::Index test_len) {
  if (fold_count < 1 || test_len < 1) throw DomainError("need fold_count >= 1 and test_len >= 1");
  const Eigen::Index step = n / fold_count;
  if (step < 1 || step * fold_count >= n) {
    throw DomainError("not enough rows for " + std::to_string(fold_count) + " expanding folds");
  }
  CvPlan plan;
  for (int f = 1; f <= fold_count; ++f) {
    Fold fold;
    fold.train_end = f * step;
    fold.test_begin = fold.train_end;
    fold.test_end = std::min(n, fold.train_end + test_len);
    plan.folds.push_back(fold);
  }
  return plan;
}

Matrix detrend_ema(const Matrix& y, int window) { return y - ema_mean(y, window); }

}  // namespace gwp
