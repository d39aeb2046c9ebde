#pragma once

#include "gwp/common.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gwp {

struct Dataset {
  Vector x;
  Matrix y;
  std::optional<CovariancePath> truth;
  /// Generator settings and provenance of the rows, e.g. "study", "n_train".
  std::map<std::string, std::string> metadata;

  [[nodiscard]] Eigen::Index n() const { return y.rows(); }
  [[nodiscard]] Eigen::Index d() const { return y.cols(); }
  /// Throws DomainError when lengths disagree or values are not finite.
  void validate() const;
  /// Rows [begin, end), truth included.
  [[nodiscard]] Dataset slice(Eigen::Index begin, Eigen::Index end) const;
};

/// Draws d*v GP(0, rbf(lengthscale)) paths on an even grid over [0, 1],
/// sets Sigma(x) = sum_l f_l f_l^T (L = I) and samples y_i ~ N(0, Sigma(x_i)).
Dataset generate_sim1(std::uint64_t seed, Eigen::Index n = 300, int d = 3, int v = 4,
                      double lengthscale = 0.35);

/// Three series with unit variances whose pairwise covariances switch between
/// 0 and `high` every `period` rows (starting at 0). Inputs are i / n_train,
/// so one full low/high cycle spans 2 * period / n_train.
Dataset generate_sim2(std::uint64_t seed, Eigen::Index n = 600, Eigen::Index period = 50,
                      double high = 0.8, Eigen::Index n_train = 300);

struct CsvOptions {
  std::string x_column;
  /// Empty selects every column except x_column.
  std::vector<std::string> value_columns;
  char delimiter = ',';
  /// Keep rows 0, k, 2k, ... of the complete rows.
  int downsample_every = 1;
};

struct CsvLoad {
  Dataset data;
  /// Rows dropped because a selected field was empty or NA.
  std::size_t dropped_rows = 0;
};

/// Header row required. Throws ParseError (with line number) on malformed
/// rows and SchemaError when a requested column is missing.
CsvLoad load_csv(const std::string& path, const CsvOptions& options);
CsvLoad parse_csv(const std::string& text, const CsvOptions& options);

struct Fold {
  /// Training rows [0, train_end).
  Eigen::Index train_end = 0;
  /// Test rows [test_begin, test_end).
  Eigen::Index test_begin = 0;
  Eigen::Index test_end = 0;
};

struct CvPlan {
  std::vector<Fold> folds;
};

/// Fold f (1-based) trains on the first f * floor(n / fold_count) rows and
/// tests on the next test_len rows, clipped at n.
CvPlan expanding_cv(Eigen::Index n, int fold_count = 10, Eigen::Index test_len = 10);

/// y minus its causal EMA (approximate detrending).
Matrix detrend_ema(const Matrix& y, int window);

}  // namespace gwp
