#pragma once

#include <string>
#include <vector>

#include "hetlmm/dataset.hpp"
#include "hetlmm/inference.hpp"

namespace hetlmm {

/// Row `row` of a mixed-effect VAR(1) as a mixed model: for each subject,
/// y = series(1..T-1, row) and X = Z = series(0..T-2, :).
LmmDataset build_row_problem(const std::vector<MatrixXd>& series, Index row, bool demean = false);

/// Columns that are constant over time in every subject (degenerate lags).
std::vector<Index> constant_columns(const std::vector<MatrixXd>& series);

struct MevarConfig {
  InferenceConfig inference;
  std::vector<Index> rows;    // empty = all rows
  std::vector<Index> coords;  // empty = all columns
  bool demean = false;
  std::size_t threads = 1;
};

struct MevarFit {
  MatrixXd phi_lasso;  // decorrelated LASSO estimate; NaN rows were not fitted
  MatrixXd phi;        // de-biased estimate; NaN where not inferred
  /// records[row] holds one record per requested coordinate.
  std::vector<std::vector<InferenceRecord>> records;
  /// ‖Φ̂‖₂ of the LASSO estimate, NaN unless every row was fitted.
  double spectral_norm = 0.0;
  std::vector<std::string> failures;
};

MevarFit fit_mevar(const std::vector<MatrixXd>& series, const MevarConfig& config);

}  // namespace hetlmm
