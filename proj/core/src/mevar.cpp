#include "hetlmm/mevar.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "hetlmm/errors.hpp"
#include "hetlmm/log.hpp"
#include "hetlmm/parallel.hpp"

namespace hetlmm {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

LmmDataset build_row_problem(const std::vector<MatrixXd>& series, Index row, bool demean) {
  if (series.empty()) throw DataError("no series");
  const Index p = series.front().cols();
  if (row < 0 || row >= p)
    throw DataError("row " + std::to_string(row) + " out of range [0," + std::to_string(p) + ")");
  std::vector<VectorXd> ys;
  std::vector<MatrixXd> Xs;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const MatrixXd& s = series[i];
    if (s.cols() != p) throw DataError("series differ in node count");
    if (s.rows() < 3)
      throw DataError("series " + std::to_string(i) + " has T=" + std::to_string(s.rows()) +
                      "; at least 3 time points are required");
    const MatrixXd src = demean ? center_columns(s) : s;
    const Index T = src.rows();
    ys.push_back(src.col(row).tail(T - 1));
    Xs.push_back(src.topRows(T - 1));
  }
  ColumnMap identity(static_cast<std::size_t>(p));
  std::iota(identity.begin(), identity.end(), Index{0});
  return LmmDataset::from_arrays(ys, Xs, std::move(identity));
}

std::vector<Index> constant_columns(const std::vector<MatrixXd>& series) {
  if (series.empty()) return {};
  std::vector<Index> out;
  for (Index c = 0; c < series.front().cols(); ++c) {
    bool constant = true;
    for (const auto& s : series) {
      const auto col = s.col(c);
      if ((col.array() != col(0)).any()) {
        constant = false;
        break;
      }
    }
    if (constant) out.push_back(c);
  }
  return out;
}

MevarFit fit_mevar(const std::vector<MatrixXd>& series, const MevarConfig& config) {
  if (series.empty()) throw DataError("no series");
  const Index p = series.front().cols();
  std::vector<Index> rows = config.rows;
  if (rows.empty()) {
    rows.resize(static_cast<std::size_t>(p));
    std::iota(rows.begin(), rows.end(), Index{0});
  }
  std::vector<Index> coords = config.coords;
  if (coords.empty()) {
    coords.resize(static_cast<std::size_t>(p));
    std::iota(coords.begin(), coords.end(), Index{0});
  }
  for (Index r : rows)
    if (r < 0 || r >= p) throw DataError("row index out of range");
  for (Index c : coords)
    if (c < 0 || c >= p) throw DataError("coordinate index out of range");
  // Validate shapes up front so malformed input is a data error, not a row failure.
  build_row_problem(series, rows.front(), config.demean);

  const auto degenerate = constant_columns(series);
  if (!degenerate.empty())
    log::warn(std::to_string(degenerate.size()) + " lagged column(s) are constant over time");

  MevarFit fit;
  fit.phi_lasso = MatrixXd::Constant(p, p, kNaN);
  fit.phi = MatrixXd::Constant(p, p, kNaN);
  fit.records.resize(static_cast<std::size_t>(p));
  std::vector<std::string> row_error(rows.size());

  parallel_for(rows.size(), config.threads, [&](std::size_t k) {
    const Index r = rows[k];
    try {
      const LmmDataset data = build_row_problem(series, r, config.demean);
      const TunedFit beta = tune_and_fit(data, config.inference.cv);
      fit.phi_lasso.row(r) = beta.fit.beta.transpose();
      auto& recs = fit.records[static_cast<std::size_t>(r)];
      for (Index c : coords) {
        recs.push_back(infer_one(data, beta, c, config.inference));
        if (recs.back().ok) fit.phi(r, c) = recs.back().beta_db;
      }
      std::vector<double> ps;
      std::vector<std::size_t> idx;
      for (std::size_t e = 0; e < recs.size(); ++e)
        if (recs[e].ok) {
          ps.push_back(recs[e].p_value);
          idx.push_back(e);
        }
      const auto adj = holm_adjust(ps);
      for (std::size_t e = 0; e < idx.size(); ++e) recs[idx[e]].p_holm = adj[e];
    } catch (const NumericalError& e) {
      row_error[k] = "row " + std::to_string(r) + ": " + e.what();
    } catch (const DataError& e) {
      row_error[k] = "row " + std::to_string(r) + ": " + e.what();
    }
  });
  for (auto& e : row_error)
    if (!e.empty()) {
      log::warn(e);
      fit.failures.push_back(std::move(e));
    }

  fit.spectral_norm = kNaN;
  if (fit.phi_lasso.allFinite()) {
    Eigen::JacobiSVD<MatrixXd> svd(fit.phi_lasso);
    fit.spectral_norm = svd.singularValues()(0);
  }
  return fit;
}

}  // namespace hetlmm
