#include "hetlmm/proxy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hetlmm/errors.hpp"

namespace hetlmm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd drop_column(const MatrixXd& Z, Index col) {
  MatrixXd out(Z.rows(), Z.cols() - 1);
  out.leftCols(col) = Z.leftCols(col);
  out.rightCols(Z.cols() - 1 - col) = Z.rightCols(Z.cols() - 1 - col);
  return out;
}

void check_rows(const ProxyFactor& f, Index rows, const char* what) {
  if (rows != f.m())
    throw DataError(std::string(what) + ": dimension mismatch, got " + std::to_string(rows) +
                    " rows, proxy has " + std::to_string(f.m()));
}

}  // namespace

GramSpectrum gram_spectrum(const MatrixXd& Z, std::optional<Index> dropped_col) {
  if (!Z.allFinite()) throw DataError("random-effect design contains non-finite entries");
  if (dropped_col && (*dropped_col < 0 || *dropped_col >= Z.cols()))
    throw DataError("dropped column " + std::to_string(*dropped_col) + " out of range for q=" +
                    std::to_string(Z.cols()));

  const MatrixXd Zr = dropped_col ? drop_column(Z, *dropped_col) : Z;
  const Index m = Zr.rows();
  const Index q = Zr.cols();

  GramSpectrum s;
  s.m = m;
  s.dropped_col = dropped_col;
  if (m == 0 || q == 0) {
    s.eigvals.resize(0);
    s.eigvecs.resize(m, 0);
    return s;
  }

  VectorXd vals;
  MatrixXd vecs;
  if (m <= q) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Zr * Zr.transpose());
    if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of Z Zᵀ failed");
    // Ascending from Eigen; flip to descending.
    vals = eig.eigenvalues().reverse();
    vecs = eig.eigenvectors().rowwise().reverse();
  } else {
    Eigen::JacobiSVD<MatrixXd> svd(Zr, Eigen::ComputeThinU);
    vals = svd.singularValues().array().square();
    vecs = svd.matrixU();
  }

  const double cutoff = kRankTolerance * std::max(vals.size() > 0 ? vals(0) : 0.0, 1.0);
  Index r = 0;
  while (r < vals.size() && vals(r) >= cutoff) ++r;
  s.eigvals = vals.head(r);
  s.eigvecs = vecs.leftCols(r);
  return s;
}

ProxyFactor::ProxyFactor(std::shared_ptr<const GramSpectrum> spectrum, double a)
    : spectrum_(std::move(spectrum)), a_(a) {
  if (!spectrum_) throw DataError("ProxyFactor needs a spectrum");
  if (!(a >= 0.0) || !std::isfinite(a))
    throw DataError("decorrelation constant a must be finite and non-negative");
}

MatrixXd ProxyFactor::dense() const {
  const auto& U = eigvecs();
  MatrixXd out = U * (a_ * eigvals()).asDiagonal() * U.transpose();
  out.diagonal().array() += 1.0;
  return out;
}

ProxyFactor factor_proxy(const MatrixXd& Z, double a, std::optional<Index> dropped_col) {
  if (!(a > 0.0)) throw DataError("factor_proxy requires a > 0");
  return ProxyFactor(std::make_shared<const GramSpectrum>(gram_spectrum(Z, dropped_col)), a);
}

MatrixXd apply_inv(const ProxyFactor& f, const MatrixXd& M) {
  check_rows(f, M.rows(), "apply_inv");
  if (f.rank() == 0 || f.a() == 0.0) return M;
  const auto& U = f.eigvecs();
  const VectorXd shrink = (f.a() * f.eigvals()).array() / (f.a() * f.eigvals().array() + 1.0);
  return M - U * (shrink.asDiagonal() * (U.transpose() * M));
}

VectorXd apply_inv(const ProxyFactor& f, const VectorXd& v) {
  return apply_inv(f, MatrixXd(v)).col(0);
}

MatrixXd apply_inv_sqrt(const ProxyFactor& f, const MatrixXd& M) {
  check_rows(f, M.rows(), "apply_inv_sqrt");
  if (f.rank() == 0 || f.a() == 0.0) return M;
  const auto& U = f.eigvecs();
  const VectorXd shrink = 1.0 - (f.a() * f.eigvals().array() + 1.0).rsqrt();
  return M - U * (shrink.asDiagonal() * (U.transpose() * M));
}

VectorXd apply_inv_sqrt(const ProxyFactor& f, const VectorXd& v) {
  return apply_inv_sqrt(f, MatrixXd(v)).col(0);
}

double trace_inv(const ProxyFactor& f) {
  const double tail = (f.a() * f.eigvals().array() + 1.0).inverse().sum();
  return static_cast<double>(f.m() - f.rank()) + tail;
}

double quad_form_theta(const ProxyFactor& f_b, const MatrixXd& Z_full, const VectorXd& psi,
                       double sigma_e2, const VectorXd& w) {
  check_rows(f_b, w.size(), "quad_form_theta");
  check_rows(f_b, Z_full.rows(), "quad_form_theta");
  if (psi.size() != Z_full.cols())
    throw DataError("quad_form_theta: psi has " + std::to_string(psi.size()) +
                    " entries but Z has " + std::to_string(Z_full.cols()) + " columns");
  const VectorXd u = apply_inv_sqrt(f_b, w);
  const VectorXd proj = Z_full.transpose() * u;
  return (psi.array() * proj.array().square()).sum() + sigma_e2 * u.squaredNorm();
}

}  // namespace hetlmm
