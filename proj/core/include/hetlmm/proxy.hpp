#pragma once

#include <memory>
#include <optional>

#include <Eigen/Dense>

namespace hetlmm {

/// Nonzero spectrum of Z Zᵀ for one subject's random-effect design, with an
/// optional column removed first. Independent of the decorrelation constant,
/// so one spectrum serves every `a` on a grid.
struct GramSpectrum {
  Eigen::VectorXd eigvals;  // descending, strictly positive after truncation
  Eigen::MatrixXd eigvecs;  // m x r, orthonormal columns
  Eigen::Index m = 0;
  std::optional<Eigen::Index> dropped_col;

  Eigen::Index rank() const { return eigvals.size(); }
};

/// Eigenvalues below this fraction of max(largest eigenvalue, 1) are dropped.
inline constexpr double kRankTolerance = 1e-12;

/// Spectrum of Z Zᵀ (Z without `dropped_col` if given). Uses the m x m Gram
/// when m <= q and a thin SVD of Z otherwise. Throws DataError on non-finite Z.
GramSpectrum gram_spectrum(const Eigen::MatrixXd& Z,
                           std::optional<Eigen::Index> dropped_col = std::nullopt);

/// a Z Zᵀ + I in factored form. a = 0 is allowed here (identity proxy);
/// factor_proxy enforces a > 0.
class ProxyFactor {
 public:
  ProxyFactor(std::shared_ptr<const GramSpectrum> spectrum, double a);

  double a() const { return a_; }
  Eigen::Index m() const { return spectrum_->m; }
  Eigen::Index rank() const { return spectrum_->rank(); }
  const Eigen::VectorXd& eigvals() const { return spectrum_->eigvals; }
  const Eigen::MatrixXd& eigvecs() const { return spectrum_->eigvecs; }
  std::optional<Eigen::Index> dropped_col() const { return spectrum_->dropped_col; }
  const std::shared_ptr<const GramSpectrum>& spectrum() const { return spectrum_; }

  /// Dense a Z Zᵀ + I rebuilt from the factors (tests and diagnostics).
  Eigen::MatrixXd dense() const;

 private:
  std::shared_ptr<const GramSpectrum> spectrum_;
  double a_;
};

/// Factor a Z Zᵀ + I. Requires a > 0 and dropped_col < q when given.
ProxyFactor factor_proxy(const Eigen::MatrixXd& Z, double a,
                         std::optional<Eigen::Index> dropped_col = std::nullopt);

/// (a Z Zᵀ + I)^{-1} v, column by column for matrices.
Eigen::VectorXd apply_inv(const ProxyFactor& f, const Eigen::VectorXd& v);
Eigen::MatrixXd apply_inv(const ProxyFactor& f, const Eigen::MatrixXd& M);

/// (a Z Zᵀ + I)^{-1/2} M.
Eigen::MatrixXd apply_inv_sqrt(const ProxyFactor& f, const Eigen::MatrixXd& M);
Eigen::VectorXd apply_inv_sqrt(const ProxyFactor& f, const Eigen::VectorXd& v);

/// tr((a Z Zᵀ + I)^{-1}) = (m - r) + Σ 1/(a λ + 1).
double trace_inv(const ProxyFactor& f);

/// wᵀ Σ_b^{-1/2} (Z diag(psi) Zᵀ + sigma_e2 I) Σ_b^{-1/2} w.
double quad_form_theta(const ProxyFactor& f_b, const Eigen::MatrixXd& Z_full,
                       const Eigen::VectorXd& psi, double sigma_e2, const Eigen::VectorXd& w);

}  // namespace hetlmm
