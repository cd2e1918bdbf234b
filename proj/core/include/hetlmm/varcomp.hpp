#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hetlmm/dataset.hpp"
#include "hetlmm/lasso.hpp"

namespace hetlmm {

/// Quadratic form of the penalized moment criterion for diagonal Ψ:
///   F(ψ) = ψᵀBψ - 2δᵀψ + c0.
/// With Aₗ = ZₗZₗᵀ - diag(Zₗ)² and M = r rᵀ - diag(r)², summed over subjects:
///   B_jk = tr(AⱼAₖ), δₖ = tr(AₖM), c0 = ‖M‖²_F.
struct MomentSystem {
  MatrixXd B;
  VectorXd delta;
  double c0 = 0.0;

  MomentSystem() = default;
  explicit MomentSystem(Index q);
  Index q() const { return delta.size(); }
  MomentSystem& operator+=(const MomentSystem& other);
};

MomentSystem subject_moments(const MatrixXd& Z, const VectorXd& residual);

/// Sum of subject_moments over all subjects of `dataset`; residuals[i]
/// belongs to dataset.block(i).
MomentSystem build_moment_system(const LmmDataset& dataset, const std::vector<VectorXd>& residuals);

/// F(ψ) + λ‖ψ‖₁.
double moment_objective(const MomentSystem& system, const VectorXd& psi, double lambda_theta = 0.0);

struct PsiOptions {
  double tol = 1e-10;
  int max_iters = 10000;
  bool nonnegative = false;
};

struct PsiFit {
  VectorXd psi;
  double lambda_theta = 0.0;
  double objective = 0.0;
  int iters = 0;
  bool converged = false;
  std::vector<Index> frozen;  // coordinates with B_kk = 0
};

/// Coordinate descent on F(ψ) + λ‖ψ‖₁ starting from `warm` (zero by default).
PsiFit solve_psi(const MomentSystem& system, double lambda_theta, const PsiOptions& options = {},
                 const std::optional<VectorXd>& warm = std::nullopt);

/// Largest subgradient violation of ψ, relative to max(1, max|B|, max|δ|).
double psi_kkt_violation(const MomentSystem& system, const VectorXd& psi, double lambda_theta,
                         bool nonnegative = false);

struct PsiCvOptions {
  std::size_t n_lambdas = 30;
  double lambda_ratio = 1e-3;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  /// Take the largest λ whose CV error is within one standard error of the minimum.
  bool one_se = true;
  PsiOptions solver;
};

struct PsiCvReport {
  std::vector<double> lambdas;
  std::vector<double> cv_error;
  std::vector<double> cv_se;  // paired standard error of cv_error[l] - cv_error[best]
  std::size_t best = 0;       // index of the minimum
  double chosen = 0.0;
};

/// Subject-level K-fold CV of λ_θ over per-subject systems, scoring the
/// held-out moment criterion F.
PsiCvReport cross_validate_psi(const std::vector<MomentSystem>& subjects, const PsiCvOptions& options);

struct SigmaE2Estimate {
  double raw = 0.0;
  double floored = 0.0;
};

/// (1/Σmᵢ) Σᵢ (‖rᵢ‖² - Σₗ ψₗ ‖Zₗⁱ‖²).
SigmaE2Estimate estimate_sigma_e2(const LmmDataset& dataset, const std::vector<VectorXd>& residuals,
                                  const VectorXd& psi_hat);

/// Raw residuals y - Xβ for every subject.
std::vector<VectorXd> residuals_of(const LmmDataset& dataset, const VectorXd& beta);

struct VarCompConfig {
  CvOptions beta_cv;
  PsiCvOptions psi_cv;
  std::optional<double> lambda_theta;  // CV when empty
  std::uint64_t seed = 0;
};

struct VarCompEstimate {
  VectorXd psi_hat;
  double sigma_e2_hat = 0.0;
  double sigma_e2_floored = 0.0;
  double lambda_theta = 0.0;
  SubjectPartition split;
  std::vector<Index> selected;
  VectorXd beta_hat;
  double beta_a = 0.0;
  double beta_lambda = 0.0;
};

/// Three-way subject split: β̂ by CV on S₁, ψ̂ on S₂, σ̂²ₑ on S₃.
VarCompEstimate run_varcomp_pipeline(const LmmDataset& dataset, const VarCompConfig& config);

}  // namespace hetlmm
