#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hetlmm/dataset.hpp"
#include "hetlmm/lasso.hpp"
#include "hetlmm/proxy.hpp"

namespace hetlmm {

/// How the de-biased estimator's variance is estimated.
///  sandwich:  Σ sᵢ² / (Σ dᵢ)², robust to within-subject correlation.
///  naive_iid: σ̂² Σ ‖ŵᵢ‖² / (Σ dᵢ)² with σ̂² from the pooled residuals, the
///             classical de-biased LASSO variance that assumes iid noise.
enum class VarianceMode { sandwich, naive_iid };

/// Vector multiplying ŵᵢᵀ Σ_b^{-1/2} in the correction's denominator: the target
/// covariate Xⱼ (default) or the response y.
enum class DenominatorForm { covariate, response };

struct InferenceOptions {
  double alpha = 0.05;
  VarianceMode variance = VarianceMode::sandwich;
  DenominatorForm denominator = DenominatorForm::covariate;
  double denom_floor = 1e-10;
};

/// Projection of covariate `coord` on the remaining covariates under Σ_b.
struct ProjectionFit {
  Index coord = -1;
  double a = 0.0;
  double lambda_kappa = 0.0;
  VectorXd kappa;                   // length p - 1
  std::vector<VectorXd> w_blocks;   // ŵᵢ = Σ_b^{-1/2}(Xⱼ - X₋ⱼ κ̂)
  std::vector<ProxyFactor> proxies; // Σ_b per subject
  bool converged = true;
};

/// ŵᵢ recomputed from κ̂ and the stored proxies.
std::vector<VectorXd> projection_residuals(const LmmDataset& dataset, const ProjectionFit& proj);

/// κ̂ at a fixed penalty, or chosen by CV at the same a when `lambda_kappa`
/// is empty (folds from `cv.folds` and `cv.seed`).
ProjectionFit fit_projection(const LmmDataset& dataset, Index coord, double a,
                             std::optional<double> lambda_kappa, const CvOptions& cv = {});

/// As above with precomputed Σ_b spectra and a fixed fold assignment.
ProjectionFit fit_projection(const LmmDataset& dataset, const SubjectSpectra& spectra, double a,
                             std::optional<double> lambda_kappa, const CvOptions& cv,
                             const SubjectPartition& folds);

struct InferenceRecord {
  Index coord = -1;
  double beta_hat = 0.0;
  double beta_db = 0.0;
  double v_hat = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  double p_holm = std::numeric_limits<double>::quiet_NaN();
  double denom = 0.0;
  double a = 0.0;
  double lambda = 0.0;
  double lambda_kappa = 0.0;
  bool ok = true;
  std::string error;
};

/// De-biased estimate, variance, interval and two-sided normal p-value for
/// one coordinate. Throws UnidentifiedDirection when the correction's
/// denominator is below denom_floor times its natural scale.
InferenceRecord debias(const LmmDataset& dataset, Index coord, const LassoFit& lasso_fit,
                       const ProjectionFit& proj, const InferenceOptions& options = {});

/// Variance of the de-biased estimator under known ψ and σ²ₑ.
double oracle_variance(const LmmDataset& dataset, const ProjectionFit& proj,
                       const VectorXd& psi_true, double sigma_e2_true,
                       DenominatorForm denominator = DenominatorForm::covariate);

/// Holm step-down adjusted p-values, in input order.
std::vector<double> holm_adjust(const std::vector<double>& p_values);

/// Two-sided normal p-value and the (1 - alpha) interval half-width multiplier.
double normal_two_sided_p(double z);
double normal_critical_value(double alpha);

struct InferenceConfig {
  CvOptions cv;
  InferenceOptions inference;
  /// Fixed κ penalty; CV at the chosen a when empty.
  std::optional<double> lambda_kappa;
};

struct InferenceResult {
  TunedFit beta;
  std::vector<InferenceRecord> records;
};

/// Tune β̂ by CV over (a, λ), then de-bias each requested coordinate (all
/// coordinates when `coords` is empty) and Holm-adjust across them. A
/// coordinate whose inference fails is kept with ok = false and NaN fields.
InferenceResult infer_coordinates(const LmmDataset& dataset, const InferenceConfig& config,
                                  std::vector<Index> coords = {});

/// Inference for one coordinate given an already tuned β̂ fit.
InferenceRecord infer_one(const LmmDataset& dataset, const TunedFit& beta, Index coord,
                          const InferenceConfig& config);

}  // namespace hetlmm
