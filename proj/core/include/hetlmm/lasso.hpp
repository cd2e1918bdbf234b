#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "hetlmm/dataset.hpp"
#include "hetlmm/proxy.hpp"

namespace hetlmm {

/// Sufficient statistics of a least-squares problem: XᵀX, Xᵀy, yᵀy, the
/// objective normalizer and the row count. Additive across subjects.
struct GramSystem {
  MatrixXd gram;
  VectorXd xty;
  double yty = 0.0;
  double weight = 0.0;  // Σ tr(Σ^{-1})
  Index rows = 0;

  GramSystem() = default;
  explicit GramSystem(Index p);
  GramSystem& operator+=(const GramSystem& other);
};

/// One subject after decorrelation: ỹ = Σ^{-1/2} y, X̃ = Σ^{-1/2} X.
struct DecorrelatedBlock {
  VectorXd y_tilde;
  MatrixXd X_tilde;
  double tr_inv = 0.0;
  GramSystem stats;
};

/// Which proxy to decorrelate with. `sigma_a` uses the full Z with the
/// original response. `sigma_b` regresses fixed-effect column `coord` on the
/// remaining columns, using Z without the column mapped to `coord` (full Z
/// when `coord` has no random effect).
struct ProxySpec {
  enum class Kind { sigma_a, sigma_b } kind = Kind::sigma_a;
  Index coord = -1;

  static ProxySpec sigma_a() { return {}; }
  static ProxySpec sigma_b(Index coord) { return {Kind::sigma_b, coord}; }
};

/// a-independent per-subject spectra for one ProxySpec, reusable across an a grid.
struct SubjectSpectra {
  ProxySpec spec;
  std::vector<std::shared_ptr<const GramSpectrum>> spectra;
};

SubjectSpectra compute_spectra(const LmmDataset& dataset, ProxySpec spec);

/// Decorrelated l1 problem: per-subject blocks, their summed statistics and
/// the normalizer T = Σ tr(Σ^{-1}).
struct LassoProblem {
  std::vector<DecorrelatedBlock> blocks;
  std::vector<ProxyFactor> proxies;
  GramSystem stats;
  double T = 0.0;
  Index p = 0;
  double a = 0.0;
  ProxySpec spec;
};

LassoProblem build_problem(const LmmDataset& dataset, double a, ProxySpec spec = ProxySpec::sigma_a());
LassoProblem build_problem(const LmmDataset& dataset, double a, const SubjectSpectra& spectra);

/// Sum of the statistics of the listed subjects.
GramSystem sum_stats(const LassoProblem& problem, const std::vector<std::size_t>& subjects);

struct LassoOptions {
  double tol = 1e-7;
  int max_iters = 10000;
  double kkt_tol = 1e-5;
};

struct LassoFit {
  VectorXd beta;
  double lambda = 0.0;
  double a = 0.0;
  double objective = 0.0;
  std::vector<Index> active_set;
  int iters = 0;
  bool converged = false;
  double kkt_residual = 0.0;
};

/// ‖X̃ᵀỹ‖∞ / T. Throws DataError when every design column is zero.
double lambda_max(const GramSystem& stats);
double lambda_max(const LassoProblem& problem);

/// (1/2T)‖ỹ − X̃β‖² + λ‖β‖₁ evaluated from sufficient statistics.
double lasso_objective(const GramSystem& stats, const VectorXd& beta, double lambda);

/// Largest KKT violation of β at λ.
double kkt_violation(const GramSystem& stats, const VectorXd& beta, double lambda);

LassoFit solve_lasso(const GramSystem& stats, double lambda, const std::optional<VectorXd>& warm_start = std::nullopt,
                     const LassoOptions& options = {});
LassoFit solve_lasso(const LassoProblem& problem, double lambda,
                     const std::optional<VectorXd>& warm_start = std::nullopt,
                     const LassoOptions& options = {});

/// Warm-started path over non-increasing penalties.
std::vector<LassoFit> solve_path(const GramSystem& stats, const std::vector<double>& lambdas,
                                 const LassoOptions& options = {});
std::vector<LassoFit> solve_path(const LassoProblem& problem, const std::vector<double>& lambdas,
                                 const LassoOptions& options = {});

/// n log-spaced penalties from lmax down to lmax * ratio.
std::vector<double> lambda_grid(double lmax, std::size_t n, double ratio);

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

enum class CvMetric { decorrelated, raw };

struct CvOptions {
  std::vector<double> a_grid{0.01, 1.0, 10.0, 50.0};
  std::size_t n_lambdas = 50;
  double lambda_ratio = 1e-3;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  CvMetric metric = CvMetric::decorrelated;
  LassoOptions solver;
  std::size_t threads = 1;
};

struct CvPoint {
  double a = 0.0;
  double lambda = 0.0;
};

struct CvReport {
  std::vector<CvPoint> grid;
  std::vector<double> cv_mse;
  /// per_fold(g, k): held-out error of grid point g on fold k.
  MatrixXd per_fold;
  std::size_t chosen_index = 0;
  CvPoint chosen;
  SubjectPartition folds;
};

/// Subject-level K-fold CV over (a, λ). Each a gets its own λ grid anchored
/// at the full-data lambda_max. Ties go to the larger λ, then the smaller a.
CvReport cross_validate(const LmmDataset& dataset, const CvOptions& options,
                        ProxySpec spec = ProxySpec::sigma_a());

/// Same, reusing a fold assignment and precomputed spectra.
CvReport cross_validate(const LmmDataset& dataset, const CvOptions& options,
                        const SubjectSpectra& spectra, const SubjectPartition& folds);

struct TunedFit {
  CvReport report;
  LassoProblem problem;  // at the chosen a, all subjects
  LassoFit fit;          // at the chosen λ
};

/// CV then refit on every subject at the chosen (a, λ).
TunedFit tune_and_fit(const LmmDataset& dataset, const CvOptions& options,
                      ProxySpec spec = ProxySpec::sigma_a());
TunedFit tune_and_fit(const LmmDataset& dataset, const CvOptions& options,
                      const SubjectSpectra& spectra, const SubjectPartition& folds);

}  // namespace hetlmm
