#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hetlmm/dataset.hpp"
#include "hetlmm/inference.hpp"
#include "hetlmm/rng.hpp"

namespace hetlmm::sim {

enum class Model { lmm_section5, toy_table1, mevar_appendixE, custom };

/// An estimation/inference method: the a grid searched by CV and the
/// variance estimator. The default pair is the proposed method and the
/// a = 0 plain de-biased LASSO baseline.
struct MethodSpec {
  std::string name;
  std::vector<double> a_grid;
  VarianceMode variance = VarianceMode::sandwich;

  static MethodSpec proposed();
  static MethodSpec baseline();
};

struct MevarSettings {
  double scale = 0.55;          // multiplies Φ and the Γ standard deviations
  double margin = 0.05;         // required spectral-radius gap below 1
  std::size_t burn_in = 200;
  double sigma_eps2 = 0.5;
  Index row = 0;
  double offdiag_prob = 0.2;
  double offdiag_var = 0.04;
  double gamma_prob = 0.1;
  double gamma_lo = 0.05;
  double gamma_hi = 0.15;
};

struct SimConfig {
  Model model = Model::lmm_section5;
  std::size_t n = 50;
  std::size_t m = 30;
  std::size_t p = 20;
  std::size_t T = 50;
  std::size_t reps = 200;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  /// Truth; empty means the model's defaults (required for `custom`).
  VectorXd beta_star;
  VectorXd psi_star;
  std::optional<double> sigma_e2_star;
  std::vector<MethodSpec> methods{MethodSpec::proposed(), MethodSpec::baseline()};
  /// Coordinates to infer; empty means all (for MEVAR: the coverage and null targets).
  std::vector<Index> coords;
  /// Also run the variance-component pipeline (first method's CV settings).
  bool varcomp = false;
  /// Variance-component pipeline only; skips fixed-effect inference.
  bool varcomp_only = false;
  /// Record V̂ / V with V from the true variance components.
  bool oracle_variance = false;
  /// Held-out score for λ/a selection. MEVAR defaults to raw prediction error.
  CvMetric cv_metric = CvMetric::decorrelated;
  std::size_t folds = 5;
  std::size_t n_lambdas = 50;
  /// Worker threads across replicates; 0 = HETLMM_THREADS or hardware concurrency.
  std::size_t threads = 0;
  MevarSettings mevar;
};

/// Parse a JSON configuration. Errors name the offending field as a JSON pointer.
SimConfig parse_sim_config(const nlohmann::json& doc);
SimConfig load_sim_config(const std::string& path);

struct Truth {
  VectorXd beta;
  VectorXd psi;
  double sigma_e2 = 1.0;
};

struct SimData {
  LmmDataset dataset;
  Truth truth;
};

/// Default truth of the main simulation design (0-based coordinates).
Truth default_lmm_truth(Index p);

/// Random sparse correlation-like matrix: unit diagonal, each upper
/// off-diagonal entry nonzero with probability 0.2 and then Unif(-0.5, 0.5),
/// redrawn until positive definite. Throws NumericalError after 1000 draws.
MatrixXd gen_sigma_x(Index p, std::uint64_t key);

/// Subject-level perturbation: each upper off-diagonal entry is selected
/// with probability 0.2 and shifted by N(0, 0.1²); redrawn until positive definite.
MatrixXd perturb_sigma_x(const MatrixXd& sigma_x, rng::CounterRng& gen);

/// Smallest eigenvalue must exceed this for a draw to count as positive definite.
inline constexpr double kPdTolerance = 1e-8;
inline constexpr int kMaxPdAttempts = 1000;

/// Replicate `rep` of the mixed-model generator (also used for `custom`).
SimData gen_lmm_dataset(const SimConfig& config, std::size_t rep);

/// Replicate `rep` of the seven-node toy design; the dataset regresses node 0
/// on nodes 1..6.
SimData gen_toy_dataset(const SimConfig& config, std::size_t rep);
Truth toy_truth();

struct MevarStructure {
  MatrixXd phi;           // population transition matrix, already scaled
  MatrixXd gamma_var;     // entrywise random-effect variances, already scaled
  Index row = 0;
  Index coverage_coord = 0;  // fixed-effect coordinate used for coverage
  Index null_coord = -1;     // Φ = 0 with nonzero random-effect variance
  int attempts = 0;
};

MevarStructure gen_mevar_structure(const SimConfig& config);

/// Subject series of replicate `rep`: Γⁱ redrawn until the spectral radius of
/// Φ + Γⁱ is at most 1 - margin, then burn-in and T recorded steps.
std::vector<MatrixXd> gen_mevar_series(const SimConfig& config, const MevarStructure& structure,
                                       std::size_t rep);

double spectral_radius(const MatrixXd& A);

/// Matthews correlation coefficient; 0 when any marginal count is zero.
double mcc(const std::vector<bool>& selected, const std::vector<bool>& truth_nonzero);

// ---------------------------------------------------------------------------
// Monte Carlo driver
// ---------------------------------------------------------------------------

struct CoordRecord {
  std::size_t rep = 0;
  std::string method;
  Index coord = 0;
  double truth = 0.0;
  bool ok = true;
  std::string error;
  double beta_hat = 0.0;
  double beta_db = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  double a = 0.0;
  double v_ratio = std::numeric_limits<double>::quiet_NaN();  // V̂ / oracle V
};

struct VarCompRecord {
  std::size_t rep = 0;
  bool ok = true;
  std::string error;
  double psi_error = 0.0;  // ‖ψ̂ - ψ*‖₂
  double sigma_e2_hat = 0.0;
  double mcc = 0.0;
};

struct CoordSummary {
  std::string method;
  Index coord = 0;
  double truth = 0.0;
  bool null = true;
  std::size_t evaluated = 0;
  std::size_t failed = 0;
  double rejection_rate = 0.0;  // type-I error when null, power otherwise
  double coverage = 0.0;
  double rmse = 0.0;
  double median_v_ratio = std::numeric_limits<double>::quiet_NaN();
};

struct VarCompSummary {
  std::size_t evaluated = 0;
  std::size_t failed = 0;
  double psi_rmse = 0.0;           // sqrt(mean ‖ψ̂ - ψ*‖²)
  double median_psi_error = 0.0;   // median ‖ψ̂ - ψ*‖₂
  double sigma_e2_rmse = 0.0;
  double mean_mcc = 0.0;
};

struct SimReport {
  SimConfig config;
  std::vector<CoordSummary> coords;
  std::optional<VarCompSummary> varcomp;
  std::vector<CoordRecord> records;
  std::vector<VarCompRecord> varcomp_records;
  std::optional<MevarStructure> mevar;

  const CoordSummary& find(const std::string& method, Index coord) const;
};

SimReport run_monte_carlo(const SimConfig& config);

}  // namespace hetlmm::sim
