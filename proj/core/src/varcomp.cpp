#include "hetlmm/varcomp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hetlmm/errors.hpp"
#include "hetlmm/log.hpp"

namespace hetlmm {

MomentSystem::MomentSystem(Index q) : B(MatrixXd::Zero(q, q)), delta(VectorXd::Zero(q)) {}

MomentSystem& MomentSystem::operator+=(const MomentSystem& other) {
  if (B.size() == 0) *this = MomentSystem(other.q());
  if (other.q() != q()) throw DataError("moment systems differ in dimension");
  B += other.B;
  delta += other.delta;
  c0 += other.c0;
  return *this;
}

MomentSystem subject_moments(const MatrixXd& Z, const VectorXd& residual) {
  if (residual.size() != Z.rows())
    throw DataError("residual length " + std::to_string(residual.size()) + " does not match " +
                    std::to_string(Z.rows()) + " rows");
  const MatrixXd ZtZ = Z.transpose() * Z;
  const MatrixXd Z2 = Z.array().square().matrix();
  const VectorXd r2 = residual.array().square().matrix();

  MomentSystem s;
  s.B = ZtZ.array().square().matrix() - Z2.transpose() * Z2;
  const VectorXd Ztr = Z.transpose() * residual;
  s.delta = Ztr.array().square().matrix() - Z2.transpose() * r2;
  const double rr = residual.squaredNorm();
  s.c0 = rr * rr - r2.squaredNorm();
  return s;
}

MomentSystem build_moment_system(const LmmDataset& dataset, const std::vector<VectorXd>& residuals) {
  if (dataset.n() == 0) throw DataError("moment system needs at least one subject");
  if (residuals.size() != dataset.n()) throw DataError("one residual vector per subject required");
  MomentSystem total(dataset.q());
  for (std::size_t i = 0; i < dataset.n(); ++i)
    total += subject_moments(dataset.block(i).Z, residuals[i]);
  return total;
}

double moment_objective(const MomentSystem& system, const VectorXd& psi, double lambda_theta) {
  return psi.dot(system.B * psi) - 2.0 * system.delta.dot(psi) + system.c0 +
         lambda_theta * psi.lpNorm<1>();
}

namespace {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

double kkt_scale(const MomentSystem& s) {
  return std::max({1.0, s.B.cwiseAbs().maxCoeff(), s.delta.cwiseAbs().maxCoeff()});
}

}  // namespace

double psi_kkt_violation(const MomentSystem& system, const VectorXd& psi, double lambda_theta,
                         bool nonnegative) {
  const VectorXd g = 2.0 * (system.B * psi - system.delta);
  double worst = 0.0;
  for (Index k = 0; k < psi.size(); ++k) {
    if (system.B(k, k) <= 0.0) continue;
    double v;
    if (psi(k) != 0.0)
      v = std::abs(g(k) + lambda_theta * (psi(k) > 0 ? 1.0 : -1.0));
    else if (nonnegative)
      v = std::max(0.0, -g(k) - lambda_theta);
    else
      v = std::max(0.0, std::abs(g(k)) - lambda_theta);
    worst = std::max(worst, v);
  }
  return worst / kkt_scale(system);
}

PsiFit solve_psi(const MomentSystem& system, double lambda_theta, const PsiOptions& options,
                 const std::optional<VectorXd>& warm) {
  if (!(lambda_theta >= 0.0) || !std::isfinite(lambda_theta))
    throw DataError("lambda_theta must be finite and >= 0");
  const Index q = system.q();
  const MatrixXd& B = system.B;

  PsiFit fit;
  fit.lambda_theta = lambda_theta;
  fit.psi = warm ? *warm : VectorXd::Zero(q);
  if (fit.psi.size() != q) throw DataError("warm start has the wrong length");
  for (Index k = 0; k < q; ++k)
    if (B(k, k) <= 0.0) {
      fit.frozen.push_back(k);
      fit.psi(k) = 0.0;
    }
  if (!fit.frozen.empty())
    log::warn(std::to_string(fit.frozen.size()) +
              " variance component(s) have no identifying information and are fixed at 0");

  // h = δ - Bψ, kept in sync with ψ.
  VectorXd h = system.delta - B * fit.psi;
  const double half = lambda_theta / 2.0;
  while (fit.iters < options.max_iters) {
    double change = 0.0;
    for (Index k = 0; k < q; ++k) {
      if (B(k, k) <= 0.0) continue;
      const double old = fit.psi(k);
      const double z = h(k) + B(k, k) * old;
      double fresh = options.nonnegative ? std::max(0.0, z - half) : soft_threshold(z, half);
      fresh /= B(k, k);
      const double d = fresh - old;
      if (d != 0.0) {
        h.noalias() -= B.col(k) * d;
        fit.psi(k) = fresh;
        change = std::max(change, std::abs(d));
      }
    }
    ++fit.iters;
    if (change < options.tol * std::max(1.0, fit.psi.lpNorm<Eigen::Infinity>())) {
      fit.converged = true;
      break;
    }
    if (fit.iters % 50 == 0) h = system.delta - B * fit.psi;
  }
  if (!fit.converged) log::warn("variance-component solver reached the iteration limit");
  fit.objective = moment_objective(system, fit.psi, lambda_theta);
  return fit;
}

PsiCvReport cross_validate_psi(const std::vector<MomentSystem>& subjects, const PsiCvOptions& options) {
  const std::size_t n = subjects.size();
  if (n < 2) throw DataError("too few subjects to cross-validate lambda_theta");
  const std::size_t K = std::min(options.folds, n);
  const auto folds = partition_subjects(n, PartitionKind::cv_folds, K, options.seed);

  MomentSystem full;
  for (const auto& s : subjects) full += s;

  PsiCvReport report;
  const double top = 2.0 * full.delta.lpNorm<Eigen::Infinity>();
  if (!(top > 0.0)) {
    report.lambdas = {0.0};
    report.cv_error = {full.c0};
    report.cv_se = {0.0};
    report.chosen = 0.0;
    return report;
  }
  report.lambdas = lambda_grid(top, options.n_lambdas, options.lambda_ratio);
  const std::size_t L = report.lambdas.size();
  report.cv_error.assign(L, 0.0);
  MatrixXd per_fold(L, K);

  for (std::size_t k = 0; k < K; ++k) {
    MomentSystem train, test;
    for (std::size_t i = 0; i < n; ++i) (folds.assignment[i] == k ? test : train) += subjects[i];
    std::optional<VectorXd> warm;
    for (std::size_t l = 0; l < report.lambdas.size(); ++l) {
      const auto fit = solve_psi(train, report.lambdas[l], options.solver, warm);
      warm = fit.psi;
      const double f = moment_objective(test, fit.psi);
      per_fold(static_cast<Index>(l), static_cast<Index>(k)) = f;
      report.cv_error[l] += f;
    }
  }

  std::size_t best = 0;
  for (std::size_t l = 1; l < L; ++l)
    if (report.cv_error[l] < report.cv_error[best] - 1e-12 * std::abs(report.cv_error[best])) best = l;
  report.best = best;

  // Paired SE of the summed difference to the minimum; the ψ-free constant in
  // each fold's criterion cancels in the difference.
  report.cv_se.assign(L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    const VectorXd diff = (per_fold.row(static_cast<Index>(l)) - per_fold.row(static_cast<Index>(best))).transpose();
    const double mean = diff.mean();
    const double var = K > 1 ? (diff.array() - mean).square().sum() / static_cast<double>(K - 1) : 0.0;
    report.cv_se[l] = std::sqrt(static_cast<double>(K) * var);
  }

  std::size_t pick = best;
  if (options.one_se) {
    for (std::size_t l = 0; l < best; ++l)
      if (report.cv_error[l] - report.cv_error[best] <= report.cv_se[l]) {
        pick = l;
        break;
      }
  }
  report.chosen = report.lambdas[pick];
  return report;
}

SigmaE2Estimate estimate_sigma_e2(const LmmDataset& dataset, const std::vector<VectorXd>& residuals,
                                  const VectorXd& psi_hat) {
  if (dataset.n() == 0) throw DataError("sigma_e2 needs at least one subject");
  if (residuals.size() != dataset.n()) throw DataError("one residual vector per subject required");
  if (psi_hat.size() != dataset.q()) throw DataError("psi_hat length must equal q");
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    const auto& Z = dataset.block(i).Z;
    if (residuals[i].size() != Z.rows()) throw DataError("residual length mismatch");
    const VectorXd col_norms = Z.colwise().squaredNorm().transpose();
    total += residuals[i].squaredNorm() - psi_hat.dot(col_norms);
  }
  SigmaE2Estimate est;
  est.raw = total / static_cast<double>(dataset.total_rows());
  est.floored = std::max(0.0, est.raw);
  return est;
}

std::vector<VectorXd> residuals_of(const LmmDataset& dataset, const VectorXd& beta) {
  if (beta.size() != dataset.p()) throw DataError("beta length must equal p");
  std::vector<VectorXd> out;
  out.reserve(dataset.n());
  for (const auto& b : dataset.blocks()) out.push_back(b.y - b.X * beta);
  return out;
}

VarCompEstimate run_varcomp_pipeline(const LmmDataset& dataset, const VarCompConfig& config) {
  if (dataset.n() < 3) throw DataError("variance components need at least 3 subjects");
  VarCompEstimate est;
  est.split = partition_subjects(dataset, PartitionKind::three_way_split, 3, config.seed);
  const LmmDataset s1 = dataset.subset(est.split.members(0));
  const LmmDataset s2 = dataset.subset(est.split.members(1));
  const LmmDataset s3 = dataset.subset(est.split.members(2));

  CvOptions beta_cv = config.beta_cv;
  beta_cv.folds = std::min(beta_cv.folds, s1.n());
  if (beta_cv.folds < 2) throw DataError("too few subjects in the first split for cross-validation");
  const auto tuned = tune_and_fit(s1, beta_cv);
  est.beta_hat = tuned.fit.beta;
  est.beta_a = tuned.fit.a;
  est.beta_lambda = tuned.fit.lambda;

  const auto r2 = residuals_of(s2, est.beta_hat);
  std::vector<MomentSystem> per_subject;
  per_subject.reserve(s2.n());
  for (std::size_t i = 0; i < s2.n(); ++i) per_subject.push_back(subject_moments(s2.block(i).Z, r2[i]));
  MomentSystem system(s2.q());
  for (const auto& s : per_subject) system += s;

  if (config.lambda_theta) {
    est.lambda_theta = *config.lambda_theta;
  } else {
    est.lambda_theta = cross_validate_psi(per_subject, config.psi_cv).chosen;
  }
  est.psi_hat = solve_psi(system, est.lambda_theta, config.psi_cv.solver).psi;
  for (Index k = 0; k < est.psi_hat.size(); ++k)
    if (est.psi_hat(k) != 0.0) est.selected.push_back(k);

  const auto sig = estimate_sigma_e2(s3, residuals_of(s3, est.beta_hat), est.psi_hat);
  est.sigma_e2_hat = sig.raw;
  est.sigma_e2_floored = sig.floored;
  return est;
}

}  // namespace hetlmm
