#include "hetlmm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "hetlmm/errors.hpp"
#include "hetlmm/log.hpp"

namespace hetlmm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_coord(const LmmDataset& dataset, Index coord) {
  if (coord < 0 || coord >= dataset.p())
    throw DataError("coordinate " + std::to_string(coord) + " out of range [0," +
                    std::to_string(dataset.p()) + ")");
}

ProjectionFit projection_from(const LassoProblem& problem, const LassoFit& fit, Index coord) {
  ProjectionFit proj;
  proj.coord = coord;
  proj.a = problem.a;
  proj.lambda_kappa = fit.lambda;
  proj.kappa = fit.beta;
  proj.converged = fit.converged;
  proj.proxies = problem.proxies;
  proj.w_blocks.reserve(problem.blocks.size());
  for (const auto& b : problem.blocks) proj.w_blocks.push_back(b.y_tilde - b.X_tilde * fit.beta);
  if (!fit.converged)
    log::warn("projection fit for coordinate " + std::to_string(coord) + " did not converge");
  return proj;
}

}  // namespace

std::vector<VectorXd> projection_residuals(const LmmDataset& dataset, const ProjectionFit& proj) {
  check_coord(dataset, proj.coord);
  if (proj.proxies.size() != dataset.n()) throw DataError("projection fit does not match dataset");
  const Index j = proj.coord;
  const Index p = dataset.p();
  std::vector<VectorXd> out;
  out.reserve(dataset.n());
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    const auto& X = dataset.block(i).X;
    VectorXd direction = X.col(j);
    for (Index k = 0, c = 0; k < p; ++k) {
      if (k == j) continue;
      direction -= X.col(k) * proj.kappa(c++);
    }
    out.push_back(apply_inv_sqrt(proj.proxies[i], direction));
  }
  return out;
}

ProjectionFit fit_projection(const LmmDataset& dataset, Index coord, double a,
                             std::optional<double> lambda_kappa, const CvOptions& cv) {
  check_coord(dataset, coord);
  const auto spectra = compute_spectra(dataset, ProxySpec::sigma_b(coord));
  if (lambda_kappa) {
    const auto problem = build_problem(dataset, a, spectra);
    return projection_from(problem, solve_lasso(problem, *lambda_kappa, std::nullopt, cv.solver),
                           coord);
  }
  const auto folds = partition_subjects(dataset, PartitionKind::cv_folds, cv.folds, cv.seed);
  return fit_projection(dataset, spectra, a, std::nullopt, cv, folds);
}

ProjectionFit fit_projection(const LmmDataset& dataset, const SubjectSpectra& spectra, double a,
                             std::optional<double> lambda_kappa, const CvOptions& cv,
                             const SubjectPartition& folds) {
  if (spectra.spec.kind != ProxySpec::Kind::sigma_b)
    throw DataError("projection needs Σ_b spectra");
  const Index coord = spectra.spec.coord;
  check_coord(dataset, coord);
  if (lambda_kappa) {
    const auto problem = build_problem(dataset, a, spectra);
    return projection_from(problem, solve_lasso(problem, *lambda_kappa, std::nullopt, cv.solver),
                           coord);
  }
  CvOptions at_a = cv;
  at_a.a_grid = {a};
  const auto tuned = tune_and_fit(dataset, at_a, spectra, folds);
  return projection_from(tuned.problem, tuned.fit, coord);
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

double normal_critical_value(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("alpha must be in (0, 1)");
  return boost::math::quantile(boost::math::complement(boost::math::normal(), alpha / 2.0));
}

InferenceRecord debias(const LmmDataset& dataset, Index coord, const LassoFit& lasso_fit,
                       const ProjectionFit& proj, const InferenceOptions& options) {
  check_coord(dataset, coord);
  if (proj.coord != coord) throw DataError("projection fit was computed for another coordinate");
  if (proj.a != lasso_fit.a) throw DataError("LASSO and projection fits use different a");
  if (lasso_fit.beta.size() != dataset.p()) throw DataError("LASSO fit has the wrong length");
  if (proj.w_blocks.size() != dataset.n() || proj.proxies.size() != dataset.n())
    throw DataError("projection fit does not match dataset");

  double num = 0.0, den = 0.0, num_sq = 0.0;
  double w_norm2 = 0.0, t_norm2 = 0.0, resid2 = 0.0;
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    const auto& b = dataset.block(i);
    const auto& w = proj.w_blocks[i];
    const VectorXd r = apply_inv_sqrt(proj.proxies[i], VectorXd(b.y - b.X * lasso_fit.beta));
    const VectorXd t = apply_inv_sqrt(
        proj.proxies[i],
        VectorXd(options.denominator == DenominatorForm::covariate ? VectorXd(b.X.col(coord)) : b.y));
    const double s = w.dot(r);
    num += s;
    num_sq += s * s;
    den += w.dot(t);
    w_norm2 += w.squaredNorm();
    t_norm2 += t.squaredNorm();
    resid2 += r.squaredNorm();
  }

  const double scale = std::sqrt(w_norm2 * t_norm2);
  if (!(std::abs(den) >= options.denom_floor * scale) || scale == 0.0)
    throw UnidentifiedDirection("coordinate " + std::to_string(coord) +
                                ": projection direction is unidentified (denominator " +
                                std::to_string(den) + ")");

  InferenceRecord rec;
  rec.coord = coord;
  rec.a = lasso_fit.a;
  rec.lambda = lasso_fit.lambda;
  rec.lambda_kappa = proj.lambda_kappa;
  rec.denom = std::abs(den);
  rec.beta_hat = lasso_fit.beta(coord);
  rec.beta_db = rec.beta_hat + num / den;
  if (options.variance == VarianceMode::sandwich) {
    rec.v_hat = num_sq / (den * den);
  } else {
    const double dof =
        std::max(1.0, static_cast<double>(dataset.total_rows()) - static_cast<double>(lasso_fit.active_set.size()));
    rec.v_hat = (resid2 / dof) * w_norm2 / (den * den);
  }
  rec.se = std::sqrt(rec.v_hat);
  const double zc = normal_critical_value(options.alpha);
  rec.ci_low = rec.beta_db - zc * rec.se;
  rec.ci_high = rec.beta_db + zc * rec.se;
  if (rec.se > 0.0)
    rec.p_value = normal_two_sided_p(rec.beta_db / rec.se);
  else
    rec.p_value = rec.beta_db == 0.0 ? 1.0 : 0.0;
  return rec;
}

double oracle_variance(const LmmDataset& dataset, const ProjectionFit& proj, const VectorXd& psi_true,
                       double sigma_e2_true, DenominatorForm denominator) {
  check_coord(dataset, proj.coord);
  if (proj.w_blocks.size() != dataset.n()) throw DataError("projection fit does not match dataset");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    const auto& b = dataset.block(i);
    const auto& w = proj.w_blocks[i];
    num += quad_form_theta(proj.proxies[i], b.Z, psi_true, sigma_e2_true, w);
    const VectorXd t = denominator == DenominatorForm::covariate ? VectorXd(b.X.col(proj.coord)) : b.y;
    den += w.dot(apply_inv_sqrt(proj.proxies[i], t));
  }
  return num / (den * den);
}

std::vector<double> holm_adjust(const std::vector<double>& p_values) {
  for (double p : p_values)
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("p-values must lie in [0, 1]");
  const std::size_t K = p_values.size();
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return p_values[x] < p_values[y]; });
  std::vector<double> adjusted(K);
  double running = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double v = std::min(1.0, static_cast<double>(K - k) * p_values[order[k]]);
    running = std::max(running, v);
    adjusted[order[k]] = running;
  }
  return adjusted;
}

InferenceRecord infer_one(const LmmDataset& dataset, const TunedFit& beta, Index coord,
                          const InferenceConfig& config) {
  InferenceRecord rec;
  rec.coord = coord;
  try {
    check_coord(dataset, coord);
    const auto spectra = compute_spectra(dataset, ProxySpec::sigma_b(coord));
    const auto proj = fit_projection(dataset, spectra, beta.fit.a, config.lambda_kappa, config.cv,
                                     beta.report.folds);
    rec = debias(dataset, coord, beta.fit, proj, config.inference);
  } catch (const NumericalError& e) {
    rec.ok = false;
    rec.error = e.what();
    rec.beta_hat = beta.fit.beta.size() > coord ? beta.fit.beta(coord) : kNaN;
    rec.beta_db = rec.v_hat = rec.se = rec.ci_low = rec.ci_high = rec.p_value = kNaN;
    log::warn(rec.error);
  }
  return rec;
}

InferenceResult infer_coordinates(const LmmDataset& dataset, const InferenceConfig& config,
                                  std::vector<Index> coords) {
  if (coords.empty()) {
    coords.resize(static_cast<std::size_t>(dataset.p()));
    std::iota(coords.begin(), coords.end(), Index{0});
  }
  for (Index c : coords) check_coord(dataset, c);
  if (dataset.p() < 2) throw DataError("inference needs p >= 2");

  InferenceResult result;
  result.beta = tune_and_fit(dataset, config.cv);
  if (!result.beta.fit.converged) log::warn("LASSO fit did not converge");
  result.records.reserve(coords.size());
  for (Index c : coords) result.records.push_back(infer_one(dataset, result.beta, c, config));

  std::vector<double> ps;
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < result.records.size(); ++k)
    if (result.records[k].ok) {
      ps.push_back(result.records[k].p_value);
      idx.push_back(k);
    }
  const auto adj = holm_adjust(ps);
  for (std::size_t k = 0; k < idx.size(); ++k) result.records[idx[k]].p_holm = adj[k];
  return result;
}

}  // namespace hetlmm
