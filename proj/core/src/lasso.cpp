#include "hetlmm/lasso.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <string>

#include "hetlmm/errors.hpp"
#include "hetlmm/parallel.hpp"

namespace hetlmm {

GramSystem::GramSystem(Index p) : gram(MatrixXd::Zero(p, p)), xty(VectorXd::Zero(p)) {}

GramSystem& GramSystem::operator+=(const GramSystem& other) {
  if (gram.size() == 0) {
    gram = MatrixXd::Zero(other.gram.rows(), other.gram.cols());
    xty = VectorXd::Zero(other.xty.size());
  }
  gram += other.gram;
  xty += other.xty;
  yty += other.yty;
  weight += other.weight;
  rows += other.rows;
  return *this;
}

namespace {

struct RawPair {
  VectorXd y;
  MatrixXd X;
};

RawPair raw_pair(const SubjectBlock& b, const ProxySpec& spec) {
  if (spec.kind == ProxySpec::Kind::sigma_a) return {b.y, b.X};
  const Index p = b.X.cols();
  const Index j = spec.coord;
  MatrixXd X(b.X.rows(), p - 1);
  X.leftCols(j) = b.X.leftCols(j);
  X.rightCols(p - 1 - j) = b.X.rightCols(p - 1 - j);
  return {b.X.col(j), std::move(X)};
}

void check_spec(const LmmDataset& dataset, const ProxySpec& spec) {
  if (spec.kind != ProxySpec::Kind::sigma_b) return;
  if (dataset.p() < 2) throw DataError("projection regression needs p >= 2");
  if (spec.coord < 0 || spec.coord >= dataset.p())
    throw DataError("coordinate " + std::to_string(spec.coord) + " out of range [0," +
                    std::to_string(dataset.p()) + ")");
}

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace

SubjectSpectra compute_spectra(const LmmDataset& dataset, ProxySpec spec) {
  check_spec(dataset, spec);
  std::optional<Index> dropped;
  if (spec.kind == ProxySpec::Kind::sigma_b) {
    const Index zc = dataset.z_column_of(spec.coord);
    if (zc >= 0) dropped = zc;
  }
  SubjectSpectra out;
  out.spec = spec;
  out.spectra.reserve(dataset.n());
  for (const auto& b : dataset.blocks())
    out.spectra.push_back(std::make_shared<const GramSpectrum>(gram_spectrum(b.Z, dropped)));
  return out;
}

LassoProblem build_problem(const LmmDataset& dataset, double a, ProxySpec spec) {
  return build_problem(dataset, a, compute_spectra(dataset, spec));
}

LassoProblem build_problem(const LmmDataset& dataset, double a, const SubjectSpectra& spectra) {
  if (!(a >= 0.0) || !std::isfinite(a)) throw DataError("a must be finite and >= 0");
  check_spec(dataset, spectra.spec);
  if (spectra.spectra.size() != dataset.n())
    throw DataError("spectra were computed for a different number of subjects");

  LassoProblem problem;
  problem.a = a;
  problem.spec = spectra.spec;
  problem.p = spectra.spec.kind == ProxySpec::Kind::sigma_a ? dataset.p() : dataset.p() - 1;
  problem.stats = GramSystem(problem.p);
  problem.blocks.reserve(dataset.n());
  problem.proxies.reserve(dataset.n());

  for (std::size_t i = 0; i < dataset.n(); ++i) {
    const auto& b = dataset.block(i);
    if (spectra.spectra[i]->m != b.rows())
      throw DataError("proxy shape does not match subject " + b.subject_id);
    ProxyFactor f(spectra.spectra[i], a);
    const RawPair raw = raw_pair(b, spectra.spec);

    DecorrelatedBlock d;
    d.X_tilde = apply_inv_sqrt(f, raw.X);
    d.y_tilde = apply_inv_sqrt(f, raw.y);
    d.tr_inv = trace_inv(f);
    d.stats.gram = d.X_tilde.transpose() * d.X_tilde;
    d.stats.xty = d.X_tilde.transpose() * d.y_tilde;
    d.stats.yty = d.y_tilde.squaredNorm();
    d.stats.weight = d.tr_inv;
    d.stats.rows = b.rows();

    problem.stats += d.stats;
    problem.blocks.push_back(std::move(d));
    problem.proxies.push_back(std::move(f));
  }
  problem.T = problem.stats.weight;
  if (!(problem.T > 0.0)) throw NumericalError("trace normalizer is not positive");
  return problem;
}

GramSystem sum_stats(const LassoProblem& problem, const std::vector<std::size_t>& subjects) {
  GramSystem s(problem.p);
  for (auto i : subjects) s += problem.blocks.at(i).stats;
  return s;
}

double lambda_max(const GramSystem& stats) {
  if (!(stats.weight > 0.0)) throw DataError("lambda_max: normalizer must be positive");
  if ((stats.gram.diagonal().array() <= 0.0).all())
    throw DataError("lambda_max: all-zero design");
  return stats.xty.lpNorm<Eigen::Infinity>() / stats.weight;
}

double lambda_max(const LassoProblem& problem) { return lambda_max(problem.stats); }

double lasso_objective(const GramSystem& stats, const VectorXd& beta, double lambda) {
  const double quad = stats.yty - 2.0 * beta.dot(stats.xty) + beta.dot(stats.gram * beta);
  return quad / (2.0 * stats.weight) + lambda * beta.lpNorm<1>();
}

double kkt_violation(const GramSystem& stats, const VectorXd& beta, double lambda) {
  const VectorXd g = -(stats.xty - stats.gram * beta) / stats.weight;
  double worst = 0.0;
  for (Index j = 0; j < beta.size(); ++j) {
    if (stats.gram(j, j) <= 0.0) continue;
    const double v = beta(j) != 0.0 ? std::abs(g(j) + lambda * (beta(j) > 0 ? 1.0 : -1.0))
                                    : std::max(0.0, std::abs(g(j)) - lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

LassoFit solve_lasso(const GramSystem& stats, double lambda, const std::optional<VectorXd>& warm_start,
                     const LassoOptions& options) {
  const Index p = stats.gram.rows();
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DataError("lambda must be positive");
  if (!(stats.weight > 0.0)) throw DataError("normalizer must be positive");

  const MatrixXd& G = stats.gram;
  VectorXd beta = VectorXd::Zero(p);
  if (warm_start) {
    if (warm_start->size() != p) throw DataError("warm start has the wrong length");
    beta = *warm_start;
  }
  std::vector<char> frozen(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) {
    frozen[j] = G(j, j) <= 0.0;
    if (frozen[j]) beta(j) = 0.0;
  }

  const double threshold = lambda * stats.weight;
  VectorXd h(p);

  auto update = [&](Index j) {
    if (frozen[j]) return 0.0;
    const double old = beta(j);
    const double fresh = soft_threshold(h(j) + G(j, j) * old, threshold) / G(j, j);
    const double delta = fresh - old;
    if (delta != 0.0) {
      h.noalias() -= G.col(j) * delta;
      beta(j) = fresh;
    }
    return std::abs(delta);
  };
  auto small = [&](double change) {
    return change < options.tol * std::max(1.0, beta.lpNorm<Eigen::Infinity>());
  };

  LassoFit fit;
  fit.lambda = lambda;
  std::vector<Index> active;
  while (fit.iters < options.max_iters) {
#ifndef NDEBUG
    const double before = lasso_objective(stats, beta, lambda);
#endif
    h = stats.xty - G * beta;
    double change = 0.0;
    for (Index j = 0; j < p; ++j) change = std::max(change, update(j));
    ++fit.iters;
#ifndef NDEBUG
    const double after = lasso_objective(stats, beta, lambda);
    assert(after <= before + 1e-10 * std::max(1.0, std::abs(before)));
#endif
    if (small(change)) {
      if (kkt_violation(stats, beta, lambda) <= options.kkt_tol) {
        fit.converged = true;
        break;
      }
      continue;
    }

    active.clear();
    for (Index j = 0; j < p; ++j)
      if (beta(j) != 0.0) active.push_back(j);
    while (fit.iters < options.max_iters) {
      double inner = 0.0;
      for (Index j : active) inner = std::max(inner, update(j));
      ++fit.iters;
      if (small(inner)) break;
    }
  }

  fit.beta = std::move(beta);
  fit.objective = lasso_objective(stats, fit.beta, lambda);
  fit.kkt_residual = kkt_violation(stats, fit.beta, lambda);
  for (Index j = 0; j < p; ++j)
    if (fit.beta(j) != 0.0) fit.active_set.push_back(j);
  return fit;
}

LassoFit solve_lasso(const LassoProblem& problem, double lambda,
                     const std::optional<VectorXd>& warm_start, const LassoOptions& options) {
  auto fit = solve_lasso(problem.stats, lambda, warm_start, options);
  fit.a = problem.a;
  return fit;
}

std::vector<LassoFit> solve_path(const GramSystem& stats, const std::vector<double>& lambdas,
                                 const LassoOptions& options) {
  for (std::size_t k = 1; k < lambdas.size(); ++k)
    if (lambdas[k] > lambdas[k - 1]) throw DataError("lambda path must be non-increasing");
  std::vector<LassoFit> path;
  path.reserve(lambdas.size());
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (k > 0 && lambdas[k] == lambdas[k - 1]) {
      path.push_back(path.back());
      continue;
    }
    std::optional<VectorXd> warm;
    if (k > 0) warm = path.back().beta;
    path.push_back(solve_lasso(stats, lambdas[k], warm, options));
  }
  return path;
}

std::vector<LassoFit> solve_path(const LassoProblem& problem, const std::vector<double>& lambdas,
                                 const LassoOptions& options) {
  auto path = solve_path(problem.stats, lambdas, options);
  for (auto& fit : path) fit.a = problem.a;
  return path;
}

std::vector<double> lambda_grid(double lmax, std::size_t n, double ratio) {
  if (n == 0) throw DataError("lambda grid needs at least one value");
  if (!(lmax > 0.0)) throw DataError("lambda grid needs a positive maximum");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw DataError("lambda ratio must be in (0, 1]");
  std::vector<double> grid(n);
  if (n == 1) {
    grid[0] = lmax;
    return grid;
  }
  const double step = std::log(ratio) / static_cast<double>(n - 1);
  for (std::size_t k = 0; k < n; ++k) grid[k] = lmax * std::exp(step * static_cast<double>(k));
  return grid;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

namespace {

std::vector<double> grid_for(const LassoProblem& problem, const CvOptions& options) {
  double lmax = lambda_max(problem);
  // Response orthogonal to every column: any positive penalty gives zero.
  if (!(lmax > 0.0)) lmax = 1.0;
  return lambda_grid(lmax, options.n_lambdas, options.lambda_ratio);
}

double held_out_error(const LmmDataset& dataset, const LassoProblem& problem,
                      const std::vector<std::size_t>& subjects, const VectorXd& beta,
                      CvMetric metric) {
  double sse = 0.0;
  double denom = 0.0;
  for (auto i : subjects) {
    if (metric == CvMetric::decorrelated) {
      const auto& b = problem.blocks[i];
      sse += (b.y_tilde - b.X_tilde * beta).squaredNorm();
      denom += b.tr_inv;
    } else {
      const RawPair raw = raw_pair(dataset.block(i), problem.spec);
      sse += (raw.y - raw.X * beta).squaredNorm();
      denom += static_cast<double>(raw.y.size());
    }
  }
  return sse / denom;
}

}  // namespace

CvReport cross_validate(const LmmDataset& dataset, const CvOptions& options, ProxySpec spec) {
  const auto folds = partition_subjects(dataset, PartitionKind::cv_folds, options.folds, options.seed);
  return cross_validate(dataset, options, compute_spectra(dataset, spec), folds);
}

CvReport cross_validate(const LmmDataset& dataset, const CvOptions& options,
                        const SubjectSpectra& spectra, const SubjectPartition& folds) {
  if (options.a_grid.empty()) throw DataError("a_grid is empty");
  if (folds.assignment.size() != dataset.n())
    throw DataError("fold assignment does not match the dataset");
  if (folds.parts < 2) throw DataError("cross-validation needs at least 2 folds");
  for (double a : options.a_grid)
    if (!(a >= 0.0) || !std::isfinite(a)) throw DataError("a_grid values must be finite and >= 0");

  const std::size_t n_a = options.a_grid.size();
  const std::size_t n_l = options.n_lambdas;
  const std::size_t K = folds.parts;

  CvReport report;
  report.folds = folds;
  report.grid.resize(n_a * n_l);
  report.cv_mse.assign(n_a * n_l, 0.0);
  report.per_fold = MatrixXd::Zero(static_cast<Index>(n_a * n_l), static_cast<Index>(K));

  std::vector<std::vector<std::size_t>> train(K), test(K);
  for (std::size_t k = 0; k < K; ++k) {
    train[k] = folds.complement(k);
    test[k] = folds.members(k);
  }

  parallel_for(n_a, options.threads, [&](std::size_t ai) {
    const double a = options.a_grid[ai];
    const LassoProblem problem = build_problem(dataset, a, spectra);
    const auto lambdas = grid_for(problem, options);
    for (std::size_t l = 0; l < n_l; ++l) report.grid[ai * n_l + l] = {a, lambdas[l]};
    for (std::size_t k = 0; k < K; ++k) {
      const GramSystem stats = sum_stats(problem, train[k]);
      const auto path = solve_path(stats, lambdas, options.solver);
      for (std::size_t l = 0; l < n_l; ++l)
        report.per_fold(static_cast<Index>(ai * n_l + l), static_cast<Index>(k)) =
            held_out_error(dataset, problem, test[k], path[l].beta, options.metric);
    }
  });

  for (std::size_t g = 0; g < report.grid.size(); ++g)
    report.cv_mse[g] = report.per_fold.row(static_cast<Index>(g)).mean();

  const double best = *std::min_element(report.cv_mse.begin(), report.cv_mse.end());
  const double tie = 1e-12 * std::max(1.0, std::abs(best));
  std::size_t chosen = report.grid.size();
  for (std::size_t g = 0; g < report.grid.size(); ++g) {
    if (report.cv_mse[g] > best + tie) continue;
    if (chosen == report.grid.size()) {
      chosen = g;
      continue;
    }
    const auto& c = report.grid[chosen];
    const auto& cand = report.grid[g];
    if (cand.lambda > c.lambda || (cand.lambda == c.lambda && cand.a < c.a)) chosen = g;
  }
  report.chosen_index = chosen;
  report.chosen = report.grid[chosen];
  return report;
}

TunedFit tune_and_fit(const LmmDataset& dataset, const CvOptions& options, ProxySpec spec) {
  const auto folds = partition_subjects(dataset, PartitionKind::cv_folds, options.folds, options.seed);
  return tune_and_fit(dataset, options, compute_spectra(dataset, spec), folds);
}

TunedFit tune_and_fit(const LmmDataset& dataset, const CvOptions& options,
                      const SubjectSpectra& spectra, const SubjectPartition& folds) {
  TunedFit out;
  out.report = cross_validate(dataset, options, spectra, folds);
  out.problem = build_problem(dataset, out.report.chosen.a, spectra);
  const auto lambdas = grid_for(out.problem, options);
  const std::size_t stop = out.report.chosen_index % options.n_lambdas;
  const std::vector<double> head(lambdas.begin(), lambdas.begin() + static_cast<long>(stop) + 1);
  auto path = solve_path(out.problem, head, options.solver);
  out.fit = std::move(path.back());
  return out;
}

}  // namespace hetlmm
