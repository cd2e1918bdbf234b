#include "hetlmm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hetlmm/errors.hpp"
#include "hetlmm/log.hpp"
#include "hetlmm/mevar.hpp"
#include "hetlmm/parallel.hpp"
#include "hetlmm/varcomp.hpp"

namespace hetlmm::sim {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream identifiers for derive_key(seed, {rep, subject, stream}).
enum Stream : std::uint64_t {
  kSigmaX = 1,
  kPerturb = 2,
  kDesign = 3,
  kRandomEffect = 4,
  kNoise = 5,
  kFolds = 6,
  kMevarStructure = 7,
  kMevarGamma = 8,
  kMevarNoise = 9,
  kVarCompSplit = 10,
  kVarCompFolds = 11,
};

bool positive_definite(const MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  return eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() > kPdTolerance;
}

MatrixXd draw_design(const MatrixXd& sigma, Index rows, rng::CounterRng& gen) {
  const Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance is not positive definite");
  return gen.normal_matrix(rows, sigma.rows()) * llt.matrixL().transpose();
}

VectorXd draw_effects(const VectorXd& variances, rng::CounterRng& gen) {
  VectorXd g(variances.size());
  for (Index k = 0; k < g.size(); ++k) g(k) = std::sqrt(variances(k)) * gen.normal();
  return g;
}

}  // namespace

MethodSpec MethodSpec::proposed() { return {"proposed", {0.01, 1.0, 10.0, 50.0}, VarianceMode::sandwich}; }
MethodSpec MethodSpec::baseline() { return {"dblasso", {0.0}, VarianceMode::naive_iid}; }

Truth default_lmm_truth(Index p) {
  if (p < 20) throw DataError("the default design needs p >= 20");
  Truth t;
  t.beta = VectorXd::Zero(p);
  t.beta(0) = 1.0;
  t.beta(1) = 0.5;
  t.beta(5) = 0.2;
  t.beta(6) = 0.1;
  t.beta(8) = 0.05;
  t.psi = VectorXd::Zero(p);
  t.psi(0) = 2.0;
  t.psi(3) = 2.0;
  t.psi(6) = 0.1;
  t.psi(8) = 0.1;
  t.psi(9) = 4.0;
  t.psi(11) = 0.1;
  t.psi(15) = 2.0;
  t.psi(19) = 0.1;
  t.sigma_e2 = 1.0;
  return t;
}

Truth toy_truth() {
  Truth t;
  t.beta = (VectorXd(6) << 0.5, -0.4, 0.2, 0.4, 0.0, 0.0).finished();
  const VectorXd sd = (VectorXd(6) << 1.5, 0.0, 0.5, 0.75, 0.0, 0.5).finished();
  t.psi = sd.array().square();
  t.sigma_e2 = 1.0;
  return t;
}

MatrixXd gen_sigma_x(Index p, std::uint64_t key) {
  if (p < 2) throw DataError("gen_sigma_x needs p >= 2");
  rng::CounterRng gen(key);
  for (int attempt = 1; attempt <= kMaxPdAttempts; ++attempt) {
    MatrixXd S = MatrixXd::Identity(p, p);
    for (Index j = 0; j < p; ++j)
      for (Index k = j + 1; k < p; ++k)
        if (gen.bernoulli(0.2)) S(j, k) = S(k, j) = gen.uniform(-0.5, 0.5);
    if (positive_definite(S)) {
      log::debug("Sigma_X accepted after " + std::to_string(attempt) + " draw(s)");
      return S;
    }
  }
  throw NumericalError("Sigma_X: no positive definite draw in " + std::to_string(kMaxPdAttempts) +
                       " attempts for p=" + std::to_string(p));
}

MatrixXd perturb_sigma_x(const MatrixXd& sigma_x, rng::CounterRng& gen) {
  const Index p = sigma_x.rows();
  for (int attempt = 1; attempt <= kMaxPdAttempts; ++attempt) {
    MatrixXd S = sigma_x;
    for (Index j = 0; j < p; ++j)
      for (Index k = j + 1; k < p; ++k)
        if (gen.bernoulli(0.2)) {
          S(j, k) += 0.1 * gen.normal();
          S(k, j) = S(j, k);
        }
    if (positive_definite(S)) {
      if (attempt > 1) log::debug("subject Sigma_X accepted after " + std::to_string(attempt) + " draws");
      return S;
    }
  }
  throw NumericalError("subject Sigma_X: no positive definite perturbation in " +
                       std::to_string(kMaxPdAttempts) + " attempts");
}

SimData gen_lmm_dataset(const SimConfig& config, std::size_t rep) {
  const Index p = static_cast<Index>(config.p);
  Truth truth;
  if (config.model == Model::custom) {
    if (config.beta_star.size() != p || config.psi_star.size() != p)
      throw DataError("custom model needs beta_star and psi_star of length p");
    truth.beta = config.beta_star;
    truth.psi = config.psi_star;
  } else {
    truth = default_lmm_truth(p);
    if (config.beta_star.size() > 0) truth.beta = config.beta_star;
    if (config.psi_star.size() > 0) truth.psi = config.psi_star;
    if (truth.beta.size() != p || truth.psi.size() != p)
      throw DataError("beta_star and psi_star must have length p");
  }
  if (config.sigma_e2_star) truth.sigma_e2 = *config.sigma_e2_star;

  const MatrixXd sigma_x = gen_sigma_x(p, rng::derive_key(config.seed, {rep, 0, kSigmaX}));
  std::vector<VectorXd> ys;
  std::vector<MatrixXd> Xs;
  ys.reserve(config.n);
  Xs.reserve(config.n);
  const Index m = static_cast<Index>(config.m);
  for (std::size_t i = 0; i < config.n; ++i) {
    rng::CounterRng perturb(config.seed, {rep, i, kPerturb});
    rng::CounterRng design(config.seed, {rep, i, kDesign});
    rng::CounterRng effects(config.seed, {rep, i, kRandomEffect});
    rng::CounterRng noise(config.seed, {rep, i, kNoise});
    const MatrixXd X = draw_design(perturb_sigma_x(sigma_x, perturb), m, design);
    const VectorXd gamma = draw_effects(truth.psi, effects);
    VectorXd y = X * (truth.beta + gamma);
    if (truth.sigma_e2 > 0.0) y += std::sqrt(truth.sigma_e2) * noise.normal_vector(m);
    ys.push_back(std::move(y));
    Xs.push_back(X);
  }
  ColumnMap identity(static_cast<std::size_t>(p));
  for (Index k = 0; k < p; ++k) identity[static_cast<std::size_t>(k)] = k;
  return {LmmDataset::from_arrays(ys, Xs, std::move(identity)), truth};
}

SimData gen_toy_dataset(const SimConfig& config, std::size_t rep) {
  const Truth truth = toy_truth();
  const Index q = truth.beta.size();
  const Index m = static_cast<Index>(config.m);
  std::vector<MatrixXd> Y;
  Y.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    rng::CounterRng design(config.seed, {rep, i, kDesign});
    rng::CounterRng effects(config.seed, {rep, i, kRandomEffect});
    rng::CounterRng noise(config.seed, {rep, i, kNoise});
    const MatrixXd others = design.normal_matrix(m, q);
    const VectorXd gamma = draw_effects(truth.psi, effects);
    MatrixXd block(m, q + 1);
    block.col(0) = others * (truth.beta + gamma) + std::sqrt(truth.sigma_e2) * noise.normal_vector(m);
    block.rightCols(q) = others;
    Y.push_back(std::move(block));
  }
  return {make_neighborhood_dataset(Y, 0), truth};
}

double spectral_radius(const MatrixXd& A) {
  Eigen::EigenSolver<MatrixXd> eig(A, false);
  if (eig.info() != Eigen::Success) throw NumericalError("eigenvalue computation failed");
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

MevarStructure gen_mevar_structure(const SimConfig& config) {
  const auto& s = config.mevar;
  const Index p = static_cast<Index>(config.p);
  if (p < 2) throw DataError("MEVAR needs at least two nodes");
  if (s.row < 0 || s.row >= p) throw DataError("MEVAR row out of range");
  for (int attempt = 0; attempt < kMaxPdAttempts; ++attempt) {
    rng::CounterRng gen(config.seed, {static_cast<std::uint64_t>(attempt), 0, kMevarStructure});
    MatrixXd phi(p, p), gvar(p, p);
    for (Index j = 0; j < p; ++j)
      for (Index k = 0; k < p; ++k) {
        if (j == k)
          phi(j, k) = gen.uniform(0.2, 0.8);
        else
          phi(j, k) = gen.bernoulli(s.offdiag_prob) ? std::sqrt(s.offdiag_var) * gen.normal() : 0.0;
        gvar(j, k) = gen.bernoulli(s.gamma_prob) ? gen.uniform(s.gamma_lo, s.gamma_hi) : 0.0;
      }
    phi *= s.scale;
    gvar *= s.scale * s.scale;
    if (spectral_radius(phi) > 1.0 - 2.0 * s.margin) continue;

    MevarStructure st;
    st.phi = phi;
    st.gamma_var = gvar;
    st.row = s.row;
    st.coverage_coord = s.row;
    st.attempts = attempt + 1;
    double best = 0.0;
    for (Index k = 0; k < p; ++k)
      if (phi(s.row, k) == 0.0 && gvar(s.row, k) > best) {
        best = gvar(s.row, k);
        st.null_coord = k;
      }
    if (st.null_coord < 0) continue;
    return st;
  }
  throw NumericalError("MEVAR structure: no admissible draw in " + std::to_string(kMaxPdAttempts) +
                       " attempts");
}

std::vector<MatrixXd> gen_mevar_series(const SimConfig& config, const MevarStructure& st,
                                       std::size_t rep) {
  const auto& s = config.mevar;
  const Index p = st.phi.rows();
  const Index T = static_cast<Index>(config.T);
  const MatrixXd gsd = st.gamma_var.array().sqrt();
  std::vector<MatrixXd> out;
  out.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    rng::CounterRng ggen(config.seed, {rep, i, kMevarGamma});
    MatrixXd A;
    int attempt = 0;
    for (;;) {
      if (++attempt > kMaxPdAttempts)
        throw NumericalError("MEVAR: no stationary subject transition in " +
                             std::to_string(kMaxPdAttempts) + " attempts");
      A = st.phi;
      for (Index j = 0; j < p; ++j)
        for (Index k = 0; k < p; ++k)
          if (gsd(j, k) > 0.0) A(j, k) += gsd(j, k) * ggen.normal();
      if (spectral_radius(A) <= 1.0 - s.margin) break;
    }
    if (attempt > 1) log::debug("subject transition accepted after " + std::to_string(attempt) + " draws");

    rng::CounterRng noise(config.seed, {rep, i, kMevarNoise});
    const double sd = std::sqrt(s.sigma_eps2);
    VectorXd state = VectorXd::Zero(p);
    for (std::size_t b = 0; b < s.burn_in; ++b) state = A * state + sd * noise.normal_vector(p);
    MatrixXd series(T, p);
    for (Index t = 0; t < T; ++t) {
      state = A * state + sd * noise.normal_vector(p);
      series.row(t) = state.transpose();
    }
    out.push_back(std::move(series));
  }
  return out;
}

double mcc(const std::vector<bool>& selected, const std::vector<bool>& truth_nonzero) {
  if (selected.size() != truth_nonzero.size()) throw DataError("mcc: length mismatch");
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < selected.size(); ++k) {
    if (selected[k] && truth_nonzero[k]) ++tp;
    else if (selected[k]) ++fp;
    else if (truth_nonzero[k]) ++fn;
    else ++tn;
  }
  const double d = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (d == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(d);
}

// ---------------------------------------------------------------------------
// Monte Carlo driver
// ---------------------------------------------------------------------------

namespace {

struct RepResult {
  std::vector<CoordRecord> coords;
  std::optional<VarCompRecord> varcomp;
};

CvOptions cv_for(const SimConfig& config, const MethodSpec& method, std::size_t n, std::size_t rep) {
  CvOptions cv;
  cv.a_grid = method.a_grid;
  cv.n_lambdas = config.n_lambdas;
  cv.folds = std::min(config.folds, n);
  cv.seed = rng::derive_key(config.seed, {rep, 0, kFolds});
  cv.metric = config.cv_metric;
  cv.threads = 1;
  return cv;
}

SimData generate(const SimConfig& config, const std::optional<MevarStructure>& st, std::size_t rep) {
  switch (config.model) {
    case Model::toy_table1:
      return gen_toy_dataset(config, rep);
    case Model::mevar_appendixE: {
      const auto series = gen_mevar_series(config, *st, rep);
      Truth truth;
      truth.beta = st->phi.row(st->row).transpose();
      truth.psi = st->gamma_var.row(st->row).transpose();
      truth.sigma_e2 = config.mevar.sigma_eps2;
      return {build_row_problem(series, st->row), truth};
    }
    default:
      return gen_lmm_dataset(config, rep);
  }
}

void fail_all(RepResult& out, const SimData& data, const MethodSpec& method, std::size_t rep,
              const std::vector<Index>& coords, const std::string& why) {
  for (Index c : coords) {
    CoordRecord r;
    r.rep = rep;
    r.method = method.name;
    r.coord = c;
    r.truth = data.truth.beta(c);
    r.ok = false;
    r.error = why;
    out.coords.push_back(r);
  }
}

RepResult run_replicate(const SimConfig& config, const std::optional<MevarStructure>& st,
                        std::size_t rep, const std::vector<Index>& coords) {
  RepResult out;
  const SimData data = generate(config, st, rep);
  const auto& ds = data.dataset;

  if (!config.varcomp_only) {
    for (const auto& method : config.methods) {
      InferenceConfig ic;
      ic.cv = cv_for(config, method, ds.n(), rep);
      ic.inference.alpha = config.alpha;
      ic.inference.variance = method.variance;
      TunedFit tuned;
      try {
        tuned = tune_and_fit(ds, ic.cv);
      } catch (const NumericalError& e) {
        fail_all(out, data, method, rep, coords, e.what());
        continue;
      }
      for (Index c : coords) {
        CoordRecord r;
        r.rep = rep;
        r.method = method.name;
        r.coord = c;
        r.truth = data.truth.beta(c);
        r.a = tuned.fit.a;
        try {
          const auto spectra = compute_spectra(ds, ProxySpec::sigma_b(c));
          const auto proj = fit_projection(ds, spectra, tuned.fit.a, std::nullopt, ic.cv, tuned.report.folds);
          const auto rec = debias(ds, c, tuned.fit, proj, ic.inference);
          r.beta_hat = rec.beta_hat;
          r.beta_db = rec.beta_db;
          r.se = rec.se;
          r.ci_low = rec.ci_low;
          r.ci_high = rec.ci_high;
          r.p_value = rec.p_value;
          if (config.oracle_variance) {
            const double v = oracle_variance(ds, proj, data.truth.psi, data.truth.sigma_e2);
            r.v_ratio = v > 0.0 ? rec.v_hat / v : kNaN;
          }
        } catch (const NumericalError& e) {
          r.ok = false;
          r.error = e.what();
        }
        out.coords.push_back(r);
      }
    }
  }

  if (config.varcomp || config.varcomp_only) {
    VarCompRecord vr;
    vr.rep = rep;
    try {
      VarCompConfig vc;
      vc.beta_cv = cv_for(config, config.methods.front(), ds.n(), rep);
      vc.seed = rng::derive_key(config.seed, {rep, 0, kVarCompSplit});
      vc.psi_cv.seed = rng::derive_key(config.seed, {rep, 0, kVarCompFolds});
      const auto est = run_varcomp_pipeline(ds, vc);
      vr.psi_error = (est.psi_hat - data.truth.psi).norm();
      vr.sigma_e2_hat = est.sigma_e2_hat;
      std::vector<bool> sel, truth;
      for (Index k = 0; k < est.psi_hat.size(); ++k) {
        sel.push_back(est.psi_hat(k) != 0.0);
        truth.push_back(data.truth.psi(k) != 0.0);
      }
      vr.mcc = mcc(sel, truth);
    } catch (const NumericalError& e) {
      vr.ok = false;
      vr.error = e.what();
    } catch (const DataError& e) {
      vr.ok = false;
      vr.error = e.what();
    }
    out.varcomp = vr;
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

const CoordSummary& SimReport::find(const std::string& method, Index coord) const {
  for (const auto& c : coords)
    if (c.method == method && c.coord == coord) return c;
  throw DataError("no summary for method '" + method + "' coordinate " + std::to_string(coord));
}

SimReport run_monte_carlo(const SimConfig& config) {
  if (config.reps < 1) throw DataError("reps must be >= 1");
  if (config.n < 1 || config.m < 1 || config.p < 1) throw DataError("dimensions must be positive");
  if (config.methods.empty() && !config.varcomp_only) throw DataError("no methods configured");

  SimReport report;
  report.config = config;
  if (config.model == Model::mevar_appendixE) report.mevar = gen_mevar_structure(config);

  std::vector<Index> coords = config.coords;
  if (coords.empty()) {
    if (report.mevar) {
      coords = {report.mevar->coverage_coord, report.mevar->null_coord};
    } else {
      const Index p = config.model == Model::toy_table1 ? toy_truth().beta.size() : static_cast<Index>(config.p);
      for (Index k = 0; k < p; ++k) coords.push_back(k);
    }
  }
  report.config.coords = coords;

  std::vector<RepResult> results(config.reps);
  parallel_for(config.reps, resolve_threads(config.threads),
               [&](std::size_t rep) { results[rep] = run_replicate(config, report.mevar, rep, coords); });

  for (auto& r : results) {
    report.records.insert(report.records.end(), r.coords.begin(), r.coords.end());
    if (r.varcomp) report.varcomp_records.push_back(*r.varcomp);
  }

  if (!config.varcomp_only) {
    for (const auto& method : config.methods)
      for (Index c : coords) {
        CoordSummary s;
        s.method = method.name;
        s.coord = c;
        double rej = 0, cov = 0, se2 = 0;
        std::vector<double> ratios;
        for (const auto& rec : report.records) {
          if (rec.method != method.name || rec.coord != c) continue;
          s.truth = rec.truth;
          if (!rec.ok) {
            ++s.failed;
            continue;
          }
          ++s.evaluated;
          rej += rec.p_value < config.alpha ? 1.0 : 0.0;
          cov += (rec.ci_low <= rec.truth && rec.truth <= rec.ci_high) ? 1.0 : 0.0;
          se2 += (rec.beta_db - rec.truth) * (rec.beta_db - rec.truth);
          if (!std::isnan(rec.v_ratio)) ratios.push_back(rec.v_ratio);
        }
        s.null = s.truth == 0.0;
        if (s.evaluated > 0) {
          const double e = static_cast<double>(s.evaluated);
          s.rejection_rate = rej / e;
          s.coverage = cov / e;
          s.rmse = std::sqrt(se2 / e);
        } else {
          s.rejection_rate = s.coverage = s.rmse = kNaN;
        }
        s.median_v_ratio = median(ratios);
        report.coords.push_back(s);
      }
  }

  if (!report.varcomp_records.empty()) {
    VarCompSummary v;
    double psi2 = 0, sig2 = 0, m = 0;
    std::vector<double> errs;
    const double sigma_true = config.model == Model::mevar_appendixE ? config.mevar.sigma_eps2
                              : config.sigma_e2_star                 ? *config.sigma_e2_star
                                                                     : 1.0;
    for (const auto& r : report.varcomp_records) {
      if (!r.ok) {
        ++v.failed;
        continue;
      }
      ++v.evaluated;
      psi2 += r.psi_error * r.psi_error;
      sig2 += (r.sigma_e2_hat - sigma_true) * (r.sigma_e2_hat - sigma_true);
      m += r.mcc;
      errs.push_back(r.psi_error);
    }
    if (v.evaluated > 0) {
      const double e = static_cast<double>(v.evaluated);
      v.psi_rmse = std::sqrt(psi2 / e);
      v.sigma_e2_rmse = std::sqrt(sig2 / e);
      v.mean_mcc = m / e;
      v.median_psi_error = median(errs);
    } else {
      v.psi_rmse = v.sigma_e2_rmse = v.mean_mcc = v.median_psi_error = kNaN;
    }
    report.varcomp = v;
  }
  return report;
}

}  // namespace hetlmm::sim
