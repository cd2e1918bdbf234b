// Acceptance suite. Each criterion prints one PASS/FAIL line; details follow
// indented. Usage: hetlmm_acceptance [criterion ...]  (default: all)

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetlmm/errors.hpp"
#include "hetlmm/lasso.hpp"
#include "hetlmm/proxy.hpp"
#include "hetlmm/rng.hpp"
#include "hetlmm/sim.hpp"
#include "hetlmm/varcomp.hpp"

using namespace hetlmm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Pinned thresholds.
constexpr double kAlpha = 0.05;
constexpr double kTypeILo = 0.01, kTypeIHi = 0.10;
constexpr double kBaselineInflation = 0.30;
constexpr double kCoverageMin = 0.90;
constexpr double kBaselineCoverageMax = 0.70;
constexpr double kPowerMin = 0.95;
constexpr double kToyMixedMax = 0.10, kToyFixedMin = 0.10;
constexpr double kSigmaRmseMax = 0.35;
constexpr double kMccMin = 0.5;
constexpr double kMevarCoverageMin = 0.90;
constexpr double kMevarBaselineTypeIMin = 0.15;
constexpr double kWoodburyTol = 1e-9;
constexpr double kKktTol = 1e-5;
constexpr double kQuadFormTol = 1e-8;
constexpr double kHadamardTol = 1e-9;
constexpr double kVRatioLo = 0.7, kVRatioHi = 1.3;

constexpr std::uint64_t kSeed = 1;

// 0-based coordinates of the default truth.
constexpr Index kBeta1 = 0;     // β = 1, ψ = 2
constexpr Index kBeta2 = 1;     // β = 0.5, ψ = 0
constexpr Index kNullPsi4 = 9;  // β = 0, ψ = 4
constexpr Index kNullPsi0 = 10; // β = 0, ψ = 0

struct Outcome {
  bool pass = true;
  std::vector<std::string> lines;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    lines.push_back(std::string(ok ? "ok    " : "FAIL  ") + what);
  }
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

std::string band(double v, double lo, double hi) {
  return fmt(v) + " in [" + fmt(lo) + ", " + fmt(hi) + "]";
}

// The p=20, m=30, n=50 cell is shared by criteria 1-4.
const sim::SimReport& main_cell() {
  static std::optional<sim::SimReport> report;
  if (!report) {
    sim::SimConfig c;
    c.n = 50;
    c.m = 30;
    c.p = 20;
    c.reps = 200;
    c.seed = kSeed;
    c.alpha = kAlpha;
    c.coords = {kBeta1, kBeta2, kNullPsi4, kNullPsi0};
    c.methods = {sim::MethodSpec::proposed(), sim::MethodSpec::baseline()};
    report = sim::run_monte_carlo(c);
  }
  return *report;
}

void report_failures(Outcome& o, const sim::CoordSummary& s) {
  if (s.failed > 0) o.lines.push_back("note  " + s.method + " coord " + std::to_string(s.coord) + ": " +
                                      std::to_string(s.failed) + " failed replicate(s)");
}

Outcome criterion1() {
  Outcome o;
  const auto& r = main_cell();
  for (Index c : {kNullPsi4, kNullPsi0}) {
    const auto& s = r.find("proposed", c);
    report_failures(o, s);
    o.check(s.rejection_rate >= kTypeILo && s.rejection_rate <= kTypeIHi,
            "proposed type-I, coord " + std::to_string(c) + ": " + band(s.rejection_rate, kTypeILo, kTypeIHi));
  }
  return o;
}

Outcome criterion2() {
  Outcome o;
  const auto& s = main_cell().find("dblasso", kNullPsi4);
  report_failures(o, s);
  o.check(s.rejection_rate >= kBaselineInflation,
          "a=0 baseline type-I, psi=4 null: " + fmt(s.rejection_rate) + " >= " + fmt(kBaselineInflation));
  return o;
}

Outcome criterion3() {
  Outcome o;
  const auto& r = main_cell();
  const auto& p = r.find("proposed", kBeta1);
  const auto& b = r.find("dblasso", kNullPsi4);
  report_failures(o, p);
  o.check(p.coverage >= kCoverageMin, "proposed coverage, beta_1: " + fmt(p.coverage) + " >= " + fmt(kCoverageMin));
  o.check(b.coverage <= kBaselineCoverageMax,
          "a=0 baseline coverage, psi=4 null: " + fmt(b.coverage) + " <= " + fmt(kBaselineCoverageMax));
  return o;
}

Outcome criterion4() {
  Outcome o;
  const auto& s = main_cell().find("proposed", kBeta2);
  report_failures(o, s);
  o.check(s.rejection_rate >= kPowerMin,
          "proposed power, beta_2 = 0.5: " + fmt(s.rejection_rate) + " >= " + fmt(kPowerMin));
  return o;
}

Outcome criterion5() {
  Outcome o;
  sim::SimConfig c;
  c.model = sim::Model::toy_table1;
  c.n = 20;
  c.m = 10;
  c.p = 7;
  c.reps = 500;
  c.seed = kSeed;
  c.alpha = kAlpha;
  c.coords = {5};  // edge 1-7 in the neighborhood of node 1
  c.methods = {sim::MethodSpec::proposed(), sim::MethodSpec::baseline()};
  const auto r = sim::run_monte_carlo(c);
  const auto& mixed = r.find("proposed", 5);
  const auto& fixed = r.find("dblasso", 5);
  report_failures(o, mixed);
  o.check(mixed.rejection_rate <= kToyMixedMax,
          "mixed type-I, edge 1-7: " + fmt(mixed.rejection_rate) + " <= " + fmt(kToyMixedMax));
  o.check(fixed.rejection_rate >= kToyFixedMin,
          "fixed (a=0) type-I, edge 1-7: " + fmt(fixed.rejection_rate) + " >= " + fmt(kToyFixedMin));
  return o;
}

sim::VarCompSummary varcomp_cell(std::size_t n, std::size_t m, std::size_t reps) {
  sim::SimConfig c;
  c.n = n;
  c.m = m;
  c.p = 20;
  c.reps = reps;
  c.seed = kSeed;
  c.varcomp = true;
  c.varcomp_only = true;
  return *sim::run_monte_carlo(c).varcomp;
}

Outcome criterion6() {
  Outcome o;
  const auto n30 = varcomp_cell(30, 50, 100);
  const auto n50 = varcomp_cell(50, 50, 100);
  const auto n100 = varcomp_cell(100, 50, 100);
  o.check(n100.median_psi_error < n30.median_psi_error,
          "median |psi_hat - psi|_2 at m=50: n=30 " + fmt(n30.median_psi_error) + " > n=100 " +
              fmt(n100.median_psi_error));
  const auto s = varcomp_cell(100, 70, 200);
  o.check(s.sigma_e2_rmse <= kSigmaRmseMax,
          "sigma_e2 RMSE at m=70, n=100: " + fmt(s.sigma_e2_rmse) + " <= " + fmt(kSigmaRmseMax));
  o.check(n100.mean_mcc >= kMccMin, "mean MCC at n=100, m=50: " + fmt(n100.mean_mcc) + " >= " + fmt(kMccMin));
  o.check(n30.mean_mcc < n50.mean_mcc && n50.mean_mcc < n100.mean_mcc,
          "mean MCC increasing in n: " + fmt(n30.mean_mcc) + " < " + fmt(n50.mean_mcc) + " < " + fmt(n100.mean_mcc));
  return o;
}

Outcome criterion7() {
  Outcome o;
  sim::SimConfig c;
  c.model = sim::Model::mevar_appendixE;
  c.n = 40;
  c.p = 30;
  c.T = 50;
  c.reps = 200;
  c.seed = kSeed;
  c.alpha = kAlpha;
  c.cv_metric = CvMetric::raw;
  c.methods = {sim::MethodSpec::proposed(), sim::MethodSpec::baseline()};
  const auto r = sim::run_monte_carlo(c);
  const auto& st = *r.mevar;
  const auto& cov = r.find("proposed", st.coverage_coord);
  const auto& null = r.find("dblasso", st.null_coord);
  report_failures(o, cov);
  o.check(cov.coverage >= kMevarCoverageMin, "proposed coverage, phi(" + std::to_string(st.row) + "," +
                                                 std::to_string(st.coverage_coord) + "): " + fmt(cov.coverage) +
                                                 " >= " + fmt(kMevarCoverageMin));
  o.check(null.rejection_rate >= kMevarBaselineTypeIMin,
          "a=0 baseline type-I, phi(" + std::to_string(st.row) + "," + std::to_string(st.null_coord) +
              ") with sigma_gamma^2 > 0: " + fmt(null.rejection_rate) + " >= " + fmt(kMevarBaselineTypeIMin));
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 8: property suite
// ---------------------------------------------------------------------------

double rel_err(const MatrixXd& got, const MatrixXd& want) {
  return (got - want).norm() / std::max(1.0, want.norm());
}

void check_woodbury(Outcome& o) {
  rng::CounterRng gen(kSeed, {8, 1});
  double worst = 0.0;
  for (int t = 0; t < 500; ++t) {
    const Index m = 1 + static_cast<Index>(gen.below(8));
    const Index q = 1 + static_cast<Index>(gen.below(8));
    MatrixXd Z = gen.normal_matrix(m, q);
    if (t % 7 == 0) Z.col(0).setZero();  // rank-deficient cases
    const double a = std::exp(gen.uniform(std::log(1e-2), std::log(1e2)));
    std::optional<Index> drop;
    if (t % 3 == 0 && q > 1) drop = static_cast<Index>(gen.below(static_cast<std::uint64_t>(q)));

    MatrixXd Zd = Z;
    if (drop) {
      Zd.resize(m, q - 1);
      for (Index k = 0, c = 0; k < q; ++k)
        if (k != *drop) Zd.col(c++) = Z.col(k);
    }
    const MatrixXd S = a * Zd * Zd.transpose() + MatrixXd::Identity(m, m);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
    const MatrixXd inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                         es.eigenvectors().transpose();
    const MatrixXd inv_sqrt = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                              es.eigenvectors().transpose();

    const auto f = factor_proxy(Z, a, drop);
    const MatrixXd V = gen.normal_matrix(m, 3);
    worst = std::max(worst, rel_err(apply_inv(f, V), inv * V));
    worst = std::max(worst, rel_err(apply_inv_sqrt(f, V), inv_sqrt * V));
    worst = std::max(worst, std::abs(trace_inv(f) - inv.trace()) / std::max(1.0, inv.trace()));
  }
  o.check(worst <= kWoodburyTol, "(a) spectral vs dense inverse, 500 instances: max rel err " + fmt(worst, 3) +
                                     " <= " + fmt(kWoodburyTol));
}

void check_lasso_kkt(Outcome& o) {
  rng::CounterRng gen(kSeed, {8, 2});
  double worst = 0.0;
  int converged = 0, fitted = 0;
  for (int t = 0; t < 1000; ++t) {
    const Index rows = 5 + static_cast<Index>(gen.below(40));
    const Index p = 1 + static_cast<Index>(gen.below(15));
    MatrixXd X = gen.normal_matrix(rows, p);
    if (t % 5 == 0) X.col(static_cast<Index>(gen.below(static_cast<std::uint64_t>(p)))) *= 10.0;
    if (t % 11 == 0) X.col(0).setZero();
    VectorXd beta = VectorXd::Zero(p);
    for (Index j = 0; j < p; ++j)
      if (gen.bernoulli(0.3)) beta(j) = gen.normal();
    const VectorXd y = X * beta + gen.normal_vector(rows);
    GramSystem g(p);
    g.gram = X.transpose() * X;
    g.xty = X.transpose() * y;
    g.yty = y.squaredNorm();
    g.weight = gen.uniform(0.5, 2.0) * static_cast<double>(rows);
    g.rows = rows;
    double lmax = 0.0;
    try {
      lmax = lambda_max(g);
    } catch (const DataError&) {
      continue;
    }
    const double lambda = lmax * std::exp(gen.uniform(std::log(1e-3), 0.0));
    const auto fit = solve_lasso(g, lambda);
    ++fitted;
    if (fit.converged) ++converged;
    worst = std::max(worst, kkt_violation(g, fit.beta, lambda));
  }
  o.check(worst <= kKktTol && fitted > 0,
          "(b) LASSO KKT residual, " + std::to_string(fitted) + " fits (" + std::to_string(converged) +
              " converged): max " + fmt(worst, 3) +
              " <= " + fmt(kKktTol));
}

double frobenius_objective(const std::vector<MatrixXd>& Zs, const std::vector<VectorXd>& rs, const VectorXd& psi) {
  double total = 0.0;
  for (std::size_t i = 0; i < Zs.size(); ++i) {
    const MatrixXd& Z = Zs[i];
    const VectorXd& r = rs[i];
    MatrixXd M = r * r.transpose();
    M.diagonal() -= r.cwiseAbs2();
    M -= Z * psi.asDiagonal() * Z.transpose();
    for (Index l = 0; l < Z.cols(); ++l) M.diagonal() += psi(l) * Z.col(l).cwiseAbs2();
    total += M.squaredNorm();
  }
  return total;
}

void check_quad_form(Outcome& o) {
  rng::CounterRng gen(kSeed, {8, 3});
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    std::vector<MatrixXd> Zs;
    std::vector<VectorXd> rs;
    MomentSystem sys(4);
    for (int i = 0; i < 3; ++i) {
      Zs.push_back(gen.normal_matrix(5, 4));
      rs.push_back(gen.normal_vector(5) * 2.0);
      sys += subject_moments(Zs.back(), rs.back());
    }
    const VectorXd psi = gen.normal_vector(4);
    const double want = frobenius_objective(Zs, rs, psi);
    const double got = moment_objective(sys, psi);
    worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
  }
  o.check(worst <= kQuadFormTol,
          "(c) quadratic form vs Frobenius objective: max rel err " + fmt(worst, 3) + " <= " + fmt(kQuadFormTol));
}

void check_hadamard(Outcome& o) {
  rng::CounterRng gen(kSeed, {8, 4});
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Index m = 2 + static_cast<Index>(gen.below(8));
    const Index q = 1 + static_cast<Index>(gen.below(8));
    MomentSystem sys(q);
    MatrixXd want = MatrixXd::Zero(q, q);
    for (int i = 0; i < 3; ++i) {
      const MatrixXd Z = gen.normal_matrix(m, q);
      sys += subject_moments(Z, gen.normal_vector(m));
      const MatrixXd ZtZ = Z.transpose() * Z;
      const MatrixXd Z2 = Z.cwiseAbs2();
      want += ZtZ.cwiseProduct(ZtZ) - Z2.transpose() * Z2;
    }
    worst = std::max(worst, rel_err(sys.B, want));
  }
  o.check(worst <= kHadamardTol,
          "(d) B vs sum of (G1 - G2): max rel err " + fmt(worst, 3) + " <= " + fmt(kHadamardTol));
}

void check_rmt(Outcome& o) {
  constexpr Index m = 10, q = 50;
  constexpr int N = 2000;
  constexpr double a = 1.0;
  rng::CounterRng gen(kSeed, {8, 5});
  double smax_sum = 0.0, tr_sum = 0.0;
  MatrixXd mean = MatrixXd::Zero(q, q), sq = MatrixXd::Zero(q, q);
  for (int t = 0; t < N; ++t) {
    const MatrixXd Z = gen.normal_matrix(m, q);
    const auto f = factor_proxy(Z, a);
    smax_sum += std::sqrt(f.eigvals().maxCoeff());
    tr_sum += trace_inv(f);
    const MatrixXd K = Z.transpose() * apply_inv(f, Z);
    mean += K;
    sq += K.cwiseAbs2();
  }
  mean /= N;
  const MatrixXd se = ((sq / N - mean.cwiseAbs2()) / (N - 1)).cwiseMax(0.0).cwiseSqrt();

  const double smax = smax_sum / N;
  const double lo = std::sqrt(double(q)) - std::sqrt(double(m)), hi = std::sqrt(double(q)) + std::sqrt(double(m));
  o.check(smax >= lo && smax <= hi, "(e) mean sigma_max(Z), 10x50: " + band(smax, lo, hi));

  double off = 0.0, diag = 0.0;
  const double dmean = mean.diagonal().mean();
  for (Index j = 0; j < q; ++j)
    for (Index k = 0; k < q; ++k) {
      const double z = (j == k ? mean(j, k) - dmean : mean(j, k)) / se(j, k);
      (j == k ? diag : off) = std::max(j == k ? diag : off, std::abs(z));
    }
  o.check(off < 5.0, "(e) mean Z'(aZZ'+I)^-1 Z off-diagonal: max |entry|/SE " + fmt(off) + " < 5");
  o.check(diag <= 3.0, "(e) mean Z'(aZZ'+I)^-1 Z diagonal: max |entry - avg|/SE " + fmt(diag) + " <= 3");

  const double tr = tr_sum / N;
  const double rate = double(m) / double(q);
  o.check(std::abs(tr / rate - 1.0) <= 0.3,
          "(e) mean tr((aZZ'+I)^-1) / (m/q): " + fmt(tr / rate) + " within 30% of 1");
}

void check_v_ratio(Outcome& o) {
  sim::SimConfig c;
  c.n = 100;
  c.m = 30;
  c.p = 20;
  c.reps = 100;
  c.seed = kSeed;
  c.coords = {kBeta1, kBeta2, kNullPsi4, kNullPsi0};
  c.methods = {sim::MethodSpec::proposed()};
  c.oracle_variance = true;
  const auto r = sim::run_monte_carlo(c);
  for (Index k : c.coords) {
    const double v = r.find("proposed", k).median_v_ratio;
    o.check(v >= kVRatioLo && v <= kVRatioHi,
            "(f) median Vhat/V at n=100, coord " + std::to_string(k) + ": " + band(v, kVRatioLo, kVRatioHi));
  }
}

Outcome criterion8() {
  Outcome o;
  check_woodbury(o);
  check_lasso_kkt(o);
  check_quad_form(o);
  check_hadamard(o);
  check_rmt(o);
  check_v_ratio(o);
  return o;
}

const std::map<int, std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::map<int, std::pair<std::string, std::function<Outcome()>>> all = {
      {1, {"type-I control, p=20 m=30 n=50", criterion1}},
      {2, {"a=0 baseline inflation", criterion2}},
      {3, {"confidence interval coverage", criterion3}},
      {4, {"power for beta_2", criterion4}},
      {5, {"toy graph replication", criterion5}},
      {6, {"variance components", criterion6}},
      {7, {"MEVAR coverage and baseline inflation", criterion7}},
      {8, {"oracle and property suite", criterion8}},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (!criteria().count(k)) {
      std::cerr << "unknown criterion: " << argv[i] << '\n';
      return 2;
    }
    wanted.push_back(k);
  }
  if (wanted.empty())
    for (const auto& [k, _] : criteria()) wanted.push_back(k);

  bool all_pass = true;
  for (int k : wanted) {
    const auto& [name, run] = criteria().at(k);
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    std::cout << "criterion " << k << " [" << name << "]: " << (o.pass ? "PASS" : "FAIL") << '\n';
    for (const auto& line : o.lines) std::cout << "    " << line << '\n';
    std::cout.flush();
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
