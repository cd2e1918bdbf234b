#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hetlmm/csv.hpp"
#include "hetlmm/dataset.hpp"
#include "hetlmm/errors.hpp"
#include "hetlmm/graph.hpp"
#include "hetlmm/inference.hpp"
#include "hetlmm/lasso.hpp"
#include "hetlmm/log.hpp"
#include "hetlmm/mevar.hpp"
#include "hetlmm/parallel.hpp"
#include "hetlmm/sim.hpp"
#include "hetlmm/varcomp.hpp"

namespace hetlmm::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using csv::format_double;

namespace {

// ---------------------------------------------------------------------------
// Options shared by the analysis subcommands
// ---------------------------------------------------------------------------

struct Common {
  std::string manifest;
  std::string config;
  std::string out;
  std::string a = "cv";
  std::string a_grid;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  int verbose = 0;
};

/// Settings after merging the optional JSON config with command-line flags.
struct Settings {
  CvOptions cv;
  InferenceOptions inference;
  std::optional<double> lambda_kappa;
  std::optional<double> lambda_theta;
  bool nonnegative = false;
  std::uint64_t seed = 0;
  bool metric_set = false;
};

[[noreturn]] void config_error(const std::string& pointer, const std::string& what) {
  throw DataError("config " + pointer + ": " + what);
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& cell : csv::split_line(text)) {
    if (cell.empty()) continue;
    try {
      std::size_t used = 0;
      const double v = std::stod(cell, &used);
      if (used != cell.size()) throw std::invalid_argument(cell);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw DataError(what + ": cannot parse '" + cell + "' as a number");
    }
  }
  if (out.empty()) throw DataError(what + ": empty list");
  return out;
}

std::vector<Index> parse_indices(const std::string& text, const std::string& what) {
  std::vector<Index> out;
  for (double v : parse_list(text, what)) {
    if (v < 0 || v != std::floor(v)) throw DataError(what + ": expected non-negative integers");
    out.push_back(static_cast<Index>(v));
  }
  return out;
}

double json_number(const nlohmann::json& v, const std::string& at) {
  if (!v.is_number()) config_error(at, "expected a number");
  return v.get<double>();
}

std::size_t json_count(const nlohmann::json& v, const std::string& at, long long lo) {
  if (!v.is_number_integer() || v.get<long long>() < lo)
    config_error(at, "expected an integer >= " + std::to_string(lo));
  return static_cast<std::size_t>(v.get<long long>());
}

Settings resolve_settings(const Common& c) {
  Settings s;
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw DataError("cannot open config: " + c.config);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(c.config + ": invalid JSON: " + e.what());
    }
    if (!doc.is_object()) config_error("/", "expected a JSON object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      const std::string at = "/" + it.key();
      const auto& v = it.value();
      if (it.key() == "a_grid") {
        if (!v.is_array() || v.empty()) config_error(at, "expected a non-empty array of numbers");
        s.cv.a_grid.clear();
        for (std::size_t k = 0; k < v.size(); ++k)
          s.cv.a_grid.push_back(json_number(v[k], at + "/" + std::to_string(k)));
      } else if (it.key() == "folds") {
        s.cv.folds = json_count(v, at, 2);
      } else if (it.key() == "n_lambdas") {
        s.cv.n_lambdas = json_count(v, at, 1);
      } else if (it.key() == "lambda_ratio") {
        s.cv.lambda_ratio = json_number(v, at);
        if (!(s.cv.lambda_ratio > 0 && s.cv.lambda_ratio <= 1)) config_error(at, "must be in (0, 1]");
      } else if (it.key() == "alpha") {
        s.inference.alpha = json_number(v, at);
      } else if (it.key() == "variance") {
        const std::string mode = v.is_string() ? v.get<std::string>() : "";
        if (mode == "sandwich") s.inference.variance = VarianceMode::sandwich;
        else if (mode == "naive") s.inference.variance = VarianceMode::naive_iid;
        else config_error(at, "expected \"sandwich\" or \"naive\"");
      } else if (it.key() == "denominator") {
        const std::string mode = v.is_string() ? v.get<std::string>() : "";
        if (mode == "covariate") s.inference.denominator = DenominatorForm::covariate;
        else if (mode == "response") s.inference.denominator = DenominatorForm::response;
        else config_error(at, "expected \"covariate\" or \"response\"");
      } else if (it.key() == "cv_metric") {
        const std::string mode = v.is_string() ? v.get<std::string>() : "";
        if (mode == "decorrelated") s.cv.metric = CvMetric::decorrelated;
        else if (mode == "raw") s.cv.metric = CvMetric::raw;
        else config_error(at, "expected \"decorrelated\" or \"raw\"");
        s.metric_set = true;
      } else if (it.key() == "lambda_kappa") {
        s.lambda_kappa = json_number(v, at);
      } else if (it.key() == "lambda_theta") {
        s.lambda_theta = json_number(v, at);
      } else if (it.key() == "nonnegative") {
        if (!v.is_boolean()) config_error(at, "expected true or false");
        s.nonnegative = v.get<bool>();
      } else if (it.key() == "seed") {
        if (!v.is_number_integer() || v.get<long long>() < 0) config_error(at, "expected a non-negative integer");
        s.seed = v.get<std::uint64_t>();
      } else {
        config_error(at, "unknown field");
      }
    }
  }

  if (c.a != "cv") {
    s.cv.a_grid = parse_list(c.a, "--a");
    if (s.cv.a_grid.size() != 1) throw DataError("--a takes one value or \"cv\"; use --a-grid for lists");
  } else if (!c.a_grid.empty()) {
    s.cv.a_grid = parse_list(c.a_grid, "--a-grid");
  }
  for (double a : s.cv.a_grid)
    if (!(a >= 0.0)) throw DataError("a values must be >= 0");
  if (c.alpha) s.inference.alpha = *c.alpha;
  if (!(s.inference.alpha > 0.0 && s.inference.alpha < 1.0)) throw DataError("alpha must be in (0, 1)");
  if (c.seed) s.seed = *c.seed;
  s.cv.seed = s.seed;
  s.cv.threads = resolve_threads(c.threads);
  return s;
}

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw DataError("--out is required");
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory: " + out);
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write file: " + path.string());
  return f;
}

void write_json(const fs::path& path, const json& doc) { open_out(path) << doc.dump(2) << '\n'; }

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void add_common(CLI::App* cmd, Common& c, bool needs_manifest) {
  auto* m = cmd->add_option("--manifest", c.manifest, "Dataset manifest (JSON)");
  if (needs_manifest) m->required();
  cmd->add_option("--config", c.config, "Options file (JSON)");
  cmd->add_option("--out", c.out, "Output directory")->required();
  cmd->add_option("--a", c.a, "Decorrelation constant, or \"cv\"");
  cmd->add_option("--a-grid", c.a_grid, "Comma-separated a values searched by CV");
  cmd->add_option("--alpha", c.alpha, "Significance level");
  cmd->add_option("--seed", c.seed, "Seed for fold assignment and splits");
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

void write_beta(const fs::path& dir, const VectorXd& beta) {
  auto f = open_out(dir / "beta.csv");
  f << "coord,beta\n";
  for (Index j = 0; j < beta.size(); ++j) f << j << ',' << format_double(beta(j)) << '\n';
}

void write_cv_report(const fs::path& dir, const CvReport& report) {
  auto f = open_out(dir / "cv_report.csv");
  f << "a,lambda,cv_mse";
  for (Index k = 0; k < report.per_fold.cols(); ++k) f << ",fold" << k;
  f << '\n';
  for (std::size_t g = 0; g < report.grid.size(); ++g) {
    f << format_double(report.grid[g].a) << ',' << format_double(report.grid[g].lambda) << ','
      << format_double(report.cv_mse[g]);
    for (Index k = 0; k < report.per_fold.cols(); ++k)
      f << ',' << format_double(report.per_fold(static_cast<Index>(g), k));
    f << '\n';
  }
}

json fit_summary(const LmmDataset& data, const TunedFit& tuned) {
  json s;
  s["n"] = data.n();
  s["p"] = data.p();
  s["q"] = data.q();
  s["total_rows"] = data.total_rows();
  s["a"] = tuned.fit.a;
  s["lambda"] = tuned.fit.lambda;
  s["objective"] = tuned.fit.objective;
  s["iterations"] = tuned.fit.iters;
  s["converged"] = tuned.fit.converged;
  s["kkt_residual"] = tuned.fit.kkt_residual;
  s["active_set"] = tuned.fit.active_set;
  return s;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_fit(const Common& c, std::ostream& out) {
  const Settings s = resolve_settings(c);
  const auto dir = prepare_out(c.out);
  const LmmDataset data = load_manifest(c.manifest);
  const TunedFit tuned = tune_and_fit(data, s.cv);
  if (!tuned.fit.converged) throw NumericalError("LASSO did not converge within the iteration limit");
  write_beta(dir, tuned.fit.beta);
  write_cv_report(dir, tuned.report);
  write_json(dir / "summary.json", fit_summary(data, tuned));
  out << "fit: a=" << tuned.fit.a << " lambda=" << tuned.fit.lambda << " active=" << tuned.fit.active_set.size()
      << '\n';
  return kOk;
}

int cmd_infer(const Common& c, const std::string& coords, std::ostream& out) {
  const Settings s = resolve_settings(c);
  const auto dir = prepare_out(c.out);
  const LmmDataset data = load_manifest(c.manifest);
  InferenceConfig ic;
  ic.cv = s.cv;
  ic.inference = s.inference;
  ic.lambda_kappa = s.lambda_kappa;
  const auto wanted = coords.empty() ? std::vector<Index>{} : parse_indices(coords, "--coords");
  const auto result = infer_coordinates(data, ic, wanted);

  write_beta(dir, result.beta.fit.beta);
  write_cv_report(dir, result.beta.report);
  auto f = open_out(dir / "inference.csv");
  f << "coord,beta_hat,beta_db,se,ci_low,ci_high,p_value,p_holm\n";
  json failures = json::array();
  for (const auto& r : result.records) {
    if (!r.ok) {
      failures.push_back({{"coord", r.coord}, {"error", r.error}});
      continue;
    }
    f << r.coord << ',' << format_double(r.beta_hat) << ',' << format_double(r.beta_db) << ','
      << format_double(r.se) << ',' << format_double(r.ci_low) << ',' << format_double(r.ci_high) << ','
      << format_double(r.p_value) << ',' << format_double(r.p_holm) << '\n';
  }
  json summary = fit_summary(data, result.beta);
  summary["alpha"] = s.inference.alpha;
  summary["variance"] = s.inference.variance == VarianceMode::sandwich ? "sandwich" : "naive";
  summary["failures"] = failures;
  write_json(dir / "summary.json", summary);
  out << "infer: " << result.records.size() - failures.size() << " coordinate(s) inferred, "
      << failures.size() << " failed\n";
  return kOk;
}

int cmd_varcomp(const Common& c, std::ostream& out) {
  const Settings s = resolve_settings(c);
  const auto dir = prepare_out(c.out);
  const LmmDataset data = load_manifest(c.manifest);
  VarCompConfig vc;
  vc.beta_cv = s.cv;
  vc.lambda_theta = s.lambda_theta;
  vc.psi_cv.seed = s.seed;
  vc.psi_cv.solver.nonnegative = s.nonnegative;
  vc.seed = s.seed;
  const auto est = run_varcomp_pipeline(data, vc);

  auto f = open_out(dir / "psi.csv");
  f << "index,estimate\n";
  for (Index k = 0; k < est.psi_hat.size(); ++k) f << k << ',' << format_double(est.psi_hat(k)) << '\n';
  json doc;
  doc["psi"] = std::vector<double>(est.psi_hat.data(), est.psi_hat.data() + est.psi_hat.size());
  doc["selected"] = est.selected;
  doc["sigma_e2"] = est.sigma_e2_hat;
  doc["sigma_e2_floored"] = est.sigma_e2_floored;
  doc["lambda_theta"] = est.lambda_theta;
  doc["nonnegative"] = s.nonnegative;
  doc["split_sizes"] = est.split.sizes();
  doc["beta_a"] = est.beta_a;
  doc["beta_lambda"] = est.beta_lambda;
  write_json(dir / "varcomp.json", doc);
  out << "varcomp: " << est.selected.size() << " nonzero component(s), sigma_e2=" << est.sigma_e2_hat << '\n';
  return kOk;
}

int cmd_graph(const Common& c, std::size_t downsample, bool heterogeneity, bool no_center,
              std::ostream& out) {
  const Settings s = resolve_settings(c);
  const auto dir = prepare_out(c.out);
  auto series = load_series_manifest(c.manifest);
  if (downsample < 1) throw DataError("--downsample must be >= 1");
  for (auto& y : series) y = downsample_series(y, downsample);

  GraphConfig gc;
  gc.inference.cv = s.cv;
  gc.inference.cv.threads = 1;
  gc.inference.inference = s.inference;
  gc.inference.lambda_kappa = s.lambda_kappa;
  gc.with_heterogeneity = heterogeneity;
  gc.varcomp.beta_cv = gc.inference.cv;
  gc.varcomp.lambda_theta = s.lambda_theta;
  gc.varcomp.psi_cv.seed = s.seed;
  gc.varcomp.psi_cv.solver.nonnegative = s.nonnegative;
  gc.varcomp.seed = s.seed;
  gc.center = !no_center;
  gc.threads = s.cv.threads;
  const auto g = fit_graph(series, gc);

  auto f = open_out(dir / "edges.csv");
  f << "node_a,node_b,strength,se,p_value,p_holm,significant";
  if (heterogeneity) f << ",heterogeneity";
  f << '\n';
  std::size_t tested = 0;
  for (Index j = 0; j < g.p; ++j)
    for (Index k = j + 1; k < g.p; ++k) {
      if (std::isnan(g.p_holm(j, k))) continue;
      ++tested;
      f << j << ',' << k << ',' << format_double(g.strength(j, k)) << ','
        << format_double(std::sqrt(g.variance(j, k))) << ',' << format_double(g.p_value(j, k)) << ','
        << format_double(g.p_holm(j, k)) << ',' << (g.adjacency(j, k) ? 1 : 0);
      if (heterogeneity) f << ',' << format_double(std::isnan(g.heterogeneity(j, k)) ? 0.0 : g.heterogeneity(j, k));
      f << '\n';
    }
  auto a = open_out(dir / "adjacency.csv");
  for (Index j = 0; j < g.p; ++j) {
    for (Index k = 0; k < g.p; ++k) a << (k ? "," : "") << (g.adjacency(j, k) ? 1 : 0);
    a << '\n';
  }
  const std::size_t pairs = static_cast<std::size_t>(g.p * (g.p - 1) / 2);
  json summary;
  summary["nodes"] = g.p;
  summary["subjects"] = series.size();
  summary["alpha"] = g.alpha;
  summary["edges_tested"] = tested;
  summary["edges_significant"] = g.edge_count();
  summary["density"] = pairs ? static_cast<double>(g.edge_count()) / static_cast<double>(pairs) : 0.0;
  summary["downsample"] = downsample;
  summary["centered"] = gc.center;
  summary["failures"] = g.failures;
  write_json(dir / "summary.json", summary);
  out << "graph: " << g.edge_count() << " significant edge(s) of " << tested << " tested\n";
  return kOk;
}

int cmd_mevar(const Common& c, const std::string& rows, const std::string& coords, bool demean,
              std::ostream& out) {
  const Settings s = resolve_settings(c);
  const auto dir = prepare_out(c.out);
  const auto series = load_series_manifest(c.manifest);
  MevarConfig mc;
  mc.inference.cv = s.cv;
  if (!s.metric_set) mc.inference.cv.metric = CvMetric::raw;
  mc.inference.cv.threads = 1;
  mc.inference.inference = s.inference;
  mc.inference.lambda_kappa = s.lambda_kappa;
  if (!rows.empty()) mc.rows = parse_indices(rows, "--rows");
  if (!coords.empty()) mc.coords = parse_indices(coords, "--coords");
  mc.demean = demean;
  mc.threads = s.cv.threads;
  const auto fit = fit_mevar(series, mc);
  const Index p = fit.phi_lasso.rows();

  auto f = open_out(dir / "phi.csv");
  f << "row";
  for (Index k = 0; k < p; ++k) f << ",c" << k;
  f << '\n';
  for (Index r = 0; r < p; ++r) {
    if (!fit.phi_lasso.row(r).allFinite()) continue;
    f << r;
    for (Index k = 0; k < p; ++k) f << ',' << format_double(fit.phi_lasso(r, k));
    f << '\n';
  }
  auto g = open_out(dir / "phi_inference.csv");
  g << "row,col,beta_hat,beta_db,se,ci_low,ci_high,p_value,p_holm\n";
  json failures = fit.failures;
  for (Index r = 0; r < p; ++r)
    for (const auto& rec : fit.records[static_cast<std::size_t>(r)]) {
      if (!rec.ok) {
        failures.push_back("row " + std::to_string(r) + ", col " + std::to_string(rec.coord) + ": " + rec.error);
        continue;
      }
      g << r << ',' << rec.coord << ',' << format_double(rec.beta_hat) << ',' << format_double(rec.beta_db) << ','
        << format_double(rec.se) << ',' << format_double(rec.ci_low) << ',' << format_double(rec.ci_high) << ','
        << format_double(rec.p_value) << ',' << format_double(rec.p_holm) << '\n';
    }
  json summary;
  summary["nodes"] = p;
  summary["subjects"] = series.size();
  summary["spectral_norm"] = number_or_null(fit.spectral_norm);
  summary["constant_columns"] = constant_columns(series);
  summary["failures"] = failures;
  write_json(dir / "summary.json", summary);
  out << "mevar: spectral norm " << fit.spectral_norm << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

void write_metric_table(const fs::path& path, const sim::SimReport& report, const std::string& metric,
                        int null_filter) {
  auto f = open_out(path);
  f << "coord,truth";
  for (const auto& m : report.config.methods) f << ',' << m.name;
  f << '\n';
  for (Index c : report.config.coords) {
    const auto& first = report.find(report.config.methods.front().name, c);
    if (null_filter == 1 && !first.null) continue;
    if (null_filter == 0 && first.null) continue;
    f << c << ',' << format_double(first.truth);
    for (const auto& m : report.config.methods) {
      const auto& s = report.find(m.name, c);
      double v = 0.0;
      if (metric == "rejection") v = s.rejection_rate;
      else if (metric == "coverage") v = s.coverage;
      else if (metric == "rmse") v = s.rmse;
      else if (metric == "failed") v = static_cast<double>(s.failed);
      f << ',' << format_double(v);
    }
    f << '\n';
  }
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, std::optional<std::uint64_t> seed,
                 std::size_t threads, std::ostream& out) {
  if (config_path.empty()) throw DataError("--config is required");
  auto config = sim::load_sim_config(config_path);
  if (seed) config.seed = *seed;
  if (threads > 0) config.threads = threads;
  const auto dir = prepare_out(out_dir);
  const auto report = sim::run_monte_carlo(config);

  auto long_csv = open_out(dir / "long.csv");
  long_csv << "method,metric,coordinate,value\n";
  json summary;
  summary["reps"] = config.reps;
  summary["seed"] = config.seed;
  summary["n"] = config.n;
  summary["m"] = config.m;
  summary["p"] = config.p;
  json methods = json::array();
  if (!config.varcomp_only) {
    write_metric_table(dir / "type_I.csv", report, "rejection", 1);
    write_metric_table(dir / "power.csv", report, "rejection", 0);
    write_metric_table(dir / "coverage.csv", report, "coverage", -1);
    write_metric_table(dir / "rmse.csv", report, "rmse", -1);
    write_metric_table(dir / "failures.csv", report, "failed", -1);
    for (const auto& s : report.coords) {
      const std::string rate = s.null ? "type_I" : "power";
      long_csv << s.method << ',' << rate << ',' << s.coord << ',' << format_double(s.rejection_rate) << '\n';
      long_csv << s.method << ",coverage," << s.coord << ',' << format_double(s.coverage) << '\n';
      long_csv << s.method << ",rmse," << s.coord << ',' << format_double(s.rmse) << '\n';
      long_csv << s.method << ",failed," << s.coord << ',' << s.failed << '\n';
      if (!std::isnan(s.median_v_ratio))
        long_csv << s.method << ",median_v_ratio," << s.coord << ',' << format_double(s.median_v_ratio) << '\n';
      methods.push_back({{"method", s.method},
                         {"coord", s.coord},
                         {"truth", s.truth},
                         {rate, number_or_null(s.rejection_rate)},
                         {"coverage", number_or_null(s.coverage)},
                         {"rmse", number_or_null(s.rmse)},
                         {"evaluated", s.evaluated},
                         {"failed", s.failed}});
    }
    auto reps = open_out(dir / "replicates.csv");
    reps << "rep,method,coord,ok,beta_hat,beta_db,se,ci_low,ci_high,p_value,a,v_ratio,error\n";
    for (const auto& r : report.records) {
      std::string why = r.error;
      std::replace(why.begin(), why.end(), ',', ';');
      reps << r.rep << ',' << r.method << ',' << r.coord << ',' << (r.ok ? 1 : 0) << ',' << format_double(r.beta_hat)
           << ',' << format_double(r.beta_db) << ',' << format_double(r.se) << ',' << format_double(r.ci_low) << ','
           << format_double(r.ci_high) << ',' << format_double(r.p_value) << ',' << format_double(r.a) << ','
           << format_double(r.v_ratio) << ',' << why << '\n';
    }
  }
  summary["coordinates"] = methods;
  if (report.varcomp) {
    const auto& v = *report.varcomp;
    auto f = open_out(dir / "varcomp.csv");
    f << "psi_rmse,median_psi_error,sigma_e2_rmse,mean_mcc,evaluated,failed\n";
    f << format_double(v.psi_rmse) << ',' << format_double(v.median_psi_error) << ','
      << format_double(v.sigma_e2_rmse) << ',' << format_double(v.mean_mcc) << ',' << v.evaluated << ','
      << v.failed << '\n';
    for (const auto& [metric, value] :
         {std::pair{"psi_rmse", v.psi_rmse}, std::pair{"median_psi_error", v.median_psi_error},
          std::pair{"sigma_e2_rmse", v.sigma_e2_rmse}, std::pair{"mean_mcc", v.mean_mcc}})
      long_csv << "varcomp," << metric << ",all," << format_double(value) << '\n';
    summary["varcomp"] = {{"psi_rmse", number_or_null(v.psi_rmse)},
                          {"median_psi_error", number_or_null(v.median_psi_error)},
                          {"sigma_e2_rmse", number_or_null(v.sigma_e2_rmse)},
                          {"mean_mcc", number_or_null(v.mean_mcc)},
                          {"evaluated", v.evaluated},
                          {"failed", v.failed}};
  }
  if (report.mevar) {
    summary["mevar"] = {{"row", report.mevar->row},
                        {"coverage_coord", report.mevar->coverage_coord},
                        {"null_coord", report.mevar->null_coord},
                        {"structure_attempts", report.mevar->attempts}};
  }
  write_json(dir / "summary.json", summary);
  out << "simulate: " << config.reps << " replicate(s) written to " << dir.string() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Estimation and inference for high-dimensional linear mixed models", "hetlmm"};
  app.require_subcommand(1);
  int verbose = 0;
  std::size_t threads = 0;
  app.add_flag("-v,--verbose", verbose, "Log progress (repeat for debug output)");
  app.add_option("--threads", threads, "Worker threads (default: HETLMM_THREADS or all cores)");

  Common fit_c, infer_c, vc_c, graph_c, mevar_c;
  auto* fit = app.add_subcommand("fit", "Cross-validated decorrelated LASSO fit");
  add_common(fit, fit_c, true);

  auto* infer = app.add_subcommand("infer", "De-biased inference for fixed effects");
  add_common(infer, infer_c, true);
  std::string infer_coords;
  infer->add_option("--coords", infer_coords, "Comma-separated coordinates (default: all)");

  auto* varcomp = app.add_subcommand("varcomp", "Variance components by sample splitting");
  add_common(varcomp, vc_c, true);

  auto* graph = app.add_subcommand("graph", "Heterogeneous graphical model over node series");
  add_common(graph, graph_c, true);
  std::size_t downsample = 1;
  bool heterogeneity = false, no_center = false;
  graph->add_option("--downsample", downsample, "Keep every k-th time point");
  graph->add_flag("--heterogeneity", heterogeneity, "Estimate per-edge random-effect variances");
  graph->add_flag("--no-center", no_center, "Skip per-subject column centering");

  auto* mevar = app.add_subcommand("mevar", "Mixed-effect VAR(1) transition inference");
  add_common(mevar, mevar_c, true);
  std::string mevar_rows, mevar_coords;
  bool demean = false;
  mevar->add_option("--rows", mevar_rows, "Rows of the transition matrix (default: all)");
  mevar->add_option("--coords", mevar_coords, "Columns to infer (default: all)");
  mevar->add_flag("--demean", demean, "Subtract each series' column means");

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study from a JSON configuration");
  std::string sim_config, sim_out;
  std::optional<std::uint64_t> sim_seed;
  simulate->add_option("--config", sim_config, "Simulation configuration (JSON)")->required();
  simulate->add_option("--out", sim_out, "Output directory")->required();
  simulate->add_option("--seed", sim_seed, "Override the configured seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  if (verbose >= 2) log::set_level(log::Level::debug);
  else if (verbose == 1) log::set_level(log::Level::info);

  try {
    for (Common* c : {&fit_c, &infer_c, &vc_c, &graph_c, &mevar_c}) c->threads = threads;
    if (fit->parsed()) return cmd_fit(fit_c, out);
    if (infer->parsed()) return cmd_infer(infer_c, infer_coords, out);
    if (varcomp->parsed()) return cmd_varcomp(vc_c, out);
    if (graph->parsed()) return cmd_graph(graph_c, downsample, heterogeneity, no_center, out);
    if (mevar->parsed()) return cmd_mevar(mevar_c, mevar_rows, mevar_coords, demean, out);
    if (simulate->parsed()) return cmd_simulate(sim_config, sim_out, sim_seed, threads, out);
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumericalError;
  }
  return kInputError;
}

}  // namespace hetlmm::cli
