#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "hetlmm/errors.hpp"
#include "hetlmm/sim.hpp"

namespace hetlmm::sim {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& pointer, const std::string& what) {
  throw DataError("config " + (pointer.empty() ? std::string("/") : pointer) + ": " + what);
}

std::size_t get_count(const json& doc, const std::string& key, const std::string& at, std::size_t lo) {
  const auto& v = doc.at(key);
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(lo))
    fail(at + "/" + key, "expected an integer >= " + std::to_string(lo));
  return static_cast<std::size_t>(v.get<long long>());
}

double get_number(const json& v, const std::string& at) {
  if (!v.is_number()) fail(at, "expected a number");
  return v.get<double>();
}

VectorXd get_vector(const json& v, const std::string& at) {
  if (!v.is_array()) fail(at, "expected an array of numbers");
  VectorXd out(static_cast<Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k)
    out(static_cast<Index>(k)) = get_number(v[k], at + "/" + std::to_string(k));
  return out;
}

MethodSpec parse_method(const json& v, const std::string& at) {
  if (v.is_string()) {
    const auto name = v.get<std::string>();
    if (name == "proposed") return MethodSpec::proposed();
    if (name == "dblasso" || name == "baseline") return MethodSpec::baseline();
    fail(at, "unknown method '" + name + "'");
  }
  if (!v.is_object()) fail(at, "expected a method name or object");
  MethodSpec m = MethodSpec::proposed();
  if (!v.contains("name") || !v["name"].is_string()) fail(at + "/name", "expected a string");
  m.name = v["name"].get<std::string>();
  if (v.contains("a_grid")) {
    const auto grid = get_vector(v["a_grid"], at + "/a_grid");
    if (grid.size() == 0) fail(at + "/a_grid", "must not be empty");
    m.a_grid.assign(grid.data(), grid.data() + grid.size());
  } else if (v.contains("a")) {
    if (v["a"].is_string() && v["a"].get<std::string>() == "cv") {
      m.a_grid = MethodSpec::proposed().a_grid;
    } else {
      m.a_grid = {get_number(v["a"], at + "/a")};
    }
  }
  for (std::size_t k = 0; k < m.a_grid.size(); ++k)
    if (!(m.a_grid[k] >= 0.0)) fail(at + "/a_grid/" + std::to_string(k), "must be >= 0");
  if (v.contains("variance")) {
    const auto& var = v["variance"];
    if (!var.is_string()) fail(at + "/variance", "expected \"sandwich\" or \"naive\"");
    const auto s = var.get<std::string>();
    if (s == "sandwich") m.variance = VarianceMode::sandwich;
    else if (s == "naive") m.variance = VarianceMode::naive_iid;
    else fail(at + "/variance", "expected \"sandwich\" or \"naive\"");
  }
  return m;
}

}  // namespace

SimConfig parse_sim_config(const json& doc) {
  if (!doc.is_object()) fail("", "expected a JSON object");
  SimConfig c;
  static const char* known[] = {"model", "n", "m", "p", "T", "reps", "seed", "alpha", "beta_star",
                                "psi_star", "sigma_e2_star", "methods", "coords", "varcomp",
                                "varcomp_only", "oracle_variance", "cv_metric", "folds", "n_lambdas", "threads",
                                "mevar"};
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) fail("/" + it.key(), "unknown field");
  }

  if (doc.contains("model")) {
    const auto& v = doc["model"];
    const std::string s = v.is_string() ? v.get<std::string>() : "";
    if (s == "lmm_section5") c.model = Model::lmm_section5;
    else if (s == "toy_table1") c.model = Model::toy_table1;
    else if (s == "mevar_appendixE") c.model = Model::mevar_appendixE;
    else if (s == "custom") c.model = Model::custom;
    else fail("/model", "expected one of lmm_section5, toy_table1, mevar_appendixE, custom");
  }
  if (c.model == Model::toy_table1) {
    c.n = 20;
    c.m = 10;
    c.p = 7;
  } else if (c.model == Model::mevar_appendixE) {
    c.n = 40;
    c.p = 30;
    c.T = 50;
    c.cv_metric = CvMetric::raw;
  }
  if (doc.contains("cv_metric")) {
    const auto& v = doc["cv_metric"];
    const std::string s = v.is_string() ? v.get<std::string>() : "";
    if (s == "decorrelated") c.cv_metric = CvMetric::decorrelated;
    else if (s == "raw") c.cv_metric = CvMetric::raw;
    else fail("/cv_metric", "expected \"decorrelated\" or \"raw\"");
  }

  if (doc.contains("n")) c.n = get_count(doc, "n", "", 1);
  if (doc.contains("m")) c.m = get_count(doc, "m", "", 1);
  if (doc.contains("p")) c.p = get_count(doc, "p", "", 1);
  if (doc.contains("T")) c.T = get_count(doc, "T", "", 3);
  if (doc.contains("reps")) c.reps = get_count(doc, "reps", "", 1);
  if (doc.contains("folds")) c.folds = get_count(doc, "folds", "", 2);
  if (doc.contains("n_lambdas")) c.n_lambdas = get_count(doc, "n_lambdas", "", 1);
  if (doc.contains("threads")) c.threads = get_count(doc, "threads", "", 0);
  if (doc.contains("seed")) {
    const auto& v = doc["seed"];
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      fail("/seed", "expected a non-negative integer");
    c.seed = v.get<std::uint64_t>();
  }
  if (doc.contains("alpha")) {
    c.alpha = get_number(doc["alpha"], "/alpha");
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) fail("/alpha", "must be in (0, 1)");
  }
  if (doc.contains("beta_star")) c.beta_star = get_vector(doc["beta_star"], "/beta_star");
  if (doc.contains("psi_star")) {
    c.psi_star = get_vector(doc["psi_star"], "/psi_star");
    for (Index k = 0; k < c.psi_star.size(); ++k)
      if (c.psi_star(k) < 0.0) fail("/psi_star/" + std::to_string(k), "must be >= 0");
  }
  if (doc.contains("sigma_e2_star")) {
    const double s = get_number(doc["sigma_e2_star"], "/sigma_e2_star");
    if (s < 0.0) fail("/sigma_e2_star", "must be >= 0");
    c.sigma_e2_star = s;
  }
  if (doc.contains("methods")) {
    const auto& v = doc["methods"];
    if (!v.is_array() || v.empty()) fail("/methods", "expected a non-empty array");
    c.methods.clear();
    for (std::size_t k = 0; k < v.size(); ++k)
      c.methods.push_back(parse_method(v[k], "/methods/" + std::to_string(k)));
  }
  if (doc.contains("coords")) {
    const auto& v = doc["coords"];
    if (!v.is_array()) fail("/coords", "expected an array of indices");
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!v[k].is_number_integer() || v[k].get<long long>() < 0)
        fail("/coords/" + std::to_string(k), "expected a non-negative integer");
      c.coords.push_back(v[k].get<Index>());
    }
  }
  for (const char* flag : {"varcomp", "varcomp_only", "oracle_variance"}) {
    if (!doc.contains(flag)) continue;
    if (!doc[flag].is_boolean()) fail(std::string("/") + flag, "expected true or false");
    const bool b = doc[flag].get<bool>();
    if (std::string(flag) == "varcomp") c.varcomp = b;
    else if (std::string(flag) == "varcomp_only") c.varcomp_only = b;
    else c.oracle_variance = b;
  }
  if (doc.contains("mevar")) {
    const auto& v = doc["mevar"];
    if (!v.is_object()) fail("/mevar", "expected an object");
    auto& s = c.mevar;
    for (auto it = v.begin(); it != v.end(); ++it) {
      const std::string at = "/mevar/" + it.key();
      if (it.key() == "scale") s.scale = get_number(*it, at);
      else if (it.key() == "margin") s.margin = get_number(*it, at);
      else if (it.key() == "sigma_eps2") s.sigma_eps2 = get_number(*it, at);
      else if (it.key() == "burn_in") s.burn_in = get_count(v, it.key(), "/mevar", 0);
      else if (it.key() == "row") s.row = static_cast<Index>(get_count(v, it.key(), "/mevar", 0));
      else fail(at, "unknown field");
    }
    if (!(s.scale > 0.0)) fail("/mevar/scale", "must be > 0");
    if (!(s.margin > 0.0 && s.margin < 0.5)) fail("/mevar/margin", "must be in (0, 0.5)");
    if (!(s.sigma_eps2 > 0.0)) fail("/mevar/sigma_eps2", "must be > 0");
  }

  const Index p = c.model == Model::toy_table1 ? 6 : static_cast<Index>(c.p);
  if (c.beta_star.size() > 0 && c.beta_star.size() != p) fail("/beta_star", "length must equal p");
  if (c.psi_star.size() > 0 && c.psi_star.size() != p) fail("/psi_star", "length must equal p");
  if (c.model == Model::custom && (c.beta_star.size() == 0 || c.psi_star.size() == 0))
    fail(c.beta_star.size() == 0 ? "/beta_star" : "/psi_star", "required for the custom model");
  if (c.model == Model::lmm_section5 && c.p < 20 && (c.beta_star.size() == 0 || c.psi_star.size() == 0))
    fail("/p", "the default truth needs p >= 20; supply beta_star and psi_star otherwise");
  if ((c.model == Model::lmm_section5 || c.model == Model::custom) && c.p < 2) fail("/p", "must be >= 2");
  for (std::size_t k = 0; k < c.coords.size(); ++k)
    if (c.coords[k] >= p) fail("/coords/" + std::to_string(k), "out of range");
  if (c.model == Model::mevar_appendixE && c.mevar.row >= static_cast<Index>(c.p))
    fail("/mevar/row", "out of range");
  return c;
}

SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path + ": invalid JSON: " + e.what());
  }
  return parse_sim_config(doc);
}

}  // namespace hetlmm::sim
