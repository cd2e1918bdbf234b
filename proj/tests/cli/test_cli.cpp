#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "hetlmm/csv.hpp"
#include "hetlmm/dataset.hpp"
#include "../unit/test_util.hpp"

namespace fs = std::filesystem;
using namespace hetlmm;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "hetlmm");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "hetlmm_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(5);
    beta(0) = 1.0;
    Eigen::VectorXd psi = Eigen::VectorXd::Zero(5);
    psi(1) = 1.0;
    write_dataset(fixtures::random_lmm(3, 24, 8, 5, beta, psi), root_ / "data");
    std::ofstream(root_ / "config.json") << R"({"folds": 3, "n_lambdas": 8, "a_grid": [0.01, 1]})";
    std::ofstream(root_ / "bad_config.json") << R"({"folds": 3, "wrong": 1})";
    std::ofstream(root_ / "sim.json")
        << R"({"model": "custom", "n": 10, "m": 5, "p": 3, "reps": 2, "folds": 3, "n_lambdas": 6,
              "beta_star": [1, 0, 0], "psi_star": [0.5, 0, 0]})";
  }

  static std::string manifest() { return (root_ / "data" / "manifest.json").string(); }
  static std::string config() { return (root_ / "config.json").string(); }
  static std::string out(const std::string& name) { return (root_ / name).string(); }

  static fs::path root_;
};

fs::path CliTest::root_;

}  // namespace

TEST_F(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"infer", "--help"}).code, 0);
  EXPECT_EQ(run({}).code, cli::kInputError);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kInputError);
  EXPECT_EQ(run({"fit", "--manifest", manifest()}).code, cli::kInputError);
  EXPECT_EQ(run({"fit", "--manifest", manifest(), "--out", out("x"), "--alpha", "abc"}).code,
            cli::kInputError);
}

TEST_F(CliTest, InputErrorsExitWithTwo) {
  auto r = run({"fit", "--manifest", out("missing.json"), "--out", out("x")});
  EXPECT_EQ(r.code, cli::kInputError);
  EXPECT_FALSE(r.err.empty());
  r = run({"fit", "--manifest", manifest(), "--config", out("bad_config.json"), "--out", out("x")});
  EXPECT_EQ(r.code, cli::kInputError);
  EXPECT_NE(r.err.find("/wrong"), std::string::npos);
  r = run({"infer", "--manifest", manifest(), "--config", config(), "--out", out("x"), "--coords",
           "9"});
  EXPECT_EQ(r.code, cli::kInputError);
}

TEST_F(CliTest, FitWritesOutputsAndIsIdempotent) {
  ASSERT_EQ(run({"fit", "--manifest", manifest(), "--config", config(), "--out", out("fit1")}).code, 0);
  ASSERT_EQ(run({"fit", "--manifest", manifest(), "--config", config(), "--out", out("fit1")}).code, 0);
  ASSERT_EQ(run({"--threads", "3", "fit", "--manifest", manifest(), "--config", config(), "--out",
                 out("fit2")})
                .code,
            0);
  for (const char* f : {"beta.csv", "cv_report.csv", "summary.json"})
    EXPECT_TRUE(fs::exists(root_ / "fit1" / f)) << f;
  EXPECT_EQ(slurp(root_ / "fit1" / "beta.csv"), slurp(root_ / "fit2" / "beta.csv"));
  EXPECT_EQ(slurp(root_ / "fit1" / "cv_report.csv"), slurp(root_ / "fit2" / "cv_report.csv"));
  const auto beta = csv::read_table(root_ / "fit1" / "beta.csv");
  EXPECT_EQ(beta.header, (std::vector<std::string>{"coord", "beta"}));
  EXPECT_EQ(beta.rows.size(), 5u);
}

TEST_F(CliTest, FixedAEqualsSingletonGrid) {
  ASSERT_EQ(run({"infer", "--manifest", manifest(), "--config", config(), "--a", "0", "--out",
                 out("a0")})
                .code,
            0);
  ASSERT_EQ(run({"infer", "--manifest", manifest(), "--config", config(), "--a-grid", "0", "--out",
                 out("grid0")})
                .code,
            0);
  EXPECT_EQ(slurp(root_ / "a0" / "inference.csv"), slurp(root_ / "grid0" / "inference.csv"));
}

TEST_F(CliTest, SmallerAlphaWidensIntervals) {
  ASSERT_EQ(run({"infer", "--manifest", manifest(), "--config", config(), "--alpha", "0.1",
                 "--coords", "0,1", "--out", out("wide")})
                .code,
            0);
  ASSERT_EQ(run({"infer", "--manifest", manifest(), "--config", config(), "--alpha", "0.01",
                 "--coords", "0,1", "--out", out("narrow")})
                .code,
            0);
  const auto a = csv::read_table(root_ / "wide" / "inference.csv");
  const auto b = csv::read_table(root_ / "narrow" / "inference.csv");
  ASSERT_EQ(a.rows.size(), 2u);
  ASSERT_EQ(b.rows.size(), 2u);
  const int lo = a.column("ci_low"), hi = a.column("ci_high"), est = a.column("beta_db");
  ASSERT_GE(lo, 0);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(a.rows[k][static_cast<std::size_t>(est)], b.rows[k][static_cast<std::size_t>(est)]);
    const double wa = std::stod(a.rows[k][static_cast<std::size_t>(hi)]) -
                      std::stod(a.rows[k][static_cast<std::size_t>(lo)]);
    const double wb = std::stod(b.rows[k][static_cast<std::size_t>(hi)]) -
                      std::stod(b.rows[k][static_cast<std::size_t>(lo)]);
    EXPECT_LT(wa, wb);
  }
}

TEST_F(CliTest, VarcompWritesEstimates) {
  ASSERT_EQ(run({"varcomp", "--manifest", manifest(), "--config", config(), "--out", out("vc")}).code,
            0);
  const auto psi = csv::read_numeric(root_ / "vc" / "psi.csv");
  EXPECT_EQ(psi.values.rows(), 5);
  EXPECT_GE(psi.values.col(1).minCoeff(), 0.0);
  const auto doc = nlohmann::json::parse(slurp(root_ / "vc" / "varcomp.json"));
  EXPECT_TRUE(doc.contains("sigma_e2"));
}

TEST_F(CliTest, SimulateIsThreadInvariant) {
  const std::string sim = (root_ / "sim.json").string();
  ASSERT_EQ(run({"--threads", "1", "simulate", "--config", sim, "--out", out("sim1")}).code, 0);
  ASSERT_EQ(run({"--threads", "2", "simulate", "--config", sim, "--out", out("sim2")}).code, 0);
  for (const char* f : {"type_I.csv", "power.csv", "coverage.csv", "rmse.csv", "long.csv"})
    EXPECT_EQ(slurp(root_ / "sim1" / f), slurp(root_ / "sim2" / f)) << f;
}
