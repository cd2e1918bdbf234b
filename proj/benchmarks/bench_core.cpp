#include <benchmark/benchmark.h>

#include "hetlmm/inference.hpp"
#include "hetlmm/lasso.hpp"
#include "hetlmm/proxy.hpp"
#include "hetlmm/rng.hpp"

using namespace hetlmm;

static void BM_FactorProxy(benchmark::State& state) {
  rng::CounterRng g(1, {1});
  const Eigen::MatrixXd Z = g.normal_matrix(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(factor_proxy(Z, 1.0));
}
BENCHMARK(BM_FactorProxy)->Args({30, 20})->Args({70, 200})->Args({200, 50});

static void BM_ApplyInvSqrt(benchmark::State& state) {
  rng::CounterRng g(2, {1});
  const Eigen::MatrixXd Z = g.normal_matrix(state.range(0), state.range(1));
  const auto f = factor_proxy(Z, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(apply_inv_sqrt(f, Z));
}
BENCHMARK(BM_ApplyInvSqrt)->Args({30, 20})->Args({70, 200});

namespace {

LmmDataset bench_data(std::size_t n, Eigen::Index m, Eigen::Index p) {
  rng::CounterRng g(3, {1});
  std::vector<Eigen::VectorXd> ys;
  std::vector<Eigen::MatrixXd> Xs;
  for (std::size_t i = 0; i < n; ++i) {
    Xs.push_back(g.normal_matrix(m, p));
    ys.push_back(Xs.back().col(0) + g.normal_vector(m));
  }
  ColumnMap map(static_cast<std::size_t>(p));
  for (Eigen::Index k = 0; k < p; ++k) map[static_cast<std::size_t>(k)] = k;
  return LmmDataset::from_arrays(ys, Xs, map);
}

}  // namespace

static void BM_LassoPath(benchmark::State& state) {
  const auto data = bench_data(50, 30, state.range(0));
  const auto problem = build_problem(data, 1.0);
  const auto lambdas = lambda_grid(lambda_max(problem), 50, 1e-3);
  for (auto _ : state) benchmark::DoNotOptimize(solve_path(problem, lambdas));
}
BENCHMARK(BM_LassoPath)->Arg(20)->Arg(200);

static void BM_CrossValidate(benchmark::State& state) {
  const auto data = bench_data(50, 30, 20);
  CvOptions options;
  for (auto _ : state) benchmark::DoNotOptimize(cross_validate(data, options));
}
BENCHMARK(BM_CrossValidate)->Unit(benchmark::kMillisecond);

static void BM_InferOneCoordinate(benchmark::State& state) {
  const auto data = bench_data(50, 30, 20);
  InferenceConfig config;
  const auto tuned = tune_and_fit(data, config.cv);
  for (auto _ : state) benchmark::DoNotOptimize(infer_one(data, tuned, 0, config));
}
BENCHMARK(BM_InferOneCoordinate)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
