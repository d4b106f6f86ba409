#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "finbench/backtest.hpp"
#include "finbench/characteristics.hpp"
#include "finbench/metrics.hpp"
#include "finbench/predictors.hpp"
#include "finbench/synth.hpp"

using namespace finbench;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> v(n);
  for (double& x : v) x = z(rng);
  return v;
}

ScorePanel random_scores(std::size_t n, std::size_t t_days, std::uint64_t seed) {
  const auto v = normals(n * t_days, seed);
  ScorePanel s(n, t_days);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < t_days; ++t) s.set(i, t, v[i * t_days + t]);
  }
  return s;
}

void BM_CompositeLoss(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto y = normals(n, 1), r = normals(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(composite_loss(y, r, 5.0));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CompositeLoss)->RangeMultiplier(4)->Range(64, 4096)->Complexity(benchmark::oNSquared);

void BM_CompositeLossGradient(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto y = normals(n, 3), r = normals(n, 4);
  for (auto _ : state) benchmark::DoNotOptimize(composite_loss_gradient(y, r, 5.0));
}
BENCHMARK(BM_CompositeLossGradient)->RangeMultiplier(4)->Range(64, 4096);

void BM_Backtest(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto data = generate_pattern_panel(n / 4, 5, 250);
  const auto scores = random_scores(data.panel.n_stocks(), 250, 6);
  BacktestConfig cfg;
  cfg.strategy = state.range(1) ? Strategy::TopK : Strategy::TopKDrop;
  cfg.m = n / 10;
  cfg.n = std::max<std::size_t>(1, cfg.m / 6);
  for (auto _ : state) benchmark::DoNotOptimize(run_backtest(scores, data.panel, cfg, {175, 250}).equity());
}
BENCHMARK(BM_Backtest)->ArgsProduct({{400, 1600}, {0, 1}});

void BM_Adf(benchmark::State& state) {
  auto walk = normals(static_cast<std::size_t>(state.range(0)), 7);
  for (std::size_t t = 1; t < walk.size(); ++t) walk[t] += walk[t - 1];
  for (auto _ : state) benchmark::DoNotOptimize(adf_statistic(walk).statistic);
}
BENCHMARK(BM_Adf)->Arg(250)->Arg(1000)->Arg(4000);

void BM_Forecastability(benchmark::State& state) {
  const auto x = normals(static_cast<std::size_t>(state.range(0)), 8);
  for (auto _ : state) benchmark::DoNotOptimize(forecastability(x));
}
BENCHMARK(BM_Forecastability)->Arg(249)->Arg(1024)->Arg(4096);

void BM_DailyRankIc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto data = generate_pattern_panel(n / 4, 9, 250);
  const auto returns = compute_returns(data.panel);
  const auto scores = random_scores(data.panel.n_stocks(), 250, 10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(daily_ic_series(scores, returns, CorrelationKind::Spearman, {0, 250}).values.data());
  }
}
BENCHMARK(BM_DailyRankIc)->Arg(400)->Arg(1600);

}  // namespace

BENCHMARK_MAIN();
