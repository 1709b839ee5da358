#include <benchmark/benchmark.h>

#include <random>

#include "esp/esp_objective.hpp"
#include "esp/estimation.hpp"
#include "esp/inference.hpp"
#include "esp/simulation.hpp"

namespace {

esp::Dataset hh_sample(int T) { return esp::simulate_hh_sample(7, T, 0.4); }

void BM_SolveTilt(benchmark::State& state) {
  const esp::MomentModel hh = esp::builtin_hall_horowitz();
  const esp::Dataset data = hh_sample(static_cast<int>(state.range(0)));
  const Eigen::MatrixXd psi =
      esp::psi_matrix(hh, esp::bind_columns(hh, data), Eigen::Vector2d(3.3, -0.5));
  for (auto _ : state) {
    auto sol = esp::solve_tilt_psi(psi);
    benchmark::DoNotOptimize(sol.tau);
  }
}
BENCHMARK(BM_SolveTilt)->Arg(25)->Arg(100)->Arg(400);

void BM_Evaluate(benchmark::State& state) {
  const esp::MomentModel hh = esp::builtin_hall_horowitz();
  const esp::Dataset data = hh_sample(static_cast<int>(state.range(0)));
  const Eigen::Vector2d theta(3.1, -0.6);
  for (auto _ : state) {
    auto ev = esp::evaluate(hh, data, theta);
    benchmark::DoNotOptimize(ev.log_esp_objective);
  }
}
BENCHMARK(BM_Evaluate)->Arg(25)->Arg(100)->Arg(400);

void BM_GradientObjective(benchmark::State& state) {
  const esp::MomentModel hh = esp::builtin_hall_horowitz();
  const esp::Dataset data = hh_sample(200);
  const Eigen::Vector2d theta(3.1, -0.6);
  for (auto _ : state) {
    auto grad = esp::gradient_objective(hh, data, theta);
    benchmark::DoNotOptimize(grad);
  }
}
BENCHMARK(BM_GradientObjective);

void BM_EstimateEsp(benchmark::State& state) {
  const esp::MomentModel hh = esp::builtin_hall_horowitz();
  const esp::Dataset data = hh_sample(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto fit = esp::estimate_esp(hh, data);
    benchmark::DoNotOptimize(fit.theta_hat);
  }
}
BENCHMARK(BM_EstimateEsp)->Arg(25)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_EstimateMm(benchmark::State& state) {
  const esp::MomentModel hh = esp::builtin_hall_horowitz();
  const esp::Dataset data = hh_sample(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto fit = esp::estimate_mm_et(hh, data);
    benchmark::DoNotOptimize(fit.theta_hat);
  }
}
BENCHMARK(BM_EstimateMm)->Arg(25)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_Chi2Quantile(benchmark::State& state) {
  double p = 0.90;
  for (auto _ : state) {
    benchmark::DoNotOptimize(esp::chi2_quantile(p, 1));
    p = p < 0.99 ? p + 1e-4 : 0.90;
  }
}
BENCHMARK(BM_Chi2Quantile);

}  // namespace

BENCHMARK_MAIN();
