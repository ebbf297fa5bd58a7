#include "choquard/semilinear_solver.hpp"
#include "choquard/variational.hpp"

#include <benchmark/benchmark.h>

#include <limits>

using namespace choquard;

namespace {

ProblemParams params(double gamma, double a, double lambda, bool choquard) {
  ProblemParams pp;
  pp.sing = SingularParams{gamma, a, 0.05};
  pp.lambda = lambda;
  pp.include_choquard = choquard;
  return pp;
}

void BM_KernelAssembly(benchmark::State& state) {
  auto g = build_grid(3, static_cast<int>(state.range(0)), 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(assemble_kernel(g, 1.0));
}
BENCHMARK(BM_KernelAssembly)->Arg(100)->Arg(200)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_LocalCascade(benchmark::State& state) {
  auto g = build_grid(3, static_cast<int>(state.range(0)), 2.0);
  const ProblemParams pp = params(2.0, 1.0, 0.1, false);
  for (auto _ : state) benchmark::DoNotOptimize(solve_S_le(pp, g));
}
BENCHMARK(BM_LocalCascade)->Arg(200)->Arg(800)->Arg(1600)->Unit(benchmark::kMillisecond);

void BM_ChoquardSolve(benchmark::State& state) {
  auto g = build_grid(3, static_cast<int>(state.range(0)), 2.0);
  auto k = assemble_kernel(g, 1.0);
  const ProblemParams pp = params(0.5, 1.0, 1.0, true);
  for (auto _ : state) benchmark::DoNotOptimize(solve_P_le(pp, g, *k));
}
BENCHMARK(BM_ChoquardSolve)->Arg(200)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_EpsCascade(benchmark::State& state) {
  auto g = build_grid(3, 200, 2.0);
  auto k = assemble_kernel(g, 1.0);
  const ProblemParams pp = params(2.0, 1.0, 0.1, true);
  for (auto _ : state) benchmark::DoNotOptimize(cascade_to_limit(pp, g, k.get()));
}
BENCHMARK(BM_EpsCascade)->Unit(benchmark::kMillisecond);

void BM_EnergyG(benchmark::State& state) {
  auto g = build_grid(3, 200, 2.0);
  auto k = assemble_kernel(g, 1.0);
  const ProblemParams pp = params(2.0, 1.0, 1.0, true);
  const Field v = solve_P_le(pp, g, *k).solution;
  const Eigen::VectorXd w = 0.3 * random_positive_direction(*g, 1);
  for (auto _ : state) benchmark::DoNotOptimize(energy_G(pp, *k, v.values, w));
}
BENCHMARK(BM_EnergyG)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
