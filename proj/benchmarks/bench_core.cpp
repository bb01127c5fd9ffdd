#include "demforge/assimilate.hpp"
#include "demforge/grid.hpp"
#include "demforge/hydrosim.hpp"
#include "demforge/morpho.hpp"
#include "demforge/resample.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

using namespace demforge;

namespace {

ElevationGrid terrain(int n, double dx) {
  return ElevationGrid::from_function(GridGeometry{n, n, 0, 0, dx}, [](double x, double y) {
    return 10.0 + 2.0 * std::sin(0.01 * x) * std::cos(0.013 * y) + 0.001 * x;
  });
}

}  // namespace

static void BM_Derivatives(benchmark::State& state) {
  const auto g = terrain(static_cast<int>(state.range(0)), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(morpho_fields(g));
  state.SetItemsProcessed(state.iterations() * g.values().size());
}
BENCHMARK(BM_Derivatives)->Arg(128)->Arg(512);

static void BM_Refine(benchmark::State& state) {
  const auto g = terrain(static_cast<int>(state.range(0)), 30.0);
  for (auto _ : state) benchmark::DoNotOptimize(refine(g, {10.0}));
}
BENCHMARK(BM_Refine)->Arg(32)->Arg(96);

static void BM_Relax(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const GridGeometry g{n, n, 0, 0, 1.0};
  std::mt19937 rng(1);
  std::uniform_int_distribution<int> u(0, n - 1);
  std::uniform_real_distribution<double> v(0.0, 10.0);
  ConstraintSet set;
  for (int k = 0; k < n; ++k) set.add({u(rng), u(rng), v(rng), ConstraintSource::sounding, std::nullopt});
  SolverParams p;
  p.tol = 1e-4;
  p.max_iter = 1000000;
  const ElevationGrid start(g, 5.0);
  for (auto _ : state) benchmark::DoNotOptimize(relax(start, set, p));
}
BENCHMARK(BM_Relax)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_SolverStep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto bed = terrain(n, 5.0);
  SimParams p;
  const auto initial = FlowState::at_rest(bed, 11.0);
  ShallowWaterSolver solver(bed, p, Hydrograph(), initial);
  for (auto _ : state) benchmark::DoNotOptimize(solver.step());
  state.SetItemsProcessed(state.iterations() * bed.values().size());
}
BENCHMARK(BM_SolverStep)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
