#include <benchmark/benchmark.h>

#include "flockd/dynamics.hpp"
#include "flockd/gas_model.hpp"
#include "flockd/kernels.hpp"
#include "flockd/random.hpp"
#include "flockd/special_functions.hpp"

using namespace flockd;

namespace {

Ensemble random_ensemble(std::size_t n, Model model, double c) {
  Ensemble e = make_ensemble(n, 3, model, 2, c);
  const CounterRng rng(17);
  for (std::size_t i = 0; i < n * 3; ++i) {
    e.x[i] = 2.0 * rng.uniform(i) - 1.0;
    e.v[i] = 0.3 * rng.normal(n * 3 + i);
  }
  for (std::size_t a = 0; a < n; ++a) e.T[a] = 1.0 + rng.uniform(7 * n + a);
  return e;
}

void BM_BesselK1Scaled(benchmark::State& state) {
  double g = 0.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bessel_k_scaled(1, g));
    g = g < 1e4 ? g * 1.1 : 0.5;
  }
}
BENCHMARK(BM_BesselK1Scaled);

void BM_TailIntegral(benchmark::State& state) {
  double g = 0.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tail_integral_scaled(g));
    g = g < 1e4 ? g * 1.1 : 0.5;
  }
}
BENCHMARK(BM_TailIntegral);

void BM_SyngeClosure(benchmark::State& state) {
  const double g = static_cast<double>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(synge_closure(2, g));
}
BENCHMARK(BM_SyngeClosure)->Arg(10)->Arg(40)->Arg(1000)->Arg(1000000);

void BM_Rhs(benchmark::State& state, Model model, double c) {
  const Ensemble e = random_ensemble(static_cast<std::size_t>(state.range(0)), model, c);
  const Kernel phi = Kernel::algebraic(1.0, 1.0);
  const Kernel zeta = Kernel::algebraic(0.5, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_rhs(e, phi, zeta));
  state.SetComplexityN(state.range(0));
}
BENCHMARK_CAPTURE(BM_Rhs, classical, Model::ClassicalTCS, kInfiniteLightSpeed)
    ->RangeMultiplier(4)->Range(16, 1024)->Complexity(benchmark::oNSquared);
BENCHMARK_CAPTURE(BM_Rhs, synge, Model::RTCSSynge, 100.0)
    ->RangeMultiplier(4)->Range(16, 1024)->Complexity(benchmark::oNSquared);
BENCHMARK_CAPTURE(BM_Rhs, simplified, Model::RTCSSimplified, 100.0)
    ->RangeMultiplier(4)->Range(16, 1024)->Complexity(benchmark::oNSquared);
BENCHMARK_CAPTURE(BM_Rhs, mechanical, Model::RelativisticCSMechanical, 100.0)
    ->RangeMultiplier(4)->Range(16, 1024)->Complexity(benchmark::oNSquared);

}  // namespace

BENCHMARK_MAIN();
