#include <benchmark/benchmark.h>

#include "subviews/pipeline.hpp"
#include "subviews/simgen.hpp"

using namespace subviews;

namespace {

const SimInstance& instance() {
  static const SimInstance inst = [] {
    SimDesignSpec spec = preset("table1-s1");
    spec.n = 200;
    return generate_instance(spec, 0);
  }();
  return inst;
}

Execution exec_of(const benchmark::State& state) {
  return state.range(0) ? Execution::parallel : Execution::serial;
}

void BM_Scores(benchmark::State& state) {
  const auto& inst = instance();
  const PreparedData data(inst.y, inst.design);
  const PenaltyWeights w = compute_weights(data);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_all_scores(data, w.w_star, {}, exec_of(state)));
}

void BM_CrossValidation(benchmark::State& state) {
  const auto& inst = instance();
  const PreparedData data(inst.y, inst.design);
  const PenaltyWeights w = compute_weights(data);
  const auto grid = lambda_grid(lambda_max(data, w), 20, 1e-2);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        cross_validate_lambda(inst.y, inst.design, w, 5, grid, 7, {}, exec_of(state)));
}

void BM_Replications(benchmark::State& state) {
  SimDesignSpec spec = preset("null-small");
  for (auto _ : state) benchmark::DoNotOptimize(run_replications(spec, 8, {}, exec_of(state)));
}

}  // namespace

// Argument 0 runs the serial reference loop, 1 the OpenMP kernel.
BENCHMARK(BM_Scores)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_CrossValidation)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Replications)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
