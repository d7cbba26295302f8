#include <benchmark/benchmark.h>

#include "qaction/analytic.hpp"
#include "qaction/fit.hpp"
#include "qaction/flow.hpp"
#include "qaction/parallel.hpp"

using namespace qa;

namespace {

Execution exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::Serial : Execution::Parallel;
}

const ActionParams& standard() {
  static const ActionParams model = inverse_square_model(1.0, 1.0, 1.0);
  return model;
}

const BoundarySet& balanced() {
  static const BoundarySet bounds = BoundarySet::uniform(1.5, 2.5, 10, 1.1, 2.1, 10);
  return bounds;
}

void BM_BuildTable(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(build_table(standard(), balanced(), 1.0, AmplitudeSource::Analytic, nullptr, exec_of(state)));
}

void BM_FitObjective(benchmark::State& state) {
  const auto table = build_table(standard(), balanced(), 1.0, AmplitudeSource::Analytic);
  FitOptions options;
  options.exec = exec_of(state);
  const auto params = restrict_to_ansatz(standard(), options.ansatz);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_fit(table, params, options));
}

void BM_FlowAssembly(benchmark::State& state) {
  FlowState s;
  s.beta = 1.0;
  s.params = make_action(1.0, PotentialSpec{{0, 1.0}, {2, 0.5}, {-2, 1.2}});
  s.initial_point = 10.0;
  for (int i = 0; i < 30; ++i) s.final_points.push_back(0.2 + 6.8 * i / 29.0);
  FlowOptions options;
  options.classical = standard();
  options.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(assemble_system(s, options));
}

}  // namespace

// Argument 0 is the serial reference, 1 the OpenMP path.
BENCHMARK(BM_BuildTable)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitObjective)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FlowAssembly)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
