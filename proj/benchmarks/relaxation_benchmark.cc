#include <string>

#include <benchmark/benchmark.h>

#include "occmom/conic.h"
#include "occmom/problem.h"
#include "occmom/relaxation.h"

namespace {

const occmom::EstimationProblem& example1() {
  static const occmom::EstimationProblem p = occmom::load_problem(std::string(OCCMOM_DATA) + "/example1.json");
  return p;
}

void BM_AssembleExample1(benchmark::State& state) {
  const int order = static_cast<int>(state.range(0));
  for (auto _ : state) {
    const occmom::Relaxation rel(example1(), order);
    benchmark::DoNotOptimize(rel.n_vars());
  }
}
BENCHMARK(BM_AssembleExample1)->Arg(2)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);

// One bound (the lower side of E[x1(1)]) including objective attachment.
void BM_SolveExample1(benchmark::State& state) {
  const occmom::Relaxation rel(example1(), static_cast<int>(state.range(0)));
  const auto objective = occmom::Objective::moment(10, {1, 0}, occmom::Sense::minimize);
  for (auto _ : state) {
    const auto report = occmom::solve(rel.program(objective));
    benchmark::DoNotOptimize(report.objective);
    state.counters["iterations"] = report.iterations;
  }
}
BENCHMARK(BM_SolveExample1)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
