#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "occmom/poly.h"

namespace {

using occmom::Polynomial;

// Lie derivative of every test monomial up to the given degree along the
// Example-2 style quadratic field.
void BM_LieDerivativeBasis(benchmark::State& state) {
  const std::vector<std::string> names = {"x1", "x2", "x3", "x4"};
  const std::vector<Polynomial> f = {
      occmom::parse_polynomial("-0.5*x1*x3", names),
      occmom::parse_polynomial("0.5*x1*x3 - 0.3*x2", names),
      occmom::parse_polynomial("-0.5*x1*x3 + 0.1*x4", names),
      occmom::parse_polynomial("0.3*x2 - 0.1*x4", names)};
  const auto basis = occmom::monomial_basis(4, static_cast<int>(state.range(0)), true);
  for (auto _ : state) {
    for (const auto& m : basis) {
      Polynomial v(4);
      v.add_term(m, 1.0);
      benchmark::DoNotOptimize(occmom::lie_derivative(v, f));
    }
  }
  state.SetItemsProcessed(state.iterations() * basis.size());
}
BENCHMARK(BM_LieDerivativeBasis)->Arg(3)->Arg(5)->Arg(7);

void BM_Parse(benchmark::State& state) {
  const std::vector<std::string> names = {"x1", "x2", "x3"};
  for (auto _ : state) {
    benchmark::DoNotOptimize(occmom::parse_polynomial("(x1 + 2*x2 - x3)^4 - 3.5*t*x1*x2^2 + 0.25", names));
  }
}
BENCHMARK(BM_Parse);

}  // namespace

BENCHMARK_MAIN();
