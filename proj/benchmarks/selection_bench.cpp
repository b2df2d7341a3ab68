#include <benchmark/benchmark.h>

#include "plgmi/selection/top_n.hpp"

namespace {

void BM_SelectTopN(benchmark::State& state) {
  torch::manual_seed(0);
  auto scores = torch::softmax(torch::randn({state.range(0), 10}), 1);
  for (auto _ : state) {
    auto dr = plgmi::selection::select_top_n(scores, 1000, plgmi::selection::ScoreKind::kProbability);
    benchmark::DoNotOptimize(dr);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SelectTopN)->Arg(10000)->Arg(100000);

}  // namespace
