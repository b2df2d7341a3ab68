#include <benchmark/benchmark.h>

#include <random>

#include "plgmi/inversion/losses.hpp"

namespace {

using plgmi::inversion::InversionLoss;

std::vector<double> random_logits(std::int64_t k) {
  std::mt19937_64 rng(k);
  std::normal_distribution<double> n(0.0, 3.0);
  std::vector<double> v(static_cast<std::size_t>(k));
  for (auto& x : v) x = n(rng);
  return v;
}

void BM_ScalarMaxMargin(benchmark::State& state) {
  const auto logits = random_logits(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(plgmi::inversion::max_margin_loss(logits, 0));
}
BENCHMARK(BM_ScalarMaxMargin)->Arg(10)->Arg(100)->Arg(1000);

void BM_ScalarCrossEntropy(benchmark::State& state) {
  const auto logits = random_logits(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(plgmi::inversion::cross_entropy_loss(logits, 0));
}
BENCHMARK(BM_ScalarCrossEntropy)->Arg(10)->Arg(100)->Arg(1000);

void BM_TensorLossBackward(benchmark::State& state) {
  const auto kind = static_cast<InversionLoss>(state.range(0));
  torch::manual_seed(0);
  auto logits = torch::randn({256, 100});
  auto targets = torch::randint(0, 100, {256}, torch::kInt64);
  for (auto _ : state) {
    auto l = logits.clone().requires_grad_(true);
    plgmi::inversion::inversion_loss(kind, l, targets).sum().backward();
    benchmark::DoNotOptimize(l.grad().data_ptr<float>());
  }
  state.SetLabel(std::string(plgmi::inversion::to_string(kind)));
}
BENCHMARK(BM_TensorLossBackward)->DenseRange(0, 2);

}  // namespace

BENCHMARK_MAIN();
