#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "iopcal/calibrators.hpp"
#include "iopcal/metrics.hpp"
#include "iopcal/order.hpp"
#include "iopcal/training.hpp"

namespace {

using namespace iopcal;

std::vector<double> random_logits(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::vector<double> x(n);
  for (double& v : x) v = normal(rng);
  return x;
}

void BM_SortDescending(benchmark::State& state) {
  const auto x = random_logits(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(sort_descending(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SortDescending)->RangeMultiplier(10)->Range(10, 1000);

void forward_bench(benchmark::State& state, Method method) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const MlpSpec arch{method == Method::diag ? std::vector<std::size_t>{1, 10, 1}
                                            : std::vector<std::size_t>{n, 10, n},
                     {}};
  const CalibratorModel model = initial_model(method, n, arch, 7);
  const auto x = random_logits(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, x));
}

void BM_ForwardOp(benchmark::State& state) { forward_bench(state, Method::op); }
void BM_ForwardOi(benchmark::State& state) { forward_bench(state, Method::oi); }
void BM_ForwardDiag(benchmark::State& state) { forward_bench(state, Method::diag); }
BENCHMARK(BM_ForwardOp)->Arg(10)->Arg(100);
BENCHMARK(BM_ForwardOi)->Arg(10)->Arg(100);
BENCHMARK(BM_ForwardDiag)->Arg(10)->Arg(100);

void BM_ObjectiveAndGrad(benchmark::State& state) {
  const std::size_t k = 10, rows = 1000;
  LogitDataset data;
  data.n_classes = k;
  data.logits = Matrix(rows, k);
  data.labels.resize(rows);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (double& v : data.logits.row(i)) v = normal(rng);
    data.labels[i] = static_cast<std::uint32_t>(rng() % k);
  }
  const auto method = static_cast<Method>(state.range(0));
  const CalibratorModel model = initial_model(method, k, MlpSpec{{method == Method::diag ? 1 : k, 10,
                                                                 method == Method::diag ? 1 : k}, {}},
                                              11);
  for (auto _ : state) benchmark::DoNotOptimize(objective_and_grad(model, data, 0.0));
  state.SetLabel(std::string(to_string(method)));
}
BENCHMARK(BM_ObjectiveAndGrad)
    ->Arg(static_cast<int>(Method::ts))
    ->Arg(static_cast<int>(Method::diag))
    ->Arg(static_cast<int>(Method::op))
    ->Unit(benchmark::kMillisecond);

void BM_Ece(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  Matrix logits(rows, 10);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::vector<std::uint32_t> labels(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (double& v : logits.row(i)) v = normal(rng);
    labels[i] = static_cast<std::uint32_t>(rng() % 10);
  }
  const Matrix probs = softmax_rows(logits);
  for (auto _ : state) benchmark::DoNotOptimize(ece(probs, labels));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Ece)->Arg(10000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
