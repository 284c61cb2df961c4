#include <benchmark/benchmark.h>

#include "coslearn/autodiff.hpp"
#include "coslearn/random.hpp"

namespace {

using coslearn::Rng;
using coslearn::Tensor;

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({r, c});
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(n, n, 1);
  const Tensor b = random_matrix(n, n, 2);
  for (auto _ : state) {
    Tensor c = coslearn::kernels::matmul(a, b);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256);

void BM_LogSoftmax(benchmark::State& state) {
  const Tensor x = random_matrix(32, static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) {
    Tensor y = coslearn::kernels::log_softmax(x);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_LogSoftmax)->Arg(16)->Arg(200);

}  // namespace
