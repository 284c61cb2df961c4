#include <benchmark/benchmark.h>

#include <vector>

#include "coslearn/losses.hpp"
#include "coslearn/random.hpp"

namespace {

using namespace coslearn;

struct Batch {
  Tensor features;
  Tensor targets;
  std::vector<std::size_t> labels;
};

Batch make_batch(std::size_t rows, std::size_t classes) {
  Rng rng(11);
  Batch b{Tensor({rows, classes}), Tensor({rows, classes}), {}};
  for (auto& v : b.features.data()) v = rng.normal();
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t y = rng.index(classes);
    b.labels.push_back(y);
    b.targets.at(i, y) = 1.0;
  }
  return b;
}

void BM_CosineLoss(benchmark::State& state) {
  const Batch b = make_batch(64, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    Tape tape;
    Var f = tape.parameter(b.features);
    Var loss = cosine_loss(f, b.targets);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(f.id()).data().data());
  }
}
BENCHMARK(BM_CosineLoss)->Arg(16)->Arg(200);

void BM_CrossEntropyLoss(benchmark::State& state) {
  const Batch b = make_batch(64, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    Tape tape;
    Var f = tape.parameter(b.features);
    Var loss = cross_entropy_loss(f, b.labels, 0.1);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(f.id()).data().data());
  }
}
BENCHMARK(BM_CrossEntropyLoss)->Arg(16)->Arg(200);

}  // namespace
