#include <benchmark/benchmark.h>

#include <array>

#include "coslearn/data.hpp"
#include "coslearn/embeddings.hpp"
#include "coslearn/experiments.hpp"
#include "coslearn/hierarchy.hpp"

namespace {

using namespace coslearn;

// One smoke-profile run (7 epochs) on 16 hierarchical blob classes.
void BM_RunTraining(benchmark::State& state, LossKind kind) {
  const std::array<std::size_t, 2> branching{4, 4};
  const ClassHierarchy h = make_balanced_hierarchy(branching);
  BlobSpec spec;
  spec.num_classes = 16;
  spec.dim = 32;
  spec.samples_per_class = 40;
  spec.spread = 0.3;
  spec.seed = 7;
  const auto [train, test] = make_blobs(spec, &h);
  const EmbeddingMatrix onehot = onehot_embeddings(16);

  LossConfig loss;
  loss.name = std::string(to_string(kind));
  loss.spec.kind = kind;
  TrainingConfig cfg;
  const double lr = kind == LossKind::cross_entropy ? 0.1 : 1.0;
  cfg.schedule = SgdrSchedule::profile("smoke", lr);
  for (auto _ : state) {
    RunRecord r = run_training(train, test, loss, &onehot, cfg, 1, lr);
    benchmark::DoNotOptimize(r.best_accuracy);
  }
}
BENCHMARK_CAPTURE(BM_RunTraining, cosine, LossKind::cosine)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_RunTraining, cross_entropy, LossKind::cross_entropy)
    ->Unit(benchmark::kMillisecond);

}  // namespace
