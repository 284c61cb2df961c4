#include <benchmark/benchmark.h>

#include <array>

#include "coslearn/embeddings.hpp"
#include "coslearn/hierarchy.hpp"

namespace {

using namespace coslearn;

// 4^levels leaves.
void BM_SemanticEmbeddings(benchmark::State& state) {
  std::vector<std::size_t> branching(static_cast<std::size_t>(state.range(0)), 4);
  const ClassHierarchy h = make_balanced_hierarchy(branching);
  const SimilarityMatrix s = semantic_similarity(h);
  for (auto _ : state) {
    EmbeddingMatrix e = semantic_embeddings(s);
    benchmark::DoNotOptimize(&e);
  }
  state.counters["classes"] = static_cast<double>(s.size());
}
BENCHMARK(BM_SemanticEmbeddings)->DenseRange(2, 4)->Unit(benchmark::kMillisecond);

void BM_SemanticSimilarity(benchmark::State& state) {
  std::vector<std::size_t> branching(static_cast<std::size_t>(state.range(0)), 4);
  const ClassHierarchy h = make_balanced_hierarchy(branching);
  for (auto _ : state) {
    SimilarityMatrix s = semantic_similarity(h);
    benchmark::DoNotOptimize(&s);
  }
}
BENCHMARK(BM_SemanticSimilarity)->DenseRange(2, 4)->Unit(benchmark::kMillisecond);

}  // namespace
