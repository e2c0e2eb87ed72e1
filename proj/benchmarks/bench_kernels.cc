#include <benchmark/benchmark.h>

#include "topicmatch/fine_refiner.h"
#include "topicmatch/rng.h"
#include "topicmatch/topic_matcher.h"

using namespace topicmatch;

namespace {

ag::Matrix noise(Rng& rng, ag::Index rows, ag::Index cols) {
  ag::Matrix m(rows, cols);
  for (ag::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

void BM_DualSoftmax(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(1);
  const ag::Var a = ag::constant(noise(rng, n, 64)), b = ag::constant(noise(rng, n, 64));
  for (auto _ : state) benchmark::DoNotOptimize(dual_softmax(a, b, 0.1).value().data());
  state.SetComplexityN(n);
}
BENCHMARK(BM_DualSoftmax)->RangeMultiplier(2)->Range(64, 1024)->Complexity();

void BM_ExtractMatches(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(2);
  ag::Matrix p = noise(rng, n, n).cwiseAbs();
  p /= p.sum();
  for (auto _ : state) benchmark::DoNotOptimize(extract_coarse_matches(p, 0.0).size());
}
BENCHMARK(BM_ExtractMatches)->Arg(256)->Arg(1024);

void BM_ContextPool(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(3);
  AttentionOptions opts;
  const AttentionParams pool(rng, 64, opts);
  const ag::Var topics = ag::constant(noise(rng, 16, 64)), tokens = ag::constant(noise(rng, n, 64));
  for (auto _ : state) benchmark::DoNotOptimize(context_pool(pool, topics, tokens).local.value().data());
}
BENCHMARK(BM_ContextPool)->Arg(256)->Arg(1024);

void BM_TopicInference(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(4);
  const PooledTopics pooled{ag::constant(noise(rng, 16, 64)), 0};
  const ag::Var tokens = ag::constant(noise(rng, n, 64));
  for (auto _ : state) benchmark::DoNotOptimize(infer_topic_distribution(pooled, tokens).theta.value().data());
}
BENCHMARK(BM_TopicInference)->Arg(256)->Arg(1024);

void BM_SoftArgmax(benchmark::State& state) {
  const auto m = state.range(0);
  Rng rng(5);
  const ag::Matrix grid = grid_map(5);
  const ag::Var scores = ag::constant(noise(rng, m, 25));
  const ag::Matrix mask = ag::Matrix::Ones(m, 25);
  for (auto _ : state) benchmark::DoNotOptimize(soft_argmax(scores, mask, grid, 0.1).coords.value().data());
}
BENCHMARK(BM_SoftArgmax)->Arg(128)->Arg(1024);

}  // namespace
