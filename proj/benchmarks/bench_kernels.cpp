// Microbenchmarks for the serving-path kernels. Build with
// -DHOPGATE_BUILD_BENCHMARKS=ON (default when google-benchmark is found);
// run build/benchmarks/hopgate_benchmarks.

#include <benchmark/benchmark.h>

#include "hopgate/cost_model.hpp"
#include "hopgate/engine.hpp"
#include "hopgate/rng.hpp"
#include "hopgate/trainer.hpp"

namespace {

using namespace hopgate;

Vec random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Vec v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = rng.gaussian(1.0);
  return v;
}

Mat random_mat(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(r, c);
  for (double& x : m.span()) x = rng.gaussian(1.0);
  return m;
}

void BM_Dot(benchmark::State& state) {
  const std::size_t d = state.range(0);
  Vec a = random_vec(d, 1), b = random_vec(d, 2);
  FlopLedger led;
  for (auto _ : state) {
    benchmark::DoNotOptimize(dot(a, b, led, FlopCategory::InnerProduct));
  }
}
BENCHMARK(BM_Dot)->Arg(40)->Arg(500);

void BM_Softmax(benchmark::State& state) {
  const std::size_t n = state.range(0);
  Vec v = random_vec(n, 3);
  FlopLedger led;
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax(v, led));
  }
}
BENCHMARK(BM_Softmax)->Arg(50)->Arg(5000);

void BM_AttentionHop(benchmark::State& state) {
  const std::size_t n_s = state.range(0), d = 40;
  EmbeddedMemory mem{random_mat(n_s, d, 4), random_mat(n_s, d, 5), 1};
  Vec u = random_vec(d, 6);
  FlopLedger led;
  for (auto _ : state) {
    benchmark::DoNotOptimize(attention_hop(u, mem, std::nullopt, nullptr, led));
  }
}
BENCHMARK(BM_AttentionHop)->Arg(50)->Arg(5000);

void BM_AttentionHopZeroSkip(benchmark::State& state) {
  const std::size_t n_s = state.range(0), d = 40;
  EmbeddedMemory mem{random_mat(n_s, d, 7), random_mat(n_s, d, 8), 1};
  Vec u = random_vec(d, 9);
  FlopLedger led;
  for (auto _ : state) {
    benchmark::DoNotOptimize(attention_hop(u, mem, 0.01, nullptr, led));
  }
}
BENCHMARK(BM_AttentionHopZeroSkip)->Arg(50)->Arg(5000);

void BM_ForwardConventional(benchmark::State& state) {
  HyperParams hp;
  hp.d = 40;
  hp.vocab_size = 174;
  hp.n_s = state.range(0);
  hp.n_w = 8;
  hp.hops = 3;
  ModelWeights w = init_weights(hp, 1);
  Rng rng(2);
  Sample s{IndexGrid(hp.n_s, hp.n_w), {}, 1, 1, {}};
  for (auto& cell : s.story_grid.cells) {
    cell = static_cast<std::uint32_t>(rng.index(hp.vocab_size));
  }
  s.query_ids.assign(hp.n_w, 2);
  const auto memory = embed_story_memory(w, hp, s);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward_with_memory(w, hp, s, memory, {}));
  }
}
BENCHMARK(BM_ForwardConventional)->Arg(50)->Arg(1000);

void BM_EmbedStory(benchmark::State& state) {
  HyperParams hp;
  hp.d = 40;
  hp.vocab_size = 174;
  hp.n_s = state.range(0);
  hp.n_w = 8;
  ModelWeights w = init_weights(hp, 3);
  Rng rng(4);
  IndexGrid grid(hp.n_s, hp.n_w);
  for (auto& cell : grid.cells) cell = static_cast<std::uint32_t>(rng.index(hp.vocab_size));
  for (auto _ : state) {
    benchmark::DoNotOptimize(embed_story(grid, w.embeds[0], &*w.pe, nullptr));
  }
}
BENCHMARK(BM_EmbedStory)->Arg(50)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
