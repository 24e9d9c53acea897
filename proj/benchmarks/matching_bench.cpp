// Microbenchmarks for the two matchers and the graph forward pass. The
// greedy matcher should scale far past the point where the optimal
// assignment becomes unusable; run with --benchmark_min_time=0.1s for a
// quick look.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>

#include "osdr/gcn.hpp"
#include "osdr/matching.hpp"
#include "osdr/matrix.hpp"
#include "osdr/synth.hpp"

namespace {

osdr::Matrix random_matrix(std::size_t rows, std::size_t cols,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  osdr::Matrix m(rows, cols);
  for (double& v : m.flat())
    v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return m;
}

void bm_greedy(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const osdr::Matrix src = random_matrix(n, 32, 1);
  const osdr::Matrix tgt = random_matrix(n, 32, 2);
  for (auto _ : state) benchmark::DoNotOptimize(osdr::match_greedy(src, tgt));
  state.SetComplexityN(state.range(0));
}

void bm_hungarian(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const osdr::Matrix src = random_matrix(n, 32, 1);
  const osdr::Matrix tgt = random_matrix(n, 32, 2);
  for (auto _ : state) {
    // Cost construction counts: the optimal assignment cannot start
    // without the full grid.
    osdr::Matrix cost(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        cost(i, j) = osdr::l2_distance(tgt.row(i), src.row(j));
    benchmark::DoNotOptimize(osdr::match_hungarian(cost));
  }
  state.SetComplexityN(state.range(0));
}

void bm_gcn_forward(benchmark::State& state) {
  osdr::SynthSpec spec;
  spec.seed = 3;
  const osdr::SynthInstance inst = osdr::generate(spec);
  osdr::GcnConfig cfg;
  cfg.input_dim = inst.graph.semantic_dim();
  cfg.output_dim = inst.spec.feature_dim + 1;
  const osdr::GcnModel m = osdr::GcnModel::init(cfg, 5);
  for (auto _ : state)
    benchmark::DoNotOptimize(osdr::gcn_forward(m, inst.graph));
}

}  // namespace

BENCHMARK(bm_greedy)->RangeMultiplier(2)->Range(64, 1024)->Complexity();
BENCHMARK(bm_hungarian)->RangeMultiplier(2)->Range(64, 512)->Complexity();
BENCHMARK(bm_gcn_forward);

BENCHMARK_MAIN();
