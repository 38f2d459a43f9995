#include <benchmark/benchmark.h>

#include "graphevo/evolution.hpp"
#include "graphevo/mutation.hpp"

using namespace gevo;

static void BM_MutateChain(benchmark::State& state) {
  AttrSpace space;
  MutationConfig cfg;
  cfg.pert_sigma = PertSigma::defaults_for(space);
  Rng rng(11);
  MorphGraph g = random_graph(space, rng);
  for (auto _ : state) {
    auto res = mutate(g, cfg, space, rng);
    g = std::move(res.graph);
    benchmark::DoNotOptimize(g.node_count());
  }
}
BENCHMARK(BM_MutateChain);

static void BM_Canonicalize(benchmark::State& state) {
  AttrSpace space;
  Rng rng(11);
  MutationConfig cfg;
  cfg.pert_sigma = PertSigma::defaults_for(space);
  MorphGraph g = random_graph(space, rng);
  for (int i = 0; i < 30; ++i) g = mutate(g, cfg, space, rng).graph;
  for (auto _ : state) {
    MorphGraph c = canonicalize(g);
    benchmark::DoNotOptimize(c.node_count());
  }
}
BENCHMARK(BM_Canonicalize);
