#include <benchmark/benchmark.h>

#include "graphevo/env.hpp"
#include "graphevo/session.hpp"

using namespace gevo;

static void BM_FishStep(benchmark::State& state) {
  auto env = make_env(fixture_fish(), EnvSpec::fish());
  Rng rng(7);
  BodyState s = env->initial_state(rng);
  std::vector<double> action(env->action_dim(), 0.3);
  for (auto _ : state) {
    StepResult r = env->step(s, action);
    s = r.done ? env->initial_state(rng) : r.next;
    benchmark::DoNotOptimize(s.links[0].py);
  }
}
BENCHMARK(BM_FishStep);

static void BM_WalkerStep(benchmark::State& state) {
  auto env = make_env(fixture_walker(), EnvSpec::walker());
  Rng rng(7);
  BodyState s = env->initial_state(rng);
  std::vector<double> action(env->action_dim(), 0.3);
  for (auto _ : state) {
    StepResult r = env->step(s, action);
    s = r.done ? env->initial_state(rng) : r.next;
    benchmark::DoNotOptimize(s.links[0].px);
  }
}
BENCHMARK(BM_WalkerStep);
