#include <benchmark/benchmark.h>

#include "graphevo/env.hpp"
#include "graphevo/nervenet.hpp"
#include "graphevo/ppo.hpp"
#include "graphevo/session.hpp"

using namespace gevo;

static void BM_GnnForward(benchmark::State& state) {
  GnnConfig cfg;
  cfg.d_h = static_cast<int>(state.range(0));
  cfg.d_obs = cfg.d_attr = cfg.d_h / 2;
  GnnPolicy policy(cfg);
  Rng rng(3);
  policy.init_params(rng);
  MorphGraph g = fixture_fish();
  std::vector<double> obs(static_cast<size_t>(g.node_count()) * 6, 0.1);
  std::vector<double> hidden(policy.hidden_size(g), 0.0);
  std::vector<double> mu, sigma;
  double value = 0;
  for (auto _ : state) {
    policy.forward(g, obs, hidden, mu, sigma, value);
    benchmark::DoNotOptimize(value);
  }
}
BENCHMARK(BM_GnnForward)->Arg(16)->Arg(64);

static void BM_PpoUpdate(benchmark::State& state) {
  GnnConfig cfg;
  cfg.d_h = 16;
  cfg.d_obs = cfg.d_attr = 8;
  GnnPolicy policy(cfg);
  Rng rng(3);
  policy.init_params(rng);
  MorphGraph g = fixture_fish();
  auto env = make_env(g, EnvSpec::fish());
  PpoConfig pcfg;
  pcfg.timesteps_per_update = 128;
  pcfg.trunc_len = 16;
  Rollout r = collect(*env, policy, pcfg.timesteps_per_update, pcfg.trunc_len,
                      rng);
  OptimState opt;
  for (auto _ : state) {
    UpdateStats st = update(policy, g, r, pcfg, opt, rng);
    benchmark::DoNotOptimize(st.kl);
  }
}
BENCHMARK(BM_PpoUpdate);
