#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "graphevo/env.hpp"
#include "graphevo/evolution.hpp"
#include "graphevo/nervenet.hpp"
#include "graphevo/ppo.hpp"
#include "graphevo/session.hpp"
#include "helpers.hpp"

using namespace gevo;
namespace gt = gevo::testing;

namespace {

NodeAttr mid_attr() { return {0.2, 0.05, 0.3, 0.8, 100.0}; }

MorphGraph path_graph(int n) {
  MorphGraph g;
  g.root_id = 0;
  for (int i = 0; i < n; ++i) g.nodes.push_back({i, mid_attr()});
  for (int i = 1; i < n; ++i) g.edges.emplace_back(i - 1, i);
  return g;
}

// Quadratic-penalty environment: reward -|a|^2, trivial state. The policy
// should drive its action means toward zero.
class BanditEnv final : public Env {
 public:
  explicit BanditEnv(int horizon) : graph_(path_graph(2)), horizon_(horizon) {}
  const MorphGraph& graph() const override { return graph_; }
  int action_dim() const override { return 1; }
  int obs_width() const override { return 6; }
  int horizon() const override { return horizon_; }
  BodyState initial_state(Rng&) const override {
    BodyState s;
    s.links.resize(2);
    return s;
  }
  StepResult step(const BodyState& s,
                  std::span<const double> a) const override {
    StepResult r;
    r.next = s;
    r.next.t = s.t + 1;
    double x = std::clamp(a[0], -2.0, 2.0);
    r.reward = -x * x;
    r.done = r.next.t >= horizon_;
    return r;
  }
  void observe(const BodyState&, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    out[4] = 1.0;
    out[10] = 1.0;
  }

 private:
  MorphGraph graph_;
  int horizon_ = 0;
};

GnnConfig small_cfg() {
  GnnConfig c;
  c.d_h = 8;
  c.d_obs = 6;
  c.d_attr = 6;
  c.T = 2;
  return c;
}

Rollout fish_rollout(const GnnPolicy& p, int steps, int trunc, uint64_t seed,
                     int horizon = 500) {
  EnvSpec spec = EnvSpec::fish();
  spec.horizon = horizon;
  auto env = make_env(fixture_fish(), spec);
  Rng rng(seed);
  return collect(*env, p, steps, trunc, rng);
}

}  // namespace

TEST_CASE("collect: exact requested length and deterministic repetition") {
  GnnPolicy p(small_cfg());
  Rng rng(1);
  p.init_params(rng);
  Rollout a = fish_rollout(p, 200, 16, 7);
  Rollout b = fish_rollout(p, 200, 16, 7);
  CHECK(a.length() == 200);
  CHECK(a.rewards == b.rewards);
  CHECK(a.actions == b.actions);
  CHECK(a.logp == b.logp);
  CHECK(a.values == b.values);
}

TEST_CASE("collect: rewards replay exactly from stored episode states") {
  GnnPolicy p(small_cfg());
  Rng rng(2);
  p.init_params(rng);
  EnvSpec spec = EnvSpec::fish();
  spec.horizon = 40;  // several episodes inside one batch
  auto env = make_env(fixture_fish(), spec);
  Rng crng(11);
  Rollout r = collect(*env, p, 150, 10, crng);
  REQUIRE(r.episode_starts.size() == r.episode_init_states.size());
  REQUIRE(r.episode_starts.size() >= 3);
  for (size_t e = 0; e < r.episode_starts.size(); ++e) {
    int s = r.episode_starts[e];
    int end = e + 1 < r.episode_starts.size()
                  ? r.episode_starts[e + 1]
                  : r.length();
    BodyState st = r.episode_init_states[e];
    for (int t = s; t < end; ++t) {
      StepResult sr = env->step(st, r.act_at(t));
      REQUIRE(sr.reward == r.rewards[t]);
      st = sr.next;
    }
  }
}

TEST_CASE("collect: hidden snapshots live at every truncation boundary") {
  GnnPolicy p(small_cfg());
  Rng rng(3);
  p.init_params(rng);
  EnvSpec spec = EnvSpec::fish();
  spec.horizon = 25;
  auto env = make_env(fixture_fish(), spec);
  Rng crng(13);
  Rollout r = collect(*env, p, 100, 10, crng);
  for (size_t e = 0; e < r.episode_starts.size(); ++e) {
    int s = r.episode_starts[e];
    int end = e + 1 < r.episode_starts.size() ? r.episode_starts[e + 1]
                                              : r.length();
    for (int w = s; w < end; w += 10) CHECK_NOTHROW(r.snapshot_for(w));
  }
  // Episode starts snapshot to zeros.
  for (int es : r.episode_starts) {
    const auto& h = r.snapshot_for(es);
    for (double v : h) CHECK(v == 0.0);
  }
}

TEST_CASE("advantages: lambda=0 gives one-step TD errors") {
  Rollout r;
  r.rewards = {1.0, -0.5, 2.0, 0.25};
  r.values = {0.3, 0.1, -0.2, 0.6};
  r.done = {0, 0, 0, 1};
  r.final_next_value = 9.9;  // ignored: last step is terminal
  std::vector<double> adv, ret;
  advantages(r, 0.9, 0.0, adv, ret);
  CHECK(adv[0] == doctest::Approx(1.0 + 0.9 * 0.1 - 0.3));
  CHECK(adv[1] == doctest::Approx(-0.5 + 0.9 * (-0.2) - 0.1));
  CHECK(adv[2] == doctest::Approx(2.0 + 0.9 * 0.6 - (-0.2)));
  CHECK(adv[3] == doctest::Approx(0.25 - 0.6));
  for (int t = 0; t < 4; ++t)
    CHECK(ret[t] == doctest::Approx(adv[t] + r.values[t]));
}

TEST_CASE("advantages: gamma=0 gives r - V") {
  Rollout r;
  r.rewards = {1.0, -0.5, 2.0};
  r.values = {0.3, 0.1, -0.2};
  r.done = {0, 0, 0};
  r.final_next_value = 0.7;
  std::vector<double> adv, ret;
  advantages(r, 0.0, 0.95, adv, ret);
  for (int t = 0; t < 3; ++t)
    CHECK(adv[t] == doctest::Approx(r.rewards[t] - r.values[t]));
}

TEST_CASE("advantages match a brute-force double-sum oracle to 1e-12") {
  Rng rng(5);
  const double gamma = 0.97, lam = 0.88;
  Rollout r;
  const int T = 20;
  for (int t = 0; t < T; ++t) {
    r.rewards.push_back(rng.normal());
    r.values.push_back(rng.normal());
    r.done.push_back(t == 7 || t == 19 ? 1 : 0);  // two episodes
  }
  r.final_next_value = rng.normal();
  std::vector<double> adv, ret;
  advantages(r, gamma, lam, adv, ret);

  // Brute force: A_t = sum_k (gamma*lam)^k delta_{t+k} within the episode.
  auto delta = [&](int t) {
    double v_next;
    if (r.done[t])
      v_next = 0.0;
    else if (t + 1 < T)
      v_next = r.values[t + 1];
    else
      v_next = r.final_next_value;
    return r.rewards[t] + gamma * v_next - r.values[t];
  };
  for (int t = 0; t < T; ++t) {
    double acc = 0, w = 1.0;
    for (int k = t; k < T; ++k) {
      acc += w * delta(k);
      if (r.done[k]) break;
      w *= gamma * lam;
    }
    REQUIRE(std::abs(adv[t] - acc) < 1e-12);
  }
}

TEST_CASE("PPO surrogate gradient matches finite differences on a 3-node toy") {
  GnnConfig cfg;
  cfg.d_h = 6;
  cfg.d_obs = 4;
  cfg.d_attr = 4;
  cfg.T = 2;
  GnnPolicy p(cfg);
  Rng rng(6);
  p.init_params(rng);
  EnvSpec spec = EnvSpec::fish();
  spec.horizon = 30;
  auto env = make_env(path_graph(3), spec);
  Rng crng(17);
  Rollout r = collect(*env, p, 24, 8, crng);

  PpoConfig pcfg;
  pcfg.trunc_len = 8;
  const double beta = 0.73;
  GradResult gr = compute_gradients(p, env->graph(), r, pcfg, beta);
  REQUIRE(std::isfinite(gr.loss));

  std::vector<double*> coords;
  for (Tensor* t : p.params())
    for (auto& v : t->d) coords.push_back(&v);
  auto f = [&] {
    return compute_gradients(p, env->graph(), r, pcfg, beta).loss;
  };
  auto fd = gt::finite_difference(f, coords, 1e-5);
  std::vector<double> flat;
  for (const auto& g : gr.grads) flat.insert(flat.end(), g.begin(), g.end());
  REQUIRE(flat.size() == fd.size());
  int bad = 0;
  for (size_t i = 0; i < flat.size(); ++i) {
    double tol = 1e-4 * std::max({std::abs(flat[i]), std::abs(fd[i])}) + 1e-7;
    if (std::abs(flat[i] - fd[i]) > tol) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("truncation: full-length windows reproduce whole-episode BPTT") {
  GnnPolicy p(small_cfg());
  Rng rng(7);
  p.init_params(rng);
  EnvSpec spec = EnvSpec::fish();
  spec.horizon = 25;
  auto env = make_env(fixture_fish(), spec);
  const MorphGraph& g = env->graph();

  // Snapshot cadence = full horizon: one window per episode.
  Rng crng(23);
  Rollout r = collect(*env, p, 75, spec.horizon, crng);
  PpoConfig pcfg;
  pcfg.trunc_len = spec.horizon;
  const double beta = 1.0;
  GradResult sub = compute_gradients(p, g, r, pcfg, beta);

  // Reference: direct whole-episode construction, no window machinery.
  std::vector<double> adv, ret;
  advantages(r, pcfg.gamma, pcfg.lam, adv, ret);
  {
    double mean = 0;
    for (double a : adv) mean += a;
    mean /= adv.size();
    double var = 0;
    for (double a : adv) var += (a - mean) * (a - mean);
    var /= adv.size();
    for (double& a : adv) a = (a - mean) / (std::sqrt(var) + 1e-8);
  }
  std::vector<std::vector<double>> ref_grads;
  for (Tensor* t : p.params()) ref_grads.emplace_back(t->d.size(), 0.0);
  double inv = 1.0 / r.length();
  ad::Tape tape;
  for (size_t e = 0; e < r.episode_starts.size(); ++e) {
    int s = r.episode_starts[e];
    int end = e + 1 < r.episode_starts.size() ? r.episode_starts[e + 1]
                                              : r.length();
    tape.reset();
    std::vector<int> pv;
    for (const Tensor* t : std::as_const(p).params())
      pv.push_back(tape.leaf(*t));
    WindowView w;
    w.graph = &g;
    const auto& h0 = r.snapshot_for(s);
    w.h0 = std::span<const double>(h0.data(), h0.size());
    for (int t = s; t < end; ++t) {
      w.obs.push_back(r.obs_at(t));
      w.actions.push_back(r.act_at(t));
      w.mu_old.push_back(r.mu_at(t));
      w.sigma_old.push_back(r.sigma_at(t));
    }
    WindowVars vars = p.build_window(tape, w, pv);
    int surr = -1, kl = -1, vl = -1;
    for (int t = s; t < end; ++t) {
      int ratio = tape.exp(tape.add_const(vars.logp[t - s], -r.logp[t]));
      int su = tape.scale(ratio, adv[t]);
      surr = surr < 0 ? su : tape.add(surr, su);
      kl = kl < 0 ? vars.kl[t - s] : tape.add(kl, vars.kl[t - s]);
      int ve = tape.square(tape.add_const(vars.value[t - s], -ret[t]));
      vl = vl < 0 ? ve : tape.add(vl, ve);
    }
    int loss = tape.add(
        tape.add(tape.scale(surr, -inv), tape.scale(kl, beta * inv)),
        tape.scale(vl, pcfg.value_coef * inv));
    tape.backward(loss);
    for (size_t pi = 0; pi < pv.size(); ++pi) {
      auto gv = tape.grad(pv[pi]);
      for (size_t k2 = 0; k2 < gv.size(); ++k2) ref_grads[pi][k2] += gv[k2];
    }
  }
  for (size_t pi = 0; pi < ref_grads.size(); ++pi)
    for (size_t k2 = 0; k2 < ref_grads[pi].size(); ++k2) {
      double a = sub.grads[pi][k2], b = ref_grads[pi][k2];
      REQUIRE(std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(b)));
    }
}

TEST_CASE("truncated windows use strictly less recorded-graph memory") {
  GnnPolicy p(small_cfg());
  Rng rng(8);
  p.init_params(rng);
  EnvSpec spec = EnvSpec::fish();
  spec.horizon = 100;
  auto env = make_env(fixture_fish(), spec);

  Rng c1(29);
  Rollout r_small = collect(*env, p, 100, 10, c1);
  Rng c2(29);
  Rollout r_full = collect(*env, p, 100, 100, c2);
  CHECK(r_small.rewards == r_full.rewards);  // snapshots don't affect behavior

  PpoConfig small_cfg_p, full_cfg_p;
  small_cfg_p.trunc_len = 10;
  full_cfg_p.trunc_len = 100;
  GradResult gs = compute_gradients(p, env->graph(), r_small, small_cfg_p, 1.0);
  GradResult gf = compute_gradients(p, env->graph(), r_full, full_cfg_p, 1.0);
  CHECK(gs.peak_tape_doubles < gf.peak_tape_doubles);
}

TEST_CASE("update: zero advantages leave only the value-loss gradient") {
  // A reward structure with zero advantage everywhere is hard to construct
  // exactly; instead verify directly that with identical old/new policies the
  // ratio is 1 so the surrogate term's gradient reduces to grad(A*ratio) with
  // A normalized; with A == 0 the policy head gradient vanishes.
  GnnPolicy p(small_cfg());
  Rng rng(9);
  p.init_params(rng);
  EnvSpec spec = EnvSpec::fish();
  spec.horizon = 16;
  auto env = make_env(fixture_fish(), spec);
  Rng crng(31);
  Rollout r = collect(*env, p, 32, 8, crng);
  // Force zero advantages: constant rewards equal to gamma-discount fixpoint
  // is fiddly; instead zero out rewards and values.
  std::fill(r.rewards.begin(), r.rewards.end(), 0.0);
  std::fill(r.values.begin(), r.values.end(), 0.0);
  r.final_next_value = 0.0;
  PpoConfig pcfg;
  pcfg.trunc_len = 8;
  GradResult gr = compute_gradients(p, env->graph(), r, pcfg, 0.0);
  // mu head gradient must vanish (indices 19, 20 in the declared order);
  // value head (22, 23) need not.
  auto manifest = p.shape_manifest();
  REQUIRE(manifest[19].name == "mu_w");
  for (double v : gr.grads[19]) CHECK(std::abs(v) < 1e-12);
  for (double v : gr.grads[20]) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("update keeps KL near target and beta moves by 1.5x steps") {
  GnnPolicy p(small_cfg());
  Rng rng(10);
  p.init_params(rng);
  EnvSpec spec = EnvSpec::fish();
  spec.horizon = 32;
  auto env = make_env(fixture_fish(), spec);
  PpoConfig pcfg;
  pcfg.timesteps_per_update = 64;
  pcfg.trunc_len = 8;
  pcfg.learning_rate = 1e-5;  // tiny step: KL stays small
  OptimState opt;
  opt.beta = pcfg.beta_init;
  opt.lr = pcfg.learning_rate;
  Rng crng(37);
  std::vector<double> betas{opt.beta};
  for (int e = 0; e < 6; ++e) {
    Rollout r = collect(*env, p, pcfg.timesteps_per_update, pcfg.trunc_len,
                        crng);
    UpdateStats st = update(p, env->graph(), r, pcfg, opt, crng);
    CHECK(st.kl < 0.01);
    CHECK(st.kl >= 0.0);
    betas.push_back(opt.beta);
  }
  for (size_t i = 1; i < betas.size(); ++i) {
    double ratio = betas[i] / betas[i - 1];
    bool ok = std::abs(ratio - 1.0) < 1e-12 ||
              std::abs(ratio - 1.5) < 1e-12 ||
              std::abs(ratio - 1.0 / 1.5) < 1e-12;
    CHECK(ok);
    CHECK(betas[i] > 0.0);
  }
}

TEST_CASE("bandit smoke: 200 updates drive |mu| below 0.1") {
  BanditEnv env(16);
  GnnConfig cfg = small_cfg();
  GnnPolicy p(cfg);
  Rng rng(12);
  p.init_params(rng);
  // Push the initial mean away from the optimum.
  p.mu_b.d[0] = 0.8;
  PpoConfig pcfg;
  pcfg.timesteps_per_update = 64;
  pcfg.trunc_len = 8;
  pcfg.epochs_per_generation = 1;
  pcfg.learning_rate = 3e-3;
  OptimState opt;
  opt.beta = pcfg.beta_init;
  opt.lr = pcfg.learning_rate;
  Rng crng(41);
  for (int e = 0; e < 200; ++e) {
    Rollout r = collect(env, p, pcfg.timesteps_per_update, pcfg.trunc_len,
                        crng);
    update(p, env.graph(), r, pcfg, opt, crng);
  }
  // Measure the mean action magnitude on a fresh state.
  std::vector<double> hidden(p.hidden_size(env.graph()), 0.0);
  std::vector<double> obs(2 * 6);
  env.observe(BodyState{}, obs);
  std::vector<double> mu, sigma;
  double value = 0;
  p.forward(env.graph(), obs, hidden, mu, sigma, value);
  CHECK(std::abs(mu[0]) < 0.1);
}

TEST_CASE("non-finite rollout values trigger step skipping and lr halving") {
  GnnPolicy p(small_cfg());
  Rng rng(13);
  p.init_params(rng);
  EnvSpec spec = EnvSpec::fish();
  spec.horizon = 16;
  auto env = make_env(fixture_fish(), spec);
  Rng crng(43);
  Rollout r = collect(*env, p, 16, 8, crng);
  r.logp[3] = std::numeric_limits<double>::quiet_NaN();
  PpoConfig pcfg;
  pcfg.trunc_len = 8;
  pcfg.minibatches_per_epoch = 1;
  OptimState opt;
  opt.lr = 3e-4;
  UpdateStats st = update(p, env->graph(), r, pcfg, opt, crng);
  CHECK(st.skipped_steps > 0);
  CHECK(opt.lr < 3e-4);
  CHECK(opt.divergence_events > 0);
}
