#include "graphevo/ppo.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace gevo {

std::span<const double> Rollout::obs_at(int t) const {
  size_t w = static_cast<size_t>(n_nodes) * obs_width;
  return {&obs[t * w], w};
}
std::span<const double> Rollout::act_at(int t) const {
  if (n_act == 0) return {};
  return {&actions[static_cast<size_t>(t) * n_act], static_cast<size_t>(n_act)};
}
std::span<const double> Rollout::mu_at(int t) const {
  if (n_act == 0) return {};
  return {&mu[static_cast<size_t>(t) * n_act], static_cast<size_t>(n_act)};
}
std::span<const double> Rollout::sigma_at(int t) const {
  if (n_act == 0) return {};
  return {&sigma[static_cast<size_t>(t) * n_act], static_cast<size_t>(n_act)};
}

const std::vector<double>& Rollout::snapshot_for(int t) const {
  for (size_t i = 0; i < snapshot_t.size(); ++i)
    if (snapshot_t[i] == t) return snapshot_h[i];
  throw std::runtime_error("no hidden snapshot stored at t=" +
                           std::to_string(t));
}

double Rollout::mean_episode_return() const {
  if (rewards.empty()) return 0.0;
  double total = 0.0;
  int segments = 0;
  double acc = 0.0;
  for (int t = 0; t < length(); ++t) {
    acc += rewards[t];
    if (done[t] || t + 1 == length()) {
      total += acc;
      acc = 0.0;
      ++segments;
    }
  }
  return total / segments / reward_scale;
}

Rollout collect(const Env& env, const Policy& policy, int n_timesteps,
                int snapshot_every, Rng& rng, double reward_scale) {
  Rollout r;
  r.n_nodes = env.graph().node_count();
  r.obs_width = env.obs_width();
  r.n_act = env.action_dim();
  r.snapshot_every = snapshot_every;
  r.reward_scale = reward_scale;

  const int hsize = policy.hidden_size(env.graph());
  std::vector<double> hidden(hsize, 0.0);
  std::vector<double> obs(static_cast<size_t>(r.n_nodes) * r.obs_width);
  std::vector<double> mu, sigma;
  std::vector<double> action(r.n_act);

  BodyState state = env.initial_state(rng);
  int ep_start = 0;
  r.episode_starts.push_back(0);
  r.episode_init_states.push_back(state);

  for (int t = 0; t < n_timesteps; ++t) {
    if ((t - ep_start) % snapshot_every == 0) {
      r.snapshot_t.push_back(t);
      r.snapshot_h.push_back(hidden);
    }
    env.observe(state, obs);
    double value = 0;
    policy.forward(env.graph(), obs, hidden, mu, sigma, value);
    for (int i = 0; i < r.n_act; ++i) action[i] = mu[i] + sigma[i] * rng.normal();
    double lp = gaussian_logp(action, mu, sigma);

    StepResult sr = env.step(state, action);

    r.obs.insert(r.obs.end(), obs.begin(), obs.end());
    r.actions.insert(r.actions.end(), action.begin(), action.end());
    r.mu.insert(r.mu.end(), mu.begin(), mu.end());
    r.sigma.insert(r.sigma.end(), sigma.begin(), sigma.end());
    r.logp.push_back(lp);
    r.rewards.push_back(sr.reward * reward_scale);
    r.values.push_back(value);
    r.done.push_back(sr.done ? 1 : 0);

    if (sr.done) {
      state = env.initial_state(rng);
      std::fill(hidden.begin(), hidden.end(), 0.0);
      ep_start = t + 1;
      if (t + 1 < n_timesteps) {
        r.episode_starts.push_back(t + 1);
        r.episode_init_states.push_back(state);
      }
    } else {
      state = sr.next;
    }
  }
  if (!r.done.empty() && !r.done.back()) {
    env.observe(state, obs);
    std::vector<double> h2(hidden.begin(), hidden.end());
    double v = 0;
    policy.forward(env.graph(), obs, h2, mu, sigma, v);
    r.final_next_value = v;
  }
  return r;
}

void advantages(const Rollout& r, double gamma, double lam,
                std::vector<double>& adv, std::vector<double>& ret) {
  const int T = r.length();
  adv.assign(T, 0.0);
  ret.assign(T, 0.0);
  double gae = 0.0;
  for (int t = T - 1; t >= 0; --t) {
    double nonterm = r.done[t] ? 0.0 : 1.0;
    double v_next = (t + 1 < T) ? r.values[t + 1] : r.final_next_value;
    if (t + 1 < T && r.done[t]) v_next = 0.0;
    if (t + 1 == T && r.done[t]) v_next = 0.0;
    double delta = r.rewards[t] + gamma * v_next * nonterm - r.values[t];
    gae = delta + gamma * lam * nonterm * gae;
    adv[t] = gae;
    ret[t] = adv[t] + r.values[t];
  }
}

void Adam::ensure(const std::vector<Tensor*>& params) {
  if (!m.empty()) return;
  for (const Tensor* p : params) {
    m.emplace_back(p->d.size(), 0.0);
    v.emplace_back(p->d.size(), 0.0);
  }
}

void Adam::step(const std::vector<Tensor*>& params,
                const std::vector<std::vector<double>>& grads, double lr) {
  ensure(params);
  ++t;
  double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& pm = m[i];
    auto& pv = v[i];
    auto& pd = params[i]->d;
    const auto& g = grads[i];
    for (size_t k = 0; k < pd.size(); ++k) {
      pm[k] = b1 * pm[k] + (1.0 - b1) * g[k];
      pv[k] = b2 * pv[k] + (1.0 - b2) * g[k] * g[k];
      pd[k] -= lr * (pm[k] / bc1) / (std::sqrt(pv[k] / bc2) + eps);
    }
  }
}

namespace {

struct Window {
  int start = 0, len = 0;
};

std::vector<Window> make_windows(const Rollout& r, int trunc_len) {
  std::vector<Window> ws;
  const int T = r.length();
  for (size_t e = 0; e < r.episode_starts.size(); ++e) {
    int s = r.episode_starts[e];
    int end = (e + 1 < r.episode_starts.size())
                  ? r.episode_starts[e + 1]
                  : T;
    for (int w = s; w < end; w += trunc_len)
      ws.push_back({w, std::min(trunc_len, end - w)});
  }
  return ws;
}

WindowView make_view(const Rollout& r, const MorphGraph& graph,
                     const Window& w) {
  WindowView v;
  v.graph = &graph;
  const auto& snap = r.snapshot_for(w.start);
  v.h0 = std::span<const double>(snap.data(), snap.size());
  for (int t = w.start; t < w.start + w.len; ++t) {
    v.obs.push_back(r.obs_at(t));
    v.actions.push_back(r.act_at(t));
    v.mu_old.push_back(r.mu_at(t));
    v.sigma_old.push_back(r.sigma_at(t));
  }
  return v;
}

struct BatchLoss {
  double loss = 0, surrogate = 0, value_mse = 0, kl = 0;
  std::vector<std::vector<double>> grads;
};

// Builds the PPO objective window by window, resetting the tape between
// windows so recorded-graph memory is bounded by the truncation length, and
// accumulating gradients across windows. Advantages are normalized by the
// caller.
BatchLoss batch_gradients(const Policy& policy, const MorphGraph& graph,
                          const Rollout& r, std::span<const Window> windows,
                          std::span<const double> adv,
                          std::span<const double> ret, double beta,
                          double value_coef, ad::Tape& tape) {
  auto params = const_cast<Policy&>(policy).params();
  BatchLoss out;
  for (const Tensor* p : params) out.grads.emplace_back(p->d.size(), 0.0);

  double surr_total = 0, kl_total = 0, val_total = 0;
  int n_steps = 0;
  for (const Window& w : windows) n_steps += w.len;
  const double inv = 1.0 / n_steps;

  for (const Window& w : windows) {
    tape.reset();
    std::vector<int> pvars;
    pvars.reserve(params.size());
    for (const Tensor* p : params) pvars.push_back(tape.leaf(*p));

    WindowView view = make_view(r, graph, w);
    WindowVars vars = policy.build_window(tape, view, pvars);
    int surr_sum = -1, kl_sum = -1, val_sum = -1;
    for (int i = 0; i < w.len; ++i) {
      int t = w.start + i;
      int ratio = tape.exp(tape.add_const(vars.logp[i], -r.logp[t]));
      int surr = tape.scale(ratio, adv[t]);
      surr_sum = surr_sum < 0 ? surr : tape.add(surr_sum, surr);
      kl_sum = kl_sum < 0 ? vars.kl[i] : tape.add(kl_sum, vars.kl[i]);
      int verr = tape.square(tape.add_const(vars.value[i], -ret[t]));
      val_sum = val_sum < 0 ? verr : tape.add(val_sum, verr);
    }
    int loss = tape.add(
        tape.add(tape.scale(surr_sum, -inv), tape.scale(kl_sum, beta * inv)),
        tape.scale(val_sum, value_coef * inv));
    tape.backward(loss);

    out.loss += tape.scalar_val(loss);
    surr_total += tape.scalar_val(surr_sum);
    kl_total += tape.scalar_val(kl_sum);
    val_total += tape.scalar_val(val_sum);
    for (size_t pi = 0; pi < pvars.size(); ++pi) {
      auto g = tape.grad(pvars[pi]);
      auto& acc = out.grads[pi];
      for (size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
    }
  }
  out.surrogate = -surr_total * inv;
  out.kl = kl_total * inv;
  out.value_mse = val_total * inv;
  return out;
}

// Advantage normalization: zero mean, unit variance. The statistics depend
// only on stored rollout data, so the objective stays smooth in the params.
void normalize(std::vector<double>& adv) {
  if (adv.size() < 2) return;
  double mean = 0;
  for (double a : adv) mean += a;
  mean /= adv.size();
  double var = 0;
  for (double a : adv) var += (a - mean) * (a - mean);
  var /= adv.size();
  double inv = 1.0 / (std::sqrt(var) + 1e-8);
  for (double& a : adv) a = (a - mean) * inv;
}

}  // namespace

UpdateStats update(Policy& policy, const MorphGraph& graph, const Rollout& r,
                   const PpoConfig& cfg, OptimState& opt, Rng& rng) {
  UpdateStats stats;
  {
    double mr = 0;
    for (double rew : r.rewards) mr += rew;
    stats.mean_reward = r.rewards.empty() ? 0.0 : mr / r.rewards.size();
  }

  std::vector<double> adv, ret;
  advantages(r, cfg.gamma, cfg.lam, adv, ret);
  normalize(adv);

  auto windows = make_windows(r, cfg.trunc_len);
  // Deterministic shuffle.
  for (size_t i = windows.size(); i > 1; --i)
    std::swap(windows[i - 1], windows[rng.uniform_int(static_cast<int>(i))]);

  const int nmb = std::max(1, std::min<int>(cfg.minibatches_per_epoch,
                                            static_cast<int>(windows.size())));
  ad::Tape tape;
  auto params = policy.params();
  for (int b = 0; b < nmb; ++b) {
    size_t lo = windows.size() * b / nmb;
    size_t hi = windows.size() * (b + 1) / nmb;
    if (lo == hi) continue;
    tape.reset();
    BatchLoss bl = batch_gradients(
        policy, graph, r, std::span<const Window>(&windows[lo], hi - lo), adv,
        ret, opt.beta, cfg.value_coef, tape);
    bool finite = std::isfinite(bl.loss);
    for (const auto& g : bl.grads)
      for (double x : g)
        if (!std::isfinite(x)) finite = false;
    if (!finite) {
      opt.lr *= 0.5;
      ++opt.divergence_events;
      ++stats.skipped_steps;
      continue;
    }
    opt.adam.step(params, bl.grads, opt.lr);
    policy.project_params();
    stats.surrogate_loss = bl.surrogate;
    stats.value_loss = bl.value_mse;
  }
  stats.peak_tape_doubles = tape.peak_doubles();

  // Post-pass KL measured over the whole batch with the fast path, replaying
  // each window from its stored hidden snapshot.
  {
    double kl_sum = 0;
    int n = 0;
    std::vector<double> hidden, mu, sigma;
    auto ordered = make_windows(r, cfg.trunc_len);
    for (const Window& w : ordered) {
      const auto& snap = r.snapshot_for(w.start);
      hidden.assign(snap.begin(), snap.end());
      for (int t = w.start; t < w.start + w.len; ++t) {
        double value = 0;
        policy.forward(graph, r.obs_at(t), hidden, mu, sigma, value);
        kl_sum += gaussian_kl(mu, sigma, r.mu_at(t), r.sigma_at(t));
        ++n;
      }
    }
    stats.kl = n > 0 ? kl_sum / n : 0.0;
  }
  if (stats.kl > 2.0 * cfg.kl_target)
    opt.beta *= 1.5;
  else if (stats.kl < cfg.kl_target / 2.0)
    opt.beta /= 1.5;
  stats.beta = opt.beta;
  return stats;
}

GradResult compute_gradients(const Policy& policy, const MorphGraph& graph,
                             const Rollout& r, const PpoConfig& cfg,
                             double beta) {
  std::vector<double> adv, ret;
  advantages(r, cfg.gamma, cfg.lam, adv, ret);
  normalize(adv);
  auto windows = make_windows(r, cfg.trunc_len);
  ad::Tape tape;
  BatchLoss bl = batch_gradients(policy, graph, r, windows, adv, ret, beta,
                                 cfg.value_coef, tape);
  GradResult out;
  out.loss = bl.loss;
  out.grads = std::move(bl.grads);
  out.peak_tape_doubles = tape.peak_doubles();
  out.tape_nodes = tape.node_count();
  return out;
}

}  // namespace gevo
