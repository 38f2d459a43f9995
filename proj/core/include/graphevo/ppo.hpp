#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "graphevo/env.hpp"
#include "graphevo/policy.hpp"
#include "graphevo/rng.hpp"

namespace gevo {

struct PpoConfig {
  double gamma = 0.99;
  double lam = 0.95;  // GAE parameter
  double kl_target = 0.01;
  double beta_init = 1.0;
  int timesteps_per_update = 2000;
  int epochs_per_generation = 10;
  int minibatches_per_epoch = 4;
  double learning_rate = 3e-4;
  int trunc_len = 20;  // BPTT truncation window (timesteps)
  double value_coef = 0.5;
  // Rewards are multiplied by this factor for training (value regression
  // targets stay O(1-ish)); episode returns are reported in env units.
  double reward_scale = 1.0;
};

/// One batch of on-policy experience. Hidden-state snapshots are stored at
/// every truncation boundary within each episode so updates can replay
/// windows with a stop-gradient at the window start.
struct Rollout {
  int n_nodes = 0, obs_width = 0, n_act = 0;
  int snapshot_every = 0;
  double reward_scale = 1.0;  // rewards below are pre-scaled by this

  std::vector<double> obs;      // T x (n_nodes * obs_width)
  std::vector<double> actions;  // T x n_act
  std::vector<double> mu;       // T x n_act (behavior means)
  std::vector<double> sigma;    // T x n_act (behavior stds)
  std::vector<double> logp;     // T
  std::vector<double> rewards;  // T
  std::vector<double> values;   // T
  std::vector<uint8_t> done;    // T (episode ended after step t)
  double final_next_value = 0;  // bootstrap for a truncated final episode

  std::vector<int> episode_starts;             // ascending step indices
  std::vector<BodyState> episode_init_states;  // for replay checks

  std::vector<int> snapshot_t;                  // step indices, ascending
  std::vector<std::vector<double>> snapshot_h;  // hidden blobs

  int length() const { return static_cast<int>(rewards.size()); }
  std::span<const double> obs_at(int t) const;
  std::span<const double> act_at(int t) const;
  std::span<const double> mu_at(int t) const;
  std::span<const double> sigma_at(int t) const;
  const std::vector<double>& snapshot_for(int t) const;

  /// Mean undiscounted return over the episode segments of this batch
  /// (trailing partial segment included).
  double mean_episode_return() const;
};

/// Runs the stochastic policy for exactly `n_timesteps` steps, resetting
/// episodes at termination or horizon. Hidden state persists within an
/// episode and is zeroed at each episode start.
Rollout collect(const Env& env, const Policy& policy, int n_timesteps,
                int snapshot_every, Rng& rng, double reward_scale = 1.0);

/// GAE(lambda), truncated at episode ends. `returns` = advantages + values.
void advantages(const Rollout& r, double gamma, double lam,
                std::vector<double>& adv, std::vector<double>& ret);

/// Adam with bias correction:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  t <- t+1
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
struct Adam {
  double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::vector<std::vector<double>> m, v;

  void ensure(const std::vector<Tensor*>& params);
  void step(const std::vector<Tensor*>& params,
            const std::vector<std::vector<double>>& grads, double lr);
};

/// Per-policy optimizer state carried across updates (and generations).
struct OptimState {
  double beta = 1.0;
  double lr = 3e-4;
  Adam adam;
  int divergence_events = 0;
};

struct UpdateStats {
  double mean_reward = 0;
  double kl = 0;
  double surrogate_loss = 0;
  double value_loss = 0;
  double beta = 0;
  size_t peak_tape_doubles = 0;
  int skipped_steps = 0;
};

/// One PPO epoch: maximizes mean(A_t * ratio_t) - beta * KL[new||old] minus
/// the value regression loss, over minibatches of truncation windows, then
/// adapts beta from the measured KL.
UpdateStats update(Policy& policy, const MorphGraph& graph, const Rollout& r,
                   const PpoConfig& cfg, OptimState& opt, Rng& rng);

struct GradResult {
  double loss = 0;
  std::vector<std::vector<double>> grads;  // params order
  size_t peak_tape_doubles = 0;
  size_t tape_nodes = 0;
};

/// Single full-batch gradient of the PPO objective (no optimizer step);
/// windows of `trunc_len` with stop-gradient at window starts. Used by the
/// gradient-fidelity and truncation-equivalence checks.
GradResult compute_gradients(const Policy& policy, const MorphGraph& graph,
                             const Rollout& r, const PpoConfig& cfg,
                             double beta);

}  // namespace gevo
