#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "graphevo/morphology.hpp"
#include "graphevo/rng.hpp"
#include "graphevo/tape.hpp"
#include "graphevo/tensor.hpp"

namespace gevo {

/// One truncation window of rollout data, viewed per timestep.
struct WindowView {
  const MorphGraph* graph = nullptr;
  std::span<const double> h0;  // hidden state at the window start (constant)
  std::vector<std::span<const double>> obs;        // per step: |V|*obs_width
  std::vector<std::span<const double>> actions;    // per step: n_act
  std::vector<std::span<const double>> mu_old;     // per step: n_act
  std::vector<std::span<const double>> sigma_old;  // per step: n_act
  int steps() const { return static_cast<int>(obs.size()); }
};

/// Tape variable ids produced for one window, one entry per timestep.
struct WindowVars {
  std::vector<int> logp;   // log pi(a_t | s_t) under current params
  std::vector<int> value;  // V(s_t)
  std::vector<int> kl;     // KL[new || old] at s_t
};

/// Stochastic Gaussian policy with (possibly empty) recurrent hidden state.
/// Parameter tensors are exposed in a stable declared order; gradients and
/// optimizer state follow that order.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::unique_ptr<Policy> clone() const = 0;
  virtual const char* kind() const = 0;

  virtual std::vector<Tensor*> params() = 0;
  virtual std::vector<const Tensor*> params() const = 0;
  virtual std::vector<TensorShape> shape_manifest() const = 0;

  virtual int action_dim(const MorphGraph& g) const = 0;
  /// Number of doubles of per-episode recurrent state (0 for feedforward).
  virtual int hidden_size(const MorphGraph& g) const = 0;

  /// One environment timestep: consumes per-node observations, updates
  /// `hidden` in place, produces the action distribution and value estimate.
  virtual void forward(const MorphGraph& g, std::span<const double> obs,
                       std::span<double> hidden, std::vector<double>& mu,
                       std::vector<double>& sigma, double& value) const = 0;

  /// Records the same computation on the tape over a window, with the
  /// window-start hidden state treated as a constant (stop-gradient).
  /// `param_vars` are tape leaves created from params() in declared order.
  virtual WindowVars build_window(ad::Tape& tape, const WindowView& w,
                                  const std::vector<int>& param_vars) const = 0;

  /// Re-establishes parameter invariants after an optimizer step
  /// (e.g. log-std clamping).
  virtual void project_params() {}

  /// Fresh random initialization of all tensors.
  virtual void init_params(Rng& rng) = 0;
};

/// Closed-form diagonal Gaussian log density.
double gaussian_logp(std::span<const double> a, std::span<const double> mu,
                     std::span<const double> sigma);

/// KL[N(mu1,s1) || N(mu0,s0)] summed over dimensions.
double gaussian_kl(std::span<const double> mu1, std::span<const double> s1,
                   std::span<const double> mu0, std::span<const double> s0);

inline constexpr double kLogStdMin = -4.605170185988091;  // log 0.01
inline constexpr double kLogStdMax = 0.6931471805599453;  // log 2

/// Fixed observation squash applied by every policy before embedding:
/// near-identity for small signals, bounded for large velocities so the
/// tanh embeddings never saturate.
inline double squash_obs(double v) { return 5.0 * std::tanh(v / 5.0); }

}  // namespace gevo
