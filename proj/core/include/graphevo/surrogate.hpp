#pragma once

#include <vector>

#include "graphevo/morphology.hpp"
#include "graphevo/ppo.hpp"
#include "graphevo/rng.hpp"
#include "graphevo/tensor.hpp"

namespace gevo {

struct SurrogateConfig {
  int d_s = 32;  // hidden/embedding width
  int T = 3;     // propagation rounds
  double dropout_rate = 0.5;
  int fit_epochs = 100;
  double lr = 1e-3;
  int minibatch = 32;
  // Regression window: train on samples observed in the most recent
  // `fit_window` generations (0 = full history).
  int fit_window = 0;
  // Optional softmax sampling over masked scores instead of hard top-K;
  // 0 keeps the deterministic top-K rule.
  double prune_temperature = 0.0;

  bool operator==(const SurrogateConfig&) const = default;
};

struct SurrogateSample {
  MorphGraph graph;
  double fitness = 0;
  int generation = 0;
};

/// Inverted-dropout gate over the readout perceptron inputs: entries are 0
/// (dropped) or 1/(1-rate).
struct DropoutMask {
  std::vector<double> gate;
};

/// Fitness-regression GNN over morphologies. Node inputs are attribute
/// embeddings only; propagation mirrors the policy network (sum-aggregated
/// linear messages, GRU update); the readout mean-pools hidden states through
/// a two-layer perceptron whose inputs are dropout-gated.
class SurrogateModel {
 public:
  explicit SurrogateModel(const SurrogateConfig& cfg = {});

  void init_params(Rng& rng);
  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;

  /// Forward pass; a null mask means no gating (inference expectation).
  double predict(const MorphGraph& g, const DropoutMask* mask = nullptr) const;

  DropoutMask sample_mask(Rng& rng) const;

  void add_sample(const MorphGraph& g, double fitness, int generation);
  const std::vector<SurrogateSample>& dataset() const { return data_; }

  /// Minimizes the L2 regression loss with dropout active; returns the
  /// per-epoch full-dataset loss (evaluated without dropout).
  std::vector<double> fit(Rng& rng);

  const SurrogateConfig& config() const { return cfg_; }

  SurrogateConfig cfg_;
  // zeta': attribute embedding (5 -> d_s -> d_s).
  Tensor zw1, zb1, zw2, zb2;
  Tensor mw, mb;
  Tensor wz, uz, bz, wr, ur, br, wn, un, bn;
  // readout: pool -> fc1 -> tanh -> fc2 -> scalar.
  Tensor f1w, f1b, f2w, f2b;
  // Target standardization fitted from the dataset.
  double t_mean = 0.0, t_std = 1.0;
  Adam adam;

 private:
  int record_graph(ad::Tape& tape, const MorphGraph& g,
                   const std::vector<int>& pvars,
                   const std::vector<double>* gate) const;
  std::vector<SurrogateSample> data_;
};

/// Top-K candidate indices by predicted fitness, ties broken by lower index;
/// returned in ascending index order.
std::vector<int> prune_greedy(const SurrogateModel& m,
                              const std::vector<MorphGraph>& candidates,
                              int keep);

/// Draws ONE dropout mask, ranks every candidate under it, keeps the top K
/// (or softmax-samples K when prune_temperature > 0).
std::vector<int> prune_thompson(const SurrogateModel& m,
                                const std::vector<MorphGraph>& candidates,
                                int keep, Rng& rng);

}  // namespace gevo
