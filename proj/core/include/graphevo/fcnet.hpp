#pragma once

#include "graphevo/policy.hpp"

namespace gevo {

struct FcConfig {
  int hidden = 64;  // width of each of the three hidden layers
  int obs_width = 6;

  bool operator==(const FcConfig&) const = default;
};

/// Baseline controller: a 3-hidden-layer tanh perceptron over the
/// concatenated per-node observations, with a parallel value trunk and a
/// per-output-slot log-std. Input and output widths depend on the graph, so
/// its weights are not transferable across topology changes.
class FcPolicy final : public Policy {
 public:
  FcPolicy(const FcConfig& cfg, const MorphGraph& g);
  FcPolicy(const FcConfig& cfg, int input_width, int n_act);

  std::unique_ptr<Policy> clone() const override;
  const char* kind() const override { return "fc"; }

  std::vector<Tensor*> params() override;
  std::vector<const Tensor*> params() const override;
  std::vector<TensorShape> shape_manifest() const override;

  int action_dim(const MorphGraph&) const override { return n_act_; }
  int hidden_size(const MorphGraph&) const override { return 0; }

  void forward(const MorphGraph& g, std::span<const double> obs,
               std::span<double> hidden, std::vector<double>& mu,
               std::vector<double>& sigma, double& value) const override;

  WindowVars build_window(ad::Tape& tape, const WindowView& w,
                          const std::vector<int>& param_vars) const override;

  void project_params() override;
  void init_params(Rng& rng) override;

  const FcConfig& config() const { return cfg_; }
  int input_width() const { return in_; }

  FcConfig cfg_;
  int in_ = 0;
  int n_act_ = 0;
  Tensor pw1, pb1, pw2, pb2, pw3, pb3, pow_, pob, log_std;
  Tensor vw1, vb1, vw2, vb2, vw3, vb3, vow, vob;
};

}  // namespace gevo
