#pragma once

#include "graphevo/policy.hpp"

namespace gevo {

struct GnnConfig {
  int d_h = 64;    // per-node hidden state size
  int d_obs = 32;  // observation embedding width
  int d_attr = 32; // attribute embedding width
  int T = 3;       // internal propagation rounds per timestep
  int obs_width = 6;
  // ESS-BodyShare ablation: per-node input/output models with the message
  // propagation removed (aggregated message is zero).
  bool messages = true;

  bool operator==(const GnnConfig&) const = default;
};

/// Graph-structured policy/value network: per-node observation and attribute
/// embeddings, linear messages aggregated by summation, GRU state update,
/// one Gaussian controller per non-root node (shared state-independent
/// log-std), and a mean-pooled value head. All parameter shapes depend only
/// on the embedding sizes, never on the graph, which is what makes weight
/// reuse across mutated bodies legal.
class GnnPolicy final : public Policy {
 public:
  explicit GnnPolicy(const GnnConfig& cfg);

  std::unique_ptr<Policy> clone() const override;
  const char* kind() const override { return cfg_.messages ? "gnn" : "gnn_nomsg"; }

  std::vector<Tensor*> params() override;
  std::vector<const Tensor*> params() const override;
  std::vector<TensorShape> shape_manifest() const override;

  int action_dim(const MorphGraph& g) const override {
    return g.node_count() - 1;
  }
  int hidden_size(const MorphGraph& g) const override {
    return g.node_count() * cfg_.d_h;
  }

  void forward(const MorphGraph& g, std::span<const double> obs,
               std::span<double> hidden, std::vector<double>& mu,
               std::vector<double>& sigma, double& value) const override;

  WindowVars build_window(ad::Tape& tape, const WindowView& w,
                          const std::vector<int>& param_vars) const override;

  void project_params() override;
  void init_params(Rng& rng) override;

  const GnnConfig& config() const { return cfg_; }

  /// Per-node embedding input: attributes scaled to O(1).
  static std::array<double, 5> attr_input(const NodeAttr& a);

  // Embedding-only helpers used by tests.
  void embed_obs(std::span<const double> o, std::span<double> out) const;
  void embed_attr(const NodeAttr& a, std::span<double> out) const;

  /// Spec checkpoint format: u32 little-endian header (d_h, d_obs, d_attr,
  /// version) followed by a flat little-endian f64 dump of every tensor in
  /// declared order. Bit-exact round trip.
  void save_checkpoint(const std::string& path) const;
  static GnnPolicy load_checkpoint(const std::string& path);

  GnnConfig cfg_;
  // Declared parameter order (checkpoint order).
  Tensor phi_w1, phi_b1, phi_w2, phi_b2;
  Tensor zeta_w1, zeta_b1, zeta_w2, zeta_b2;
  Tensor msg_w, msg_b;
  Tensor gru_wz, gru_uz, gru_bz;
  Tensor gru_wr, gru_ur, gru_br;
  Tensor gru_wn, gru_un, gru_bn;
  Tensor mu_w, mu_b, log_std;
  Tensor val_w, val_b;
};

/// Loads tensors from a spec-format checkpoint into an existing policy,
/// verifying the header dims against the policy's config.
void load_gnn_tensors(GnnPolicy& p, const std::string& path);

}  // namespace gevo
