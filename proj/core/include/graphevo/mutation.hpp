#pragma once

#include <array>
#include <optional>
#include <string>

#include "graphevo/morphology.hpp"
#include "graphevo/rng.hpp"

namespace gevo {

enum class MutationKind { AddNode, AddGraph, DelGraph, PertGraph };

const char* to_string(MutationKind k);

/// Per-attribute Gaussian perturbation scales, in attribute units.
struct PertSigma {
  double geom_a = 0.035;
  double geom_b = 0.018;
  double attach_angle = 0.6283185307179586;
  double joint_range = 0.12;
  double joint_gear = 29.0;

  /// 10% of each range width of the given space.
  static PertSigma defaults_for(const AttrSpace& space);
};

struct MutationConfig {
  double p_add_node = 0.15;
  double p_add_graph = 0.15;
  double p_del_graph = 0.15;
  double p_pert_graph = 0.55;
  PertSigma pert_sigma;
  bool mirror_on_add_graph = true;
  // Attributes-only fine-tuning: forces the effective distribution (0,0,0,1).
  bool constrained_mode = false;

  std::array<double, 4> effective_probs() const;
};

/// Appends one new leaf with uniformly sampled attributes to a uniformly
/// sampled node. Returns nullopt when the graph is at max_nodes.
std::optional<MorphGraph> add_node(const MorphGraph& g, const AttrSpace& space,
                                   Rng& rng);

/// Deep-copies a uniformly sampled subtree onto a uniformly sampled placement
/// node. With `mirror`, the copied root's attach_angle sign is flipped with
/// probability 0.5. Returns nullopt when no subtree fits under max_nodes.
std::optional<MorphGraph> add_graph(const MorphGraph& g, const AttrSpace& space,
                                    bool mirror, Rng& rng);

/// Removes a uniformly sampled non-root subtree. Returns nullopt on a
/// singleton graph.
std::optional<MorphGraph> del_graph(const MorphGraph& g, Rng& rng);

/// Adds independent Gaussian noise to every attribute of every node in a
/// uniformly sampled subtree, then clamps to the attribute space. Topology
/// unchanged. Always succeeds.
MorphGraph pert_graph(const MorphGraph& g, const AttrSpace& space,
                      const PertSigma& sigma, Rng& rng);

struct MutationResult {
  MorphGraph graph;
  MutationKind kind;
};

/// Samples a primitive by the configured probabilities and applies it,
/// resampling among the remaining feasible primitives on capacity/no-op
/// failures. Output is always valid and canonical.
MutationResult mutate(const MorphGraph& g, const MutationConfig& cfg,
                      const AttrSpace& space, Rng& rng);

}  // namespace gevo
