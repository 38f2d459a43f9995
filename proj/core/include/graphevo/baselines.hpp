#pragma once

#include <memory>
#include <string>

#include "graphevo/fcnet.hpp"
#include "graphevo/nervenet.hpp"
#include "graphevo/species.hpp"

namespace gevo {

/// Search methods sharing the evolution loop. Each fixes a policy family, a
/// parameter inheritance rule and a candidate pruning rule.
enum class Method { NGE, RGS, ESS_SIMS, ESS_SIMS_AF, ESS_GMUC, ESS_BODYSHARE };

const char* to_string(Method m);
Method method_from_string(const std::string& s);

struct MethodTraits {
  bool gnn_policy = true;       // GNN family vs fully connected
  bool gnn_messages = true;     // false: ESS-BodyShare (no propagation)
  bool share_any_topology = false;   // reuse params across any mutation
  bool share_same_topology = false;  // reuse only when topology unchanged
  bool restart_every_generation = false;  // ESS-Sims: no amortization at all
  bool thompson_pruning = false;     // surrogate-guided candidate pruning
  bool evolves = true;               // false: RGS (independent random graphs)
};

MethodTraits traits_of(Method m, bool use_gmuc);

/// Fresh policy of the method's family for the given graph.
std::unique_ptr<Policy> make_policy(Method m, const MorphGraph& g,
                                    const GnnConfig& gnn, const FcConfig& fc,
                                    Rng& rng);

/// Child controller per the method's inheritance rule: parent tensors copied
/// verbatim where the rule allows, fresh initialization otherwise.
struct Inherited {
  std::unique_ptr<Policy> policy;
  OptimState opt;
  bool reused = false;
};
Inherited inherit(Method m, bool use_gmuc, const Species& parent,
                  const MorphGraph& child_graph, const GnnConfig& gnn,
                  const FcConfig& fc, double beta_init, double lr, Rng& rng);

}  // namespace gevo
