#include "graphevo/baselines.hpp"

#include <stdexcept>

namespace gevo {

const char* to_string(Method m) {
  switch (m) {
    case Method::NGE: return "nge";
    case Method::RGS: return "rgs";
    case Method::ESS_SIMS: return "ess-sims";
    case Method::ESS_SIMS_AF: return "ess-sims-af";
    case Method::ESS_GMUC: return "ess-gm-uc";
    case Method::ESS_BODYSHARE: return "ess-bodyshare";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "nge") return Method::NGE;
  if (s == "rgs") return Method::RGS;
  if (s == "ess-sims") return Method::ESS_SIMS;
  if (s == "ess-sims-af") return Method::ESS_SIMS_AF;
  if (s == "ess-gm-uc" || s == "ess-gmuc") return Method::ESS_GMUC;
  if (s == "ess-bodyshare") return Method::ESS_BODYSHARE;
  throw std::runtime_error("unknown method: " + s);
}

MethodTraits traits_of(Method m, bool use_gmuc) {
  MethodTraits t;
  switch (m) {
    case Method::NGE:
      t.share_any_topology = true;
      t.thompson_pruning = use_gmuc;
      break;
    case Method::RGS:
      t.gnn_policy = false;
      t.evolves = false;
      break;
    case Method::ESS_SIMS:
      t.gnn_policy = false;
      t.restart_every_generation = true;
      break;
    case Method::ESS_SIMS_AF:
      t.gnn_policy = false;
      t.share_same_topology = true;
      break;
    case Method::ESS_GMUC:
      t.gnn_policy = false;
      t.share_same_topology = true;
      t.thompson_pruning = true;
      break;
    case Method::ESS_BODYSHARE:
      t.gnn_messages = false;
      t.share_any_topology = true;
      break;
  }
  return t;
}

std::unique_ptr<Policy> make_policy(Method m, const MorphGraph& g,
                                    const GnnConfig& gnn, const FcConfig& fc,
                                    Rng& rng) {
  MethodTraits t = traits_of(m, false);
  std::unique_ptr<Policy> p;
  if (t.gnn_policy) {
    GnnConfig cfg = gnn;
    cfg.messages = t.gnn_messages;
    p = std::make_unique<GnnPolicy>(cfg);
  } else {
    p = std::make_unique<FcPolicy>(fc, g);
  }
  p->init_params(rng);
  return p;
}

Inherited inherit(Method m, bool use_gmuc, const Species& parent,
                  const MorphGraph& child_graph, const GnnConfig& gnn,
                  const FcConfig& fc, double beta_init, double lr, Rng& rng) {
  MethodTraits t = traits_of(m, use_gmuc);
  Inherited out;
  bool reuse = false;
  if (t.share_any_topology) {
    reuse = true;
  } else if (t.share_same_topology) {
    reuse = same_topology(parent.graph, child_graph);
  }
  if (reuse && parent.policy) {
    out.policy = parent.policy->clone();
    out.opt = parent.opt;
    out.reused = true;
  } else {
    out.policy = make_policy(m, child_graph, gnn, fc, rng);
    out.opt = OptimState{};
    out.opt.beta = beta_init;
    out.opt.lr = lr;
  }
  return out;
}

}  // namespace gevo
