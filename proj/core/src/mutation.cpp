#include "graphevo/mutation.hpp"

#include <algorithm>
#include <cmath>

namespace gevo {

const char* to_string(MutationKind k) {
  switch (k) {
    case MutationKind::AddNode: return "add_node";
    case MutationKind::AddGraph: return "add_graph";
    case MutationKind::DelGraph: return "del_graph";
    case MutationKind::PertGraph: return "pert_graph";
  }
  return "?";
}

PertSigma PertSigma::defaults_for(const AttrSpace& space) {
  PertSigma s;
  s.geom_a = 0.1 * space.geom_a.width();
  s.geom_b = 0.1 * space.geom_b.width();
  s.attach_angle = 0.1 * space.attach_angle.width();
  s.joint_range = 0.1 * space.joint_range.width();
  s.joint_gear = 0.1 * space.joint_gear.width();
  return s;
}

std::array<double, 4> MutationConfig::effective_probs() const {
  if (constrained_mode) return {0.0, 0.0, 0.0, 1.0};
  return {p_add_node, p_add_graph, p_del_graph, p_pert_graph};
}

std::optional<MorphGraph> add_node(const MorphGraph& g, const AttrSpace& space,
                                   Rng& rng) {
  if (g.node_count() >= space.max_nodes) return std::nullopt;
  int place = g.nodes[rng.uniform_int(g.node_count())].id;
  MorphGraph out = g;
  int new_id = 0;
  for (const auto& n : g.nodes) new_id = std::max(new_id, n.id + 1);
  out.nodes.push_back({new_id, space.sample(rng)});
  out.edges.emplace_back(place, new_id);
  return canonicalize(out);
}

std::optional<MorphGraph> add_graph(const MorphGraph& g, const AttrSpace& space,
                                    bool mirror, Rng& rng) {
  // Feasible subtree roots: copied subtree must fit under max_nodes.
  int budget = space.max_nodes - g.node_count();
  if (budget < 1) return std::nullopt;
  std::vector<int> feasible;
  for (const auto& n : g.nodes)
    if (static_cast<int>(g.subtree_ids(n.id).size()) <= budget)
      feasible.push_back(n.id);
  if (feasible.empty()) return std::nullopt;

  int src = feasible[rng.uniform_int(static_cast<int>(feasible.size()))];
  int place = g.nodes[rng.uniform_int(g.node_count())].id;
  bool flip = mirror && rng.uniform() < 0.5;

  auto sub = g.subtree_ids(src);

  MorphGraph out = g;
  int next_id = 0;
  for (const auto& n : g.nodes) next_id = std::max(next_id, n.id + 1);

  std::vector<int> copy_id(sub.size());
  for (size_t i = 0; i < sub.size(); ++i) {
    NodeAttr a = g.attr_of(sub[i]);
    if (i == 0 && flip) a.attach_angle = -a.attach_angle;
    copy_id[i] = next_id;
    out.nodes.push_back({next_id++, a});
  }
  // Reattach copied internal edges; copied root hangs off the placement node.
  for (size_t i = 0; i < sub.size(); ++i) {
    if (i == 0) {
      out.edges.emplace_back(place, copy_id[0]);
      continue;
    }
    int p = -1;
    for (auto [pp, cc] : g.edges)
      if (cc == sub[i]) {
        p = pp;
        break;
      }
    auto it = std::find(sub.begin(), sub.end(), p);
    out.edges.emplace_back(copy_id[it - sub.begin()], copy_id[i]);
  }
  return canonicalize(out);
}

std::optional<MorphGraph> del_graph(const MorphGraph& g, Rng& rng) {
  if (g.node_count() < 2) return std::nullopt;
  std::vector<int> non_root;
  for (const auto& n : g.nodes)
    if (n.id != g.root_id) non_root.push_back(n.id);
  int victim = non_root[rng.uniform_int(static_cast<int>(non_root.size()))];
  auto doomed = g.subtree_ids(victim);

  MorphGraph out;
  out.root_id = g.root_id;
  auto gone = [&](int id) {
    return std::find(doomed.begin(), doomed.end(), id) != doomed.end();
  };
  for (const auto& n : g.nodes)
    if (!gone(n.id)) out.nodes.push_back(n);
  for (auto [p, c] : g.edges)
    if (!gone(p) && !gone(c)) out.edges.emplace_back(p, c);
  return canonicalize(out);
}

MorphGraph pert_graph(const MorphGraph& g, const AttrSpace& space,
                      const PertSigma& sigma, Rng& rng) {
  int src = g.nodes[rng.uniform_int(g.node_count())].id;
  auto sub = g.subtree_ids(src);
  MorphGraph out = g;
  for (auto& n : out.nodes) {
    if (std::find(sub.begin(), sub.end(), n.id) == sub.end()) continue;
    NodeAttr a = n.attr;
    a.geom_a += sigma.geom_a * rng.normal();
    a.geom_b += sigma.geom_b * rng.normal();
    a.attach_angle += sigma.attach_angle * rng.normal();
    a.joint_range += sigma.joint_range * rng.normal();
    a.joint_gear += sigma.joint_gear * rng.normal();
    n.attr = space.clamp(a);
  }
  return canonicalize(out);
}

MutationResult mutate(const MorphGraph& g, const MutationConfig& cfg,
                      const AttrSpace& space, Rng& rng) {
  auto probs = cfg.effective_probs();
  std::array<bool, 4> alive{true, true, true, true};
  for (int attempt = 0; attempt < 8; ++attempt) {
    double total = 0;
    for (int i = 0; i < 4; ++i)
      if (alive[i]) total += probs[i];
    int pick = 3;
    if (total > 0) {
      double r = rng.uniform() * total;
      double acc = 0;
      for (int i = 0; i < 4; ++i) {
        if (!alive[i]) continue;
        acc += probs[i];
        if (r < acc) {
          pick = i;
          break;
        }
      }
    }
    std::optional<MorphGraph> res;
    switch (pick) {
      case 0: res = add_node(g, space, rng); break;
      case 1: res = add_graph(g, space, cfg.mirror_on_add_graph, rng); break;
      case 2: res = del_graph(g, rng); break;
      case 3: res = pert_graph(g, space, cfg.pert_sigma, rng); break;
    }
    if (res) return {std::move(*res), static_cast<MutationKind>(pick)};
    alive[pick] = false;
    if (!alive[0] && !alive[1] && !alive[2]) {
      // Perturbation is always feasible.
      return {pert_graph(g, space, cfg.pert_sigma, rng),
              MutationKind::PertGraph};
    }
  }
  return {pert_graph(g, space, cfg.pert_sigma, rng), MutationKind::PertGraph};
}

}  // namespace gevo
