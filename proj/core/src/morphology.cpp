#include "graphevo/morphology.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <deque>
#include <map>
#include <numeric>
#include <set>

#include "graphevo/rng.hpp"
#include "json.hpp"

namespace gevo {

NodeAttr AttrSpace::sample(Rng& rng) const {
  NodeAttr a;
  a.geom_a = rng.uniform(geom_a.lo, geom_a.hi);
  a.geom_b = rng.uniform(geom_b.lo, geom_b.hi);
  if (a.geom_b > a.geom_a) a.geom_b = a.geom_a;
  a.attach_angle = rng.uniform(attach_angle.lo, attach_angle.hi);
  a.joint_range = rng.uniform(joint_range.lo, joint_range.hi);
  a.joint_gear = rng.uniform(joint_gear.lo, joint_gear.hi);
  return a;
}

NodeAttr AttrSpace::clamp(const NodeAttr& in) const {
  NodeAttr a;
  a.geom_a = geom_a.clamp(in.geom_a);
  a.geom_b = geom_b.clamp(in.geom_b);
  if (a.geom_b > a.geom_a) a.geom_b = a.geom_a;
  a.attach_angle = attach_angle.clamp(in.attach_angle);
  a.joint_range = joint_range.clamp(in.joint_range);
  a.joint_gear = joint_gear.clamp(in.joint_gear);
  return a;
}

bool AttrSpace::contains(const NodeAttr& a) const {
  return geom_a.contains(a.geom_a) && geom_b.contains(a.geom_b) &&
         attach_angle.contains(a.attach_angle) &&
         joint_range.contains(a.joint_range) &&
         joint_gear.contains(a.joint_gear);
}

int MorphGraph::index_of(int id) const {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

const NodeAttr& MorphGraph::attr_of(int id) const {
  int i = index_of(id);
  if (i < 0) throw GraphError("unknown node id " + std::to_string(id));
  return nodes[i].attr;
}

std::vector<std::vector<int>> MorphGraph::children_by_id() const {
  std::vector<std::vector<int>> ch(nodes.size());
  for (auto [p, c] : edges)
    if (p >= 0 && p < node_count()) ch[p].push_back(c);
  return ch;
}

std::vector<int> MorphGraph::parent_by_id() const {
  std::vector<int> par(nodes.size(), -1);
  for (auto [p, c] : edges)
    if (c >= 0 && c < node_count()) par[c] = p;
  return par;
}

std::vector<int> MorphGraph::subtree_ids(int id) const {
  auto ch = children_by_id();
  std::vector<int> out;
  std::deque<int> q{id};
  while (!q.empty()) {
    int u = q.front();
    q.pop_front();
    out.push_back(u);
    for (int c : ch[u]) q.push_back(c);
  }
  return out;
}

MorphGraph MorphGraph::single_node(const NodeAttr& a) {
  MorphGraph g;
  g.nodes.push_back({0, a});
  g.root_id = 0;
  return g;
}

namespace {

struct UnionFind {
  std::vector<int> p;
  explicit UnionFind(int n) : p(n) { std::iota(p.begin(), p.end(), 0); }
  int find(int x) { return p[x] == x ? x : p[x] = find(p[x]); }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    p[a] = b;
    return true;
  }
};

std::string edge_str(std::pair<int, int> e) {
  return "(" + std::to_string(e.first) + "," + std::to_string(e.second) + ")";
}

}  // namespace

ValidityReport validate(const MorphGraph& g, const AttrSpace& space) {
  ValidityReport rep;
  auto violate = [&](std::string msg) {
    rep.ok = false;
    rep.violations.push_back(std::move(msg));
  };

  if (g.nodes.empty()) {
    violate("graph has no nodes");
    return rep;
  }
  if (g.node_count() > space.max_nodes)
    violate("node count " + std::to_string(g.node_count()) +
            " exceeds max_nodes " + std::to_string(space.max_nodes));

  std::set<int> ids;
  for (const auto& n : g.nodes) {
    if (!ids.insert(n.id).second)
      violate("duplicate node id " + std::to_string(n.id));
  }
  if (!ids.count(g.root_id))
    violate("root_id " + std::to_string(g.root_id) + " is not a node");

  // Attribute invariants.
  for (const auto& n : g.nodes) {
    if (!space.contains(n.attr))
      violate("node " + std::to_string(n.id) + ": attribute out of bounds");
    if (!(n.attr.geom_b > 0.0) || n.attr.geom_a < n.attr.geom_b)
      violate("node " + std::to_string(n.id) +
              ": attribute order (requires geom_a >= geom_b > 0)");
  }

  // Edge structure: every edge references known ids, no self loops, each
  // child has exactly one parent, root has none, no cycles, connected.
  if (static_cast<int>(g.edges.size()) != g.node_count() - 1)
    violate("edge count " + std::to_string(g.edges.size()) +
            " does not equal |V|-1");

  std::map<int, int> idx;
  for (size_t i = 0; i < g.nodes.size(); ++i) idx[g.nodes[i].id] = (int)i;

  std::map<int, int> parent_count;
  UnionFind uf(g.node_count());
  bool structure_usable = true;
  for (auto e : g.edges) {
    auto [p, c] = e;
    if (!idx.count(p) || !idx.count(c)) {
      violate("edge " + edge_str(e) + " references unknown node");
      structure_usable = false;
      continue;
    }
    if (p == c) violate("self loop at node " + std::to_string(p));
    if (++parent_count[c] > 1)
      violate("node " + std::to_string(c) + " has multiple parents");
    if (c == g.root_id) violate("root has parent edge " + edge_str(e));
    if (!uf.unite(idx[p], idx[c])) violate("cycle closed by edge " + edge_str(e));
  }

  if (structure_usable && ids.count(g.root_id)) {
    int root_comp = uf.find(idx[g.root_id]);
    for (const auto& n : g.nodes)
      if (uf.find(idx.at(n.id)) != root_comp)
        violate("node " + std::to_string(n.id) + " unreachable from root");
  }
  return rep;
}

namespace {

// Structural signature used to order children deterministically: attributes
// byte-for-byte plus recursively sorted child signatures (AHU-style), so any
// relabeling of an isomorphic graph canonicalizes to the same edge list.
std::string subtree_signature(int id, const std::map<int, std::vector<int>>& ch,
                              const std::map<int, NodeAttr>& attrs) {
  std::string sig;
  const NodeAttr& a = attrs.at(id);
  sig.resize(sizeof(NodeAttr));
  std::memcpy(sig.data(), &a, sizeof(NodeAttr));
  std::vector<std::string> kids;
  auto it = ch.find(id);
  if (it != ch.end())
    for (int c : it->second) kids.push_back(subtree_signature(c, ch, attrs));
  std::sort(kids.begin(), kids.end());
  for (auto& k : kids) sig += "(" + k + ")";
  return sig;
}

}  // namespace

MorphGraph canonicalize(const MorphGraph& g) {
  if (g.nodes.empty()) throw GraphError("cannot canonicalize empty graph");

  std::map<int, NodeAttr> attrs;
  for (const auto& n : g.nodes) attrs[n.id] = n.attr;
  if (!attrs.count(g.root_id)) throw GraphError("root id missing");

  std::map<int, std::vector<int>> ch;
  for (auto [p, c] : g.edges) ch[p].push_back(c);

  std::map<int, std::string> sig;
  for (const auto& n : g.nodes) sig[n.id] = subtree_signature(n.id, ch, attrs);

  // BFS from root, children visited in signature order (old id as final tie).
  std::map<int, int> relabel;
  std::vector<int> order;
  std::deque<int> q{g.root_id};
  while (!q.empty()) {
    int u = q.front();
    q.pop_front();
    relabel[u] = static_cast<int>(order.size());
    order.push_back(u);
    auto it = ch.find(u);
    if (it == ch.end()) continue;
    auto kids = it->second;
    std::sort(kids.begin(), kids.end(), [&](int a, int b) {
      if (sig[a] != sig[b]) return sig[a] < sig[b];
      return a < b;
    });
    for (int c : kids) q.push_back(c);
  }
  if (order.size() != g.nodes.size())
    throw GraphError("graph is disconnected");

  MorphGraph out;
  out.root_id = 0;
  out.nodes.reserve(order.size());
  for (size_t i = 0; i < order.size(); ++i)
    out.nodes.push_back({static_cast<int>(i), attrs[order[i]]});
  for (auto [p, c] : g.edges) out.edges.emplace_back(relabel[p], relabel[c]);
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

namespace {

// Attribute-blind AHU signature; two graphs share it iff their rooted
// shapes are isomorphic.
std::string shape_signature(int id, const std::map<int, std::vector<int>>& ch) {
  std::vector<std::string> kids;
  auto it = ch.find(id);
  if (it != ch.end())
    for (int c : it->second) kids.push_back(shape_signature(c, ch));
  std::sort(kids.begin(), kids.end());
  std::string sig = "(";
  for (auto& k : kids) sig += k;
  return sig + ")";
}

}  // namespace

bool same_topology(const MorphGraph& a, const MorphGraph& b) {
  if (a.node_count() != b.node_count()) return false;
  auto sig = [](const MorphGraph& g) {
    std::map<int, std::vector<int>> ch;
    for (auto [p, c] : g.edges) ch[p].push_back(c);
    return shape_signature(g.root_id, ch);
  };
  return sig(a) == sig(b);
}

std::string serialize(const MorphGraph& g) {
  nlohmann::json j;
  j["root_id"] = g.root_id;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : g.nodes) {
    nlohmann::json a;
    a["geom_a"] = n.attr.geom_a;
    a["geom_b"] = n.attr.geom_b;
    a["attach_angle"] = n.attr.attach_angle;
    a["joint_range"] = n.attr.joint_range;
    a["joint_gear"] = n.attr.joint_gear;
    j["nodes"].push_back({{"id", n.id}, {"attr", a}});
  }
  j["edges"] = nlohmann::json::array();
  for (auto [p, c] : g.edges) j["edges"].push_back({p, c});
  return j.dump();
}

MorphGraph deserialize(const std::string& text, const AttrSpace& space) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw GraphError(std::string("malformed graph JSON: ") + e.what());
  }
  MorphGraph g;
  try {
    if (!j.contains("root_id")) throw GraphError("missing field root_id");
    if (!j.contains("nodes")) throw GraphError("missing field nodes");
    if (!j.contains("edges")) throw GraphError("missing field edges");
    g.root_id = j.at("root_id").get<int>();
    for (const auto& n : j.at("nodes")) {
      MorphGraph::Node node;
      node.id = n.at("id").get<int>();
      const auto& a = n.at("attr");
      node.attr.geom_a = a.at("geom_a").get<double>();
      node.attr.geom_b = a.at("geom_b").get<double>();
      node.attr.attach_angle = a.at("attach_angle").get<double>();
      node.attr.joint_range = a.at("joint_range").get<double>();
      node.attr.joint_gear = a.at("joint_gear").get<double>();
      g.nodes.push_back(node);
    }
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2)
        throw GraphError("edge entries must be [parent, child]");
      g.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw GraphError(std::string("malformed graph JSON: ") + e.what());
  }
  auto rep = validate(g, space);
  if (!rep.ok) {
    std::string msg = "invalid graph:";
    for (const auto& v : rep.violations) msg += " [" + v + "]";
    throw GraphError(msg);
  }
  return g;
}

}  // namespace gevo
