#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gevo {

/// Thrown by graph parsing/canonicalization on structurally unusable input.
class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-node structural attributes of a body part.
struct NodeAttr {
  double geom_a = 0.2;        // primary radius / half-length (m)
  double geom_b = 0.05;       // secondary radius / thickness (m)
  double attach_angle = 0.0;  // placement direction on parent perimeter (rad)
  double joint_range = 0.8;   // hinge half-range (rad)
  double joint_gear = 150.0;  // torque scale (dimensionless)

  bool operator==(const NodeAttr&) const = default;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
  double width() const { return hi - lo; }
  double clamp(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
};

/// Axis-aligned attribute box plus the node-count cap.
struct AttrSpace {
  Range geom_a{0.05, 0.4};
  Range geom_b{0.02, 0.2};
  Range attach_angle{-3.14159265358979323846, 3.14159265358979323846};
  Range joint_range{0.2, 1.4};
  Range joint_gear{10.0, 300.0};
  int max_nodes = 12;

  NodeAttr sample(class Rng& rng) const;
  NodeAttr clamp(const NodeAttr& a) const;
  bool contains(const NodeAttr& a) const;
};

/// Attributed tree of body parts. Edges store (parent_id, child_id).
struct MorphGraph {
  struct Node {
    int id = 0;
    NodeAttr attr;
    bool operator==(const Node&) const = default;
  };

  std::vector<Node> nodes;
  std::vector<std::pair<int, int>> edges;
  int root_id = 0;

  int node_count() const { return static_cast<int>(nodes.size()); }

  /// Index into `nodes` for a given id; -1 if absent.
  int index_of(int id) const;
  const NodeAttr& attr_of(int id) const;

  /// children[id] lists child ids; only meaningful on id-dense graphs.
  std::vector<std::vector<int>> children_by_id() const;
  /// parent id per node id; root maps to -1.
  std::vector<int> parent_by_id() const;
  /// Node ids in the subtree rooted at `id` (id first, then descendants).
  std::vector<int> subtree_ids(int id) const;

  static MorphGraph single_node(const NodeAttr& a);

  bool operator==(const MorphGraph&) const = default;
};

struct ValidityReport {
  bool ok = true;
  std::vector<std::string> violations;
};

/// Total function: checks every MorphGraph + NodeAttr invariant against the
/// given attribute space. Violations name the offending node or edge.
ValidityReport validate(const MorphGraph& g, const AttrSpace& space);

/// Relabels node ids into breadth-first order from the root, children ordered
/// by a structural signature so isomorphic inputs canonicalize to equal edge
/// lists. Idempotent. Throws GraphError on disconnected input.
MorphGraph canonicalize(const MorphGraph& g);

/// True when the two graphs have identical edge structure after
/// canonical relabeling (attributes ignored).
bool same_topology(const MorphGraph& a, const MorphGraph& b);

/// JSON text form:
/// {"root_id": int, "nodes": [{"id": int, "attr": {...}}], "edges": [[p,c],..]}
std::string serialize(const MorphGraph& g);

/// Parses and validates. Throws GraphError on malformed text, out-of-bounds
/// attributes or non-tree edges.
MorphGraph deserialize(const std::string& text,
                       const AttrSpace& space = AttrSpace{});

}  // namespace gevo
