#include "graphevo/env.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace gevo {

namespace {
constexpr double kPi = 3.14159265358979323846;

double wrap_pi(double a) {
  while (a > kPi) a -= 2 * kPi;
  while (a < -kPi) a += 2 * kPi;
  return a;
}

struct Vec2 {
  double x = 0, y = 0;
};

Vec2 rot(double angle, double x, double y) {
  double c = std::cos(angle), s = std::sin(angle);
  return {c * x - s * y, s * x + c * y};
}

double cross(double ax, double ay, double bx, double by) {
  return ax * by - ay * bx;
}
}  // namespace

EnvSpec EnvSpec::fish() {
  EnvSpec s;
  s.kind = EnvKind::Fish2d;
  s.dt = 0.01;
  s.frame_skip = 5;
  s.density = 1000.0;
  return s;
}

EnvSpec EnvSpec::walker() {
  EnvSpec s;
  s.kind = EnvKind::Walker2d;
  // Stiff penalty contact needs a finer substep than the fish env; the
  // environment step is 0.05 s in both.
  s.dt = 0.002;
  s.frame_skip = 25;
  s.density = 500.0;
  return s;
}

PhysicsEnv::PhysicsEnv(MorphGraph graph, EnvSpec spec)
    : graph_(std::move(graph)), spec_(spec) {
  const int n = graph_.node_count();
  assert(graph_.root_id == 0);
  links_.resize(n);
  for (int i = 0; i < n; ++i) {
    const NodeAttr& a = graph_.nodes[i].attr;
    Link& l = links_[i];
    l.half_a = a.geom_a;
    l.half_b = a.geom_b;
    if (spec_.kind == EnvKind::Fish2d) {
      // Ellipse with semi-axes (a, b).
      l.area = kPi * a.geom_a * a.geom_b;
      l.mass = spec_.density * l.area;
      l.inertia = l.mass * (a.geom_a * a.geom_a + a.geom_b * a.geom_b) / 4.0;
    } else {
      // Capsule: 2a x 2b rectangle capped by half-discs of radius b.
      double rect = 4.0 * a.geom_a * a.geom_b;
      double caps = kPi * a.geom_b * a.geom_b;
      l.area = rect + caps;
      l.mass = spec_.density * l.area;
      double m_rect = spec_.density * rect;
      double i_rect = m_rect *
                      (4 * a.geom_a * a.geom_a + 4 * a.geom_b * a.geom_b) /
                      12.0;
      double m_half = spec_.density * caps / 2.0;
      double c = 4.0 * a.geom_b / (3.0 * kPi);
      double i_half = m_half * (a.geom_b * a.geom_b / 2.0 - c * c +
                                (a.geom_a + c) * (a.geom_a + c));
      l.inertia = i_rect + 2.0 * i_half;
    }
  }
  // Hinge per edge, ordered by child id.
  auto edges = graph_.edges;
  std::sort(edges.begin(), edges.end(),
            [](auto& a, auto& b) { return a.second < b.second; });
  for (auto [p, c] : edges) {
    const NodeAttr& pa = graph_.nodes[p].attr;
    const NodeAttr& ca = graph_.nodes[c].attr;
    Joint j;
    j.parent = p;
    j.child = c;
    j.anchor_px = pa.geom_a * std::cos(ca.attach_angle);
    j.anchor_py = pa.geom_b * std::sin(ca.attach_angle);
    j.rest = ca.attach_angle;
    j.range = ca.joint_range;
    j.gear = ca.joint_gear;
    joints_.push_back(j);
  }
  root_angle_ = spec_.kind == EnvKind::Fish2d ? kPi / 2.0 : 0.0;
}

BodyState PhysicsEnv::assembled_state() const {
  const int n = graph_.node_count();
  BodyState s;
  s.links.resize(n);
  s.links[0].angle = root_angle_;
  // Place children outward from the root; joints_ is sorted by child id and
  // the graph is canonical (parents precede children in id order).
  for (const Joint& j : joints_) {
    const LinkState& p = s.links[j.parent];
    LinkState& c = s.links[j.child];
    c.angle = p.angle + j.rest;
    Vec2 ap = rot(p.angle, j.anchor_px, j.anchor_py);
    Vec2 arm = rot(c.angle, links_[j.child].half_a, 0.0);
    c.px = p.px + ap.x + arm.x;
    c.py = p.py + ap.y + arm.y;
  }
  if (spec_.kind == EnvKind::Walker2d) {
    double low = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      const LinkState& l = s.links[i];
      Vec2 e1 = rot(l.angle, links_[i].half_a, 0.0);
      low = std::min(low, std::min(l.py + e1.y, l.py - e1.y) - links_[i].half_b);
    }
    double lift = 0.01 - low;
    for (auto& l : s.links) l.py += lift;
  }
  return s;
}

BodyState PhysicsEnv::initial_state(Rng& rng) const {
  BodyState s = assembled_state();
  // Small joint-angle offsets so episodes do not all start from the exact
  // symmetric pose; applied by rotating each child subtree about its anchor.
  for (const Joint& j : joints_) {
    double off = 0.1 * j.range * (2.0 * rng.uniform() - 1.0);
    const LinkState& p = s.links[j.parent];
    Vec2 ap = rot(p.angle, j.anchor_px, j.anchor_py);
    double ax = p.px + ap.x, ay = p.py + ap.y;
    // Rotate the child and its descendants about the anchor point.
    auto sub = graph_.subtree_ids(j.child);
    double c = std::cos(off), sn = std::sin(off);
    for (int id : sub) {
      LinkState& l = s.links[id];
      double rx = l.px - ax, ry = l.py - ay;
      l.px = ax + c * rx - sn * ry;
      l.py = ay + sn * rx + c * ry;
      l.angle += off;
    }
  }
  return s;
}

double PhysicsEnv::joint_angle(const BodyState& s, int j) const {
  const Joint& jt = joints_[j];
  return wrap_pi(s.links[jt.child].angle - s.links[jt.parent].angle - jt.rest);
}

double PhysicsEnv::joint_velocity(const BodyState& s, int j) const {
  const Joint& jt = joints_[j];
  return s.links[jt.child].w - s.links[jt.parent].w;
}

double PhysicsEnv::joint_drift(const BodyState& s, int j) const {
  const Joint& jt = joints_[j];
  const LinkState& p = s.links[jt.parent];
  const LinkState& c = s.links[jt.child];
  Vec2 ap = rot(p.angle, jt.anchor_px, jt.anchor_py);
  Vec2 ac = rot(c.angle, -links_[jt.child].half_a, 0.0);
  double dx = (c.px + ac.x) - (p.px + ap.x);
  double dy = (c.py + ac.y) - (p.py + ap.y);
  return std::sqrt(dx * dx + dy * dy);
}

double PhysicsEnv::total_mass() const {
  double m = 0;
  for (const auto& l : links_) m += l.mass;
  return m;
}

double PhysicsEnv::kinetic_energy(const BodyState& s) const {
  double e = 0;
  for (size_t i = 0; i < links_.size(); ++i) {
    const LinkState& l = s.links[i];
    e += 0.5 * links_[i].mass * (l.vx * l.vx + l.vy * l.vy) +
         0.5 * links_[i].inertia * l.w * l.w;
  }
  return e;
}

void PhysicsEnv::substep(BodyState& s, std::span<const double> torque) const {
  const int n = static_cast<int>(links_.size());
  const double dt = spec_.dt;

  // External forces from the current state.
  std::vector<double> fx(n, 0), fy(n, 0), tq(n, 0);
  if (spec_.kind == EnvKind::Fish2d) {
    for (int i = 0; i < n; ++i) {
      const LinkState& l = s.links[i];
      double c = std::cos(l.angle), sn = std::sin(l.angle);
      // Velocity in the link frame: x along the major axis.
      double vt = c * l.vx + sn * l.vy;
      double vn = -sn * l.vx + c * l.vy;
      double ft = -spec_.drag_tangent * (2.0 * links_[i].half_b) * vt;
      double fn = -spec_.drag_normal * (2.0 * links_[i].half_a) * vn;
      fx[i] += c * ft - sn * fn;
      fy[i] += sn * ft + c * fn;
      // Rotational drag from integrating the normal component along the axis.
      tq[i] += -spec_.drag_normal *
               (2.0 * links_[i].half_a * links_[i].half_a * links_[i].half_a /
                3.0) *
               l.w;
    }
  } else {
    for (int i = 0; i < n; ++i) {
      const LinkState& l = s.links[i];
      fy[i] -= links_[i].mass * spec_.gravity;
      // Penalty contact at both capsule cap centers.
      for (double end : {links_[i].half_a, -links_[i].half_a}) {
        Vec2 e = rot(l.angle, end, 0.0);
        double cx = l.px + e.x;
        double cy = l.py + e.y - links_[i].half_b;
        double pen = -cy;
        if (pen <= 0) continue;
        double rx = cx - l.px, ry = cy - l.py;
        double vpx = l.vx - l.w * ry;
        double vpy = l.vy + l.w * rx;
        double fn = spec_.contact_stiffness * pen - spec_.contact_damping * vpy;
        if (fn < 0) fn = 0;
        double ftan = -spec_.friction_viscous * vpx;
        double cap = spec_.friction_mu * fn;
        ftan = std::clamp(ftan, -cap, cap);
        fx[i] += ftan;
        fy[i] += fn;
        tq[i] += cross(rx, ry, ftan, fn);
      }
    }
  }
  // Actuation: tau on the child, -tau on the parent.
  for (size_t j = 0; j < joints_.size(); ++j) {
    tq[joints_[j].child] += torque[j];
    tq[joints_[j].parent] -= torque[j];
  }

  // Semi-implicit Euler velocity update.
  for (int i = 0; i < n; ++i) {
    LinkState& l = s.links[i];
    l.vx += dt * fx[i] / links_[i].mass;
    l.vy += dt * fy[i] / links_[i].mass;
    l.w += dt * tq[i] / links_[i].inertia;
  }

  // Velocity-level constraint solve: sequential impulses on joint anchors
  // plus angular stops at the hinge limits. Bias-free; positions are
  // reprojected exactly after integration, so drift never accumulates.
  constexpr int kIters = 15;
  for (int it = 0; it < kIters; ++it) {
    for (const Joint& j : joints_) {
      LinkState& p = s.links[j.parent];
      LinkState& c = s.links[j.child];
      const Link& lp = links_[j.parent];
      const Link& lc = links_[j.child];
      Vec2 rp = rot(p.angle, j.anchor_px, j.anchor_py);
      Vec2 rc = rot(c.angle, -lc.half_a, 0.0);
      double dvx = (c.vx - c.w * rc.y) - (p.vx - p.w * rp.y);
      double dvy = (c.vy + c.w * rc.x) - (p.vy + p.w * rp.x);
      double imp = 1.0 / lp.mass + 1.0 / lc.mass;
      double k11 = imp + rp.y * rp.y / lp.inertia + rc.y * rc.y / lc.inertia;
      double k12 = -rp.x * rp.y / lp.inertia - rc.x * rc.y / lc.inertia;
      double k22 = imp + rp.x * rp.x / lp.inertia + rc.x * rc.x / lc.inertia;
      double det = k11 * k22 - k12 * k12;
      double ix = -(k22 * dvx - k12 * dvy) / det;
      double iy = -(-k12 * dvx + k11 * dvy) / det;
      c.vx += ix / lc.mass;
      c.vy += iy / lc.mass;
      c.w += cross(rc.x, rc.y, ix, iy) / lc.inertia;
      p.vx -= ix / lp.mass;
      p.vy -= iy / lp.mass;
      p.w -= cross(rp.x, rp.y, ix, iy) / lp.inertia;
    }
    for (size_t ji = 0; ji < joints_.size(); ++ji) {
      const Joint& j = joints_[ji];
      double q = joint_angle(s, static_cast<int>(ji));
      double qd = s.links[j.child].w - s.links[j.parent].w;
      // Predictive stop: relative velocity may carry the hinge exactly to
      // its limit within this substep but never past it. Only ever reduces
      // the outward rate, so no energy is injected.
      double new_qd = qd;
      if (qd > 0) new_qd = std::min(qd, std::max(0.0, (j.range - q) / dt));
      if (qd < 0) new_qd = std::max(qd, std::min(0.0, (-j.range - q) / dt));
      if (new_qd != qd) {
        const Link& lp = links_[j.parent];
        const Link& lc = links_[j.child];
        double L = (new_qd - qd) / (1.0 / lp.inertia + 1.0 / lc.inertia);
        s.links[j.child].w += L / lc.inertia;
        s.links[j.parent].w -= L / lp.inertia;
      }
    }
  }

  // Position integration.
  for (int i = 0; i < n; ++i) {
    LinkState& l = s.links[i];
    l.px += dt * l.vx;
    l.py += dt * l.vy;
    l.angle += dt * l.w;
  }

  // Exact projection, root to leaves: clamp each hinge into its range and
  // pin the child anchor onto the parent anchor. Velocities untouched.
  for (size_t ji = 0; ji < joints_.size(); ++ji) {
    const Joint& j = joints_[ji];
    LinkState& p = s.links[j.parent];
    LinkState& c = s.links[j.child];
    double q = wrap_pi(c.angle - p.angle - j.rest);
    double qc = std::clamp(q, -j.range, j.range);
    if (qc != q) c.angle += qc - q;
    Vec2 ap = rot(p.angle, j.anchor_px, j.anchor_py);
    Vec2 arm = rot(c.angle, links_[j.child].half_a, 0.0);
    c.px = p.px + ap.x + arm.x;
    c.py = p.py + ap.y + arm.y;
  }
}

StepResult PhysicsEnv::step(const BodyState& state,
                            std::span<const double> action) const {
  assert(static_cast<int>(action.size()) == action_dim());
  StepResult out;
  out.next = state;
  BodyState& s = out.next;

  std::vector<double> torque(joints_.size());
  double act_sq = 0;
  for (size_t j = 0; j < joints_.size(); ++j) {
    double a = std::clamp(action[j], -1.0, 1.0);
    torque[j] = a * joints_[j].gear;
    act_sq += a * a;
  }

  double x0 = s.links[0].px, y0 = s.links[0].py;
  for (int k = 0; k < spec_.frame_skip; ++k) substep(s, torque);
  s.t = state.t + 1;

  bool finite = true;
  for (const auto& l : s.links)
    finite = finite && std::isfinite(l.px) && std::isfinite(l.py) &&
             std::isfinite(l.angle) && std::isfinite(l.vx) &&
             std::isfinite(l.vy) && std::isfinite(l.w);

  double step_dt = spec_.dt * spec_.frame_skip;
  if (!finite) {
    out.reward = 0.0;
    out.done = true;
    return out;
  }
  if (spec_.kind == EnvKind::Fish2d) {
    out.reward = (s.links[0].py - y0) / step_dt;
  } else {
    out.reward = (s.links[0].px - x0) / step_dt - spec_.action_cost * act_sq;
  }
  out.done = s.t >= spec_.horizon;
  if (spec_.kind == EnvKind::Walker2d &&
      (s.links[0].py < 0.0 || state.links[0].py < 0.0))
    out.done = true;
  return out;
}

void PhysicsEnv::observe(const BodyState& s, std::span<double> out) const {
  const int w = obs_width();
  assert(static_cast<int>(out.size()) == graph_.node_count() * w);
  std::fill(out.begin(), out.end(), 0.0);
  const LinkState& root = s.links[0];
  out[0] = root.vx;
  out[1] = root.vy;
  out[2] = root.w;
  out[3] = std::sin(root.angle);
  out[4] = std::cos(root.angle);
  out[5] = spec_.kind == EnvKind::Walker2d ? root.py : 0.0;
  for (size_t j = 0; j < joints_.size(); ++j) {
    int u = joints_[j].child;
    double* o = &out[static_cast<size_t>(u) * w];
    o[0] = joint_angle(s, static_cast<int>(j));
    o[1] = joint_velocity(s, static_cast<int>(j));
    o[2] = std::sin(s.links[u].angle);
    o[3] = std::cos(s.links[u].angle);
  }
}

std::unique_ptr<PhysicsEnv> make_env(const MorphGraph& graph,
                                     const EnvSpec& spec) {
  return std::make_unique<PhysicsEnv>(graph, spec);
}

}  // namespace gevo
