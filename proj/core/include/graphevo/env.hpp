#pragma once

#include <memory>
#include <span>
#include <vector>

#include "graphevo/morphology.hpp"
#include "graphevo/rng.hpp"

namespace gevo {

enum class EnvKind { Fish2d, Walker2d };

struct EnvSpec {
  EnvKind kind = EnvKind::Fish2d;
  double dt = 0.01;    // integrator substep (s)
  int frame_skip = 5;  // substeps per environment step
  int horizon = 500;   // environment steps per episode
  double density = 1000.0;

  // fish: anisotropic viscous drag
  double drag_normal = 50.0;
  double drag_tangent = 1.0;

  // walker: gravity + penalty-spring ground contact
  double gravity = 9.81;
  double contact_stiffness = 3.0e5;
  double contact_damping = 300.0;
  double friction_mu = 1.0;
  double friction_viscous = 2000.0;
  double action_cost = 1e-4;

  static EnvSpec fish();
  static EnvSpec walker();
};

struct LinkState {
  double px = 0, py = 0, angle = 0;
  double vx = 0, vy = 0, w = 0;

  bool operator==(const LinkState&) const = default;
};

/// Full simulator state: one rigid link per graph node (canonical order),
/// joint angles and velocities derived from link poses.
struct BodyState {
  std::vector<LinkState> links;
  int t = 0;  // environment steps elapsed in the episode

  bool operator==(const BodyState&) const = default;
};

struct StepResult {
  BodyState next;
  double reward = 0;
  bool done = false;
};

/// Episode interface consumed by rollout collection.
class Env {
 public:
  virtual ~Env() = default;
  virtual const MorphGraph& graph() const = 0;
  virtual int action_dim() const = 0;
  virtual int obs_width() const = 0;
  virtual int horizon() const = 0;
  virtual BodyState initial_state(Rng& rng) const = 0;
  virtual StepResult step(const BodyState& s,
                          std::span<const double> action) const = 0;
  virtual void observe(const BodyState& s, std::span<double> out) const = 0;
};

/// Fixed-step planar articulated body: one link per node, a torque-actuated
/// hinge per edge at the parent-perimeter point selected by attach_angle.
/// Deterministic; pure function of (state, action).
class PhysicsEnv final : public Env {
 public:
  PhysicsEnv(MorphGraph graph, EnvSpec spec);

  const MorphGraph& graph() const override { return graph_; }
  const EnvSpec& spec() const { return spec_; }
  int action_dim() const override { return static_cast<int>(joints_.size()); }
  int obs_width() const override { return 6; }
  int horizon() const override { return spec_.horizon; }

  /// Canonical rest pose: all joints at zero, zero velocities.
  BodyState assembled_state() const;
  /// Rest pose with small random joint-angle offsets.
  BodyState initial_state(Rng& rng) const override;

  StepResult step(const BodyState& s,
                  std::span<const double> action) const override;
  void observe(const BodyState& s, std::span<double> out) const override;

  double joint_angle(const BodyState& s, int j) const;
  double joint_velocity(const BodyState& s, int j) const;
  double joint_range(int j) const { return joints_[j].range; }
  /// World-space distance between the two anchor points of joint j.
  double joint_drift(const BodyState& s, int j) const;

  double total_mass() const;
  double kinetic_energy(const BodyState& s) const;
  double link_area(int i) const { return links_[i].area; }

 private:
  struct Link {
    double half_a = 0, half_b = 0;
    double mass = 0, inertia = 0, area = 0;
  };
  struct Joint {
    int parent = 0, child = 0;
    double anchor_px = 0, anchor_py = 0;  // parent-local anchor
    double rest = 0;                      // rest offset (attach angle)
    double range = 0, gear = 0;
  };

  void substep(BodyState& s, std::span<const double> torque) const;

  MorphGraph graph_;
  EnvSpec spec_;
  std::vector<Link> links_;
  std::vector<Joint> joints_;  // ordered by child node id
  double root_angle_ = 0;      // assembly orientation of the torso
};

std::unique_ptr<PhysicsEnv> make_env(const MorphGraph& graph,
                                     const EnvSpec& spec);

}  // namespace gevo
