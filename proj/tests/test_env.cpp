#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "graphevo/env.hpp"
#include "graphevo/evolution.hpp"
#include "graphevo/session.hpp"
#include "helpers.hpp"

using namespace gevo;

namespace {
constexpr double kPi = 3.14159265358979323846;

MorphGraph random_valid_graph(Rng& rng, int max_extra = 6) {
  AttrSpace space;
  MorphGraph g = MorphGraph::single_node(space.sample(rng));
  int extra = rng.uniform_int(max_extra + 1);
  for (int i = 0; i < extra; ++i) {
    auto nx = add_node(g, space, rng);
    if (!nx) break;
    g = *nx;
  }
  return g;
}

BodyState randomized_velocities(const PhysicsEnv& env, Rng& rng,
                                double scale) {
  BodyState s = env.assembled_state();
  for (auto& l : s.links) {
    l.vx = scale * rng.normal();
    l.vy = scale * rng.normal();
    l.w = scale * rng.normal();
  }
  return s;
}
}  // namespace

TEST_CASE("instantiate: single fish node has no actuators") {
  auto env = make_env(MorphGraph::single_node({0.2, 0.05, 0, 0.8, 100}),
                      EnvSpec::fish());
  CHECK(env->action_dim() == 0);
  Rng rng(1);
  BodyState s = env->assembled_state();
  StepResult r = env->step(s, {});
  CHECK(r.reward == 0.0);
  CHECK_FALSE(r.done);
}

TEST_CASE("instantiate: five-node fish has four hinge actuators") {
  auto env = make_env(fixture_fish(), EnvSpec::fish());
  CHECK(env->action_dim() == 4);
}

TEST_CASE("total mass equals the closed-form area sum") {
  Rng rng(2);
  for (auto kind : {EnvKind::Fish2d, EnvKind::Walker2d}) {
    EnvSpec spec = kind == EnvKind::Fish2d ? EnvSpec::fish() : EnvSpec::walker();
    for (int trial = 0; trial < 20; ++trial) {
      MorphGraph g = random_valid_graph(rng);
      auto env = make_env(g, spec);
      double expect = 0;
      for (const auto& n : g.nodes) {
        double a = n.attr.geom_a, b = n.attr.geom_b;
        double area = kind == EnvKind::Fish2d ? kPi * a * b
                                              : 4 * a * b + kPi * b * b;
        expect += spec.density * area;
      }
      CHECK(std::abs(env->total_mass() - expect) < 1e-9);
    }
  }
}

TEST_CASE("fish at rest stays at rest with zero action") {
  auto env = make_env(fixture_fish(), EnvSpec::fish());
  BodyState s = env->assembled_state();
  std::vector<double> zero(env->action_dim(), 0.0);
  StepResult r = env->step(s, zero);
  CHECK(r.reward == 0.0);
  for (size_t i = 0; i < s.links.size(); ++i) {
    CHECK(r.next.links[i].vx == 0.0);
    CHECK(r.next.links[i].vy == 0.0);
    CHECK(r.next.links[i].w == 0.0);
  }
}

TEST_CASE("walker free fall matches the closed form to 1e-12") {
  // Torso-only body started high above the ground: no contact, no joints.
  MorphGraph g = MorphGraph::single_node({0.2, 0.05, 0, 0.8, 100});
  EnvSpec spec = EnvSpec::walker();
  auto env = make_env(g, spec);
  BodyState s = env->assembled_state();
  s.links[0].py += 100.0;
  for (int step = 1; step <= 4; ++step) {
    StepResult r = env->step(s, {});
    s = r.next;
    int n = step * spec.frame_skip;
    double expect = -spec.gravity * n * spec.dt;
    CHECK(std::abs(s.links[0].vy - expect) < 1e-12);
  }
}

TEST_CASE("fish passive kinetic energy is non-increasing step over step") {
  Rng rng(3);
  EnvSpec spec = EnvSpec::fish();
  for (int trial = 0; trial < 200; ++trial) {
    MorphGraph g = random_valid_graph(rng);
    auto env = make_env(g, spec);
    BodyState s = randomized_velocities(*env, rng, 1.0 + rng.uniform() * 2.0);
    std::vector<double> zero(env->action_dim(), 0.0);
    double e = env->kinetic_energy(s);
    for (int step = 0; step < 20; ++step) {
      StepResult r = env->step(s, zero);
      double e2 = env->kinetic_energy(r.next);
      REQUIRE(e2 <= e * (1 + 1e-12) + 1e-12);
      e = e2;
      s = r.next;
      if (r.done) break;
    }
  }
}

TEST_CASE("joint angles never exceed their range under random actions") {
  Rng rng(4);
  for (auto kind : {EnvKind::Fish2d, EnvKind::Walker2d}) {
    EnvSpec spec = kind == EnvKind::Fish2d ? EnvSpec::fish() : EnvSpec::walker();
    for (int trial = 0; trial < 10; ++trial) {
      MorphGraph g = random_valid_graph(rng);
      auto env = make_env(g, spec);
      BodyState s = env->initial_state(rng);
      std::vector<double> act(env->action_dim());
      for (int step = 0; step < 500; ++step) {
        for (auto& a : act) a = 2.0 * rng.uniform() - 1.0;
        StepResult r = env->step(s, act);
        for (int j = 0; j < env->action_dim(); ++j)
          REQUIRE(std::abs(env->joint_angle(r.next, j)) <=
                  env->joint_range(j) + 1e-9);
        s = r.done ? env->initial_state(rng) : r.next;
      }
    }
  }
}

TEST_CASE("joint anchors never drift") {
  Rng rng(5);
  EnvSpec spec = EnvSpec::walker();
  MorphGraph g = fixture_walker();
  auto env = make_env(g, spec);
  BodyState s = env->initial_state(rng);
  std::vector<double> act(env->action_dim());
  for (int step = 0; step < 300; ++step) {
    for (auto& a : act) a = 2.0 * rng.uniform() - 1.0;
    StepResult r = env->step(s, act);
    for (int j = 0; j < env->action_dim(); ++j)
      REQUIRE(env->joint_drift(r.next, j) < 1e-3);
    s = r.done ? env->initial_state(rng) : r.next;
  }
}

TEST_CASE("step is a pure deterministic function of (state, action)") {
  Rng rng(6);
  MorphGraph g = fixture_fish();
  auto env1 = make_env(g, EnvSpec::fish());
  auto env2 = make_env(g, EnvSpec::fish());
  BodyState s = env1->initial_state(rng);
  std::vector<double> act(env1->action_dim());
  for (auto& a : act) a = 2.0 * rng.uniform() - 1.0;
  StepResult r1 = env1->step(s, act);
  StepResult r2 = env1->step(s, act);
  StepResult r3 = env2->step(s, act);
  CHECK(r1.next == r2.next);
  CHECK(r1.next == r3.next);
  CHECK(r1.reward == r2.reward);
  CHECK(r1.reward == r3.reward);
}

TEST_CASE("frame-skip composition: k substeps equal one k-skip step") {
  Rng rng(7);
  MorphGraph g = fixture_fish();
  EnvSpec one = EnvSpec::fish();
  one.frame_skip = 1;
  EnvSpec five = EnvSpec::fish();
  five.frame_skip = 5;
  auto env1 = make_env(g, one);
  auto env5 = make_env(g, five);
  BodyState s = env5->initial_state(rng);
  std::vector<double> act(env5->action_dim());
  for (auto& a : act) a = 2.0 * rng.uniform() - 1.0;

  StepResult big = env5->step(s, act);
  BodyState t = s;
  double mean_reward = 0;
  for (int i = 0; i < 5; ++i) {
    StepResult r = env1->step(t, act);
    t = r.next;
    mean_reward += r.reward / 5.0;
  }
  REQUIRE(big.next.links.size() == t.links.size());
  for (size_t i = 0; i < t.links.size(); ++i) {
    CHECK(big.next.links[i].px == t.links[i].px);
    CHECK(big.next.links[i].py == t.links[i].py);
    CHECK(big.next.links[i].angle == t.links[i].angle);
    CHECK(big.next.links[i].vx == t.links[i].vx);
    CHECK(big.next.links[i].vy == t.links[i].vy);
    CHECK(big.next.links[i].w == t.links[i].w);
  }
  // Fish reward is a mean velocity: the k-substep rewards average to it.
  CHECK(big.reward == doctest::Approx(mean_reward).epsilon(1e-9));
}

TEST_CASE("action clamping: out-of-range actions equal their clamp") {
  Rng rng(8);
  MorphGraph g = fixture_fish();
  auto env = make_env(g, EnvSpec::fish());
  BodyState s = env->initial_state(rng);
  std::vector<double> wild{5.0, -3.7, 0.4, -0.9};
  std::vector<double> clamped{1.0, -1.0, 0.4, -0.9};
  StepResult r1 = env->step(s, wild);
  StepResult r2 = env->step(s, clamped);
  CHECK(r1.next == r2.next);
  CHECK(r1.reward == r2.reward);
}

TEST_CASE("observations: widths fixed, rest state zero except orientation") {
  auto env = make_env(fixture_fish(), EnvSpec::fish());
  const MorphGraph& g = env->graph();
  BodyState s = env->assembled_state();
  std::vector<double> obs(static_cast<size_t>(g.node_count()) * 6);
  env->observe(s, obs);
  // Root slots: [vx, vy, w, sin, cos, 0]; joints at rest.
  CHECK(obs[0] == 0.0);
  CHECK(obs[1] == 0.0);
  CHECK(obs[2] == 0.0);
  CHECK(obs[5] == 0.0);
  CHECK(std::abs(obs[3] * obs[3] + obs[4] * obs[4] - 1.0) < 1e-12);
  for (int u = 1; u < g.node_count(); ++u) {
    const double* o = &obs[static_cast<size_t>(u) * 6];
    CHECK(o[0] == 0.0);  // joint angle at rest offset
    CHECK(o[1] == 0.0);
    CHECK(std::abs(o[2] * o[2] + o[3] * o[3] - 1.0) < 1e-12);
    CHECK(o[4] == 0.0);
    CHECK(o[5] == 0.0);
  }
  // Purity: a second call is identical.
  std::vector<double> obs2(obs.size());
  env->observe(s, obs2);
  CHECK(obs == obs2);
}

TEST_CASE("walker terminates when the torso goes below ground") {
  MorphGraph g = MorphGraph::single_node({0.2, 0.05, 0, 0.8, 100});
  EnvSpec spec = EnvSpec::walker();
  spec.horizon = 100000;
  auto env = make_env(g, spec);
  BodyState s = env->assembled_state();
  s.links[0].py = -0.5;
  s.links[0].vy = -1.0;
  StepResult r = env->step(s, {});
  CHECK(r.done);
}

TEST_CASE("horizon termination") {
  EnvSpec spec = EnvSpec::fish();
  spec.horizon = 3;
  auto env = make_env(fixture_fish(), spec);
  Rng rng(9);
  BodyState s = env->initial_state(rng);
  std::vector<double> zero(env->action_dim(), 0.0);
  for (int t = 0; t < 2; ++t) {
    StepResult r = env->step(s, zero);
    CHECK_FALSE(r.done);
    s = r.next;
  }
  CHECK(env->step(s, zero).done);
}

TEST_CASE("a plausible fish swims: scripted tail flapping moves it") {
  auto env = make_env(fixture_fish(), EnvSpec::fish());
  BodyState s = env->assembled_state();
  std::vector<double> act(env->action_dim(), 0.0);
  double total = 0;
  for (int t = 0; t < 200; ++t) {
    double phase = std::sin(0.25 * t);
    for (int j = 0; j < env->action_dim(); ++j) act[j] = phase;
    StepResult r = env->step(s, act);
    total += r.reward;
    s = r.next;
  }
  // Symmetric flapping should produce measurable net motion (any speed).
  CHECK(std::isfinite(total));
  CHECK(std::abs(total) > 1e-6);
}
