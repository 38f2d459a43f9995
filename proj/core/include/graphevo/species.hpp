#pragma once

#include <memory>
#include <optional>

#include "graphevo/morphology.hpp"
#include "graphevo/policy.hpp"
#include "graphevo/ppo.hpp"

namespace gevo {

/// A morphology paired with its controller parameters and optimizer state.
/// The policy trains continuously across generations; children spawned under
/// policy sharing start from a verbatim copy of the parent's tensors.
struct Species {
  MorphGraph graph;
  std::unique_ptr<Policy> policy;
  int species_id = 0;
  std::optional<int> parent_id;
  int birth_generation = 0;
  std::optional<double> fitness;
  OptimState opt;

  Species() = default;
  Species(const Species& o)
      : graph(o.graph),
        policy(o.policy ? o.policy->clone() : nullptr),
        species_id(o.species_id),
        parent_id(o.parent_id),
        birth_generation(o.birth_generation),
        fitness(o.fitness),
        opt(o.opt) {}
  Species& operator=(const Species& o) {
    if (this == &o) return *this;
    graph = o.graph;
    policy = o.policy ? o.policy->clone() : nullptr;
    species_id = o.species_id;
    parent_id = o.parent_id;
    birth_generation = o.birth_generation;
    fitness = o.fitness;
    opt = o.opt;
    return *this;
  }
  Species(Species&&) = default;
  Species& operator=(Species&&) = default;
};

}  // namespace gevo
