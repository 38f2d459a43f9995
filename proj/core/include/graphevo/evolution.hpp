#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "graphevo/baselines.hpp"
#include "graphevo/env.hpp"
#include "graphevo/mutation.hpp"
#include "graphevo/ppo.hpp"
#include "graphevo/species.hpp"
#include "graphevo/surrogate.hpp"

namespace gevo {

struct EvolutionConfig {
  int n_species = 16;      // generation size N
  double elim_rate = 0.2;  // K = ceil(elim_rate * N)
  int candidates = 200;    // C mutated candidates before pruning
  int max_generations = 400;
  bool reset_controllers = false;
  int reset_freq = 50;
  bool use_gmuc = true;
  uint64_t seed = 0;

  int elim_count() const {
    return static_cast<int>(std::ceil(elim_rate * n_species));
  }
};

struct GenealogyRecord {
  int species_id = 0;
  int parent_id = -1;  // -1: generation-0 root (or RGS sample)
  int birth_generation = 0;
  std::string mutation = "init";
  std::vector<std::pair<int, double>> fitness_history;  // (generation, AF)
};

struct Genealogy {
  std::vector<GenealogyRecord> records;
  GenealogyRecord* find(int species_id);
};

struct GenerationMetrics {
  int gen = 0;
  double best_af = 0, mean_af = 0, worst_af = 0, mean_nodes = 0;
};

struct TrainStatRow {
  int generation = 0, species_id = 0;
  double mean_reward = 0, kl = 0, beta = 0, value_loss = 0;
};

struct SurrogateRow {
  int generation = 0;
  double train_loss = 0, heldout_spearman = 0;
};

struct EvoInput {
  Method method = Method::NGE;
  EvolutionConfig evo;
  EnvSpec env;
  PpoConfig ppo;
  MutationConfig mut;
  SurrogateConfig surr;
  AttrSpace space;
  GnnConfig gnn;
  FcConfig fc;
  int workers = 1;
  // Fine-tuning: every initial species starts from this graph.
  std::optional<MorphGraph> seed_graph;
  // When set, replaces RL training entirely: AF := f(graph). Used for
  // surrogate/pruning studies on closed-form landscapes.
  std::function<double(const MorphGraph&)> synthetic_fitness;
};

/// Complete resumable state of a run; checkpointed after every generation.
struct EvoState {
  int next_gen = 0;
  int next_species_id = 0;
  uint64_t env_steps = 0;
  std::vector<Species> population;
  Genealogy genealogy;
  std::vector<GenerationMetrics> metrics;
  std::vector<TrainStatRow> training_rows;
  std::vector<SurrogateRow> surrogate_rows;
  SurrogateModel surrogate;
  double best_af = -std::numeric_limits<double>::infinity();
  int best_species_id = -1;
  Species best_species;  // champion snapshot (graph + params at its peak)
};

/// Generation 0: N random species (graph size uniform in [1,4], grown by
/// chained add-node) or N copies of the seed graph, with freshly initialized
/// controllers.
EvoState init_state(const EvoInput& in);

/// Runs generations state.next_gen .. max_generations-1. The callback fires
/// after every completed generation with the full resumable state.
void run_generations(const EvoInput& in, EvoState& state,
                     const std::function<void(const EvoState&)>& on_generation =
                         nullptr);

/// init_state + run_generations.
EvoState run(const EvoInput& in,
             const std::function<void(const EvoState&)>& on_generation =
                 nullptr);

/// Exposed for tests: survivor selection removes the K lowest-AF species,
/// ties broken by removing older birth generations (then lower ids) first.
/// Returns surviving indices in original order.
std::vector<int> select_survivors(const std::vector<Species>& pop, int k);

MorphGraph random_graph(const AttrSpace& space, Rng& rng);

}  // namespace gevo
