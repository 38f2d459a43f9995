#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "graphevo/evolution.hpp"

namespace gevo {

/// Invalid or inconsistent run configuration; CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  Method method = Method::NGE;
  EnvSpec env;
  EvolutionConfig evo;
  PpoConfig ppo;
  MutationConfig mut;
  SurrogateConfig surr;
  GnnConfig gnn;
  FcConfig fc;
  AttrSpace space;
  std::string output_dir;
  int workers = 0;          // 0: logical cores
  std::string seed_graph;   // "", "fish", "walker", or a graph JSON path
};

/// Parses a config JSON text, materializing defaults. Throws ConfigError
/// with field-path diagnostics on unknown fields, bad types or violated
/// cross-field invariants.
RunConfig parse_config_text(const std::string& json_text);

/// The fully resolved config (every default materialized), as pretty JSON.
std::string resolved_config_text(const RunConfig& cfg);

/// Expands list-valued scalar fields into the cartesian product of configs.
std::vector<std::string> expand_grid_text(const std::string& json_text);

/// Hand-built reference bodies used by the fine-tuning experiments.
MorphGraph fixture_fish();
MorphGraph fixture_walker();

/// Executes (or resumes) a full run into cfg.output_dir:
///   config.resolved.json, metrics.csv, training_stats.csv, surrogate.csv,
///   genealogy.json, genealogy.dot, best/graph.json, best/species.bin,
///   summary.json, checkpoints/state.bin (every generation).
/// Returns the final state.
EvoState run_session(const RunConfig& cfg);

/// Converts a run directory's genealogy into DOT at out_path.
void export_genealogy(const std::string& run_dir, const std::string& out_path);

/// Re-simulates the champion species of a run for one episode with mean
/// actions and writes a trajectory CSV (t, torso_x, torso_y, reward).
void replay_champion(const std::string& run_dir, const std::string& out_csv);

// Exposed for tests and tooling.
std::string genealogy_to_json(const Genealogy& g);
std::string genealogy_to_dot(const Genealogy& g);
std::string metrics_to_csv(const std::vector<GenerationMetrics>& rows,
                           Method method);
std::string training_rows_to_csv(const std::vector<TrainStatRow>& rows);
std::string surrogate_rows_to_csv(const std::vector<SurrogateRow>& rows);
std::string serialize_state(const EvoState& st, const std::string& config_text);
EvoState deserialize_state(const std::string& data, std::string* config_text);
EvoInput make_evo_input(const RunConfig& cfg);

}  // namespace gevo
