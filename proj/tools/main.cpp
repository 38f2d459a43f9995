#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "graphevo/io.hpp"
#include "graphevo/session.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config;
  std::string output;
  int64_t seed = -1;
  int workers = -1;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool config_required = true) {
  auto* c = cmd->add_option("--config", o.config, "run config JSON path");
  if (config_required) c->required();
  cmd->add_option("--seed", o.seed, "override config seed");
  cmd->add_option("--workers", o.workers, "worker threads (default: cores)");
  cmd->add_option("--output", o.output, "output directory");
}

gevo::RunConfig load_config(const CommonOpts& o) {
  gevo::RunConfig cfg = gevo::parse_config_text(gevo::read_file(o.config));
  if (o.seed >= 0) cfg.evo.seed = static_cast<uint64_t>(o.seed);
  if (o.workers >= 0) cfg.workers = o.workers;
  if (!o.output.empty()) cfg.output_dir = o.output;
  if (cfg.output_dir.empty()) {
    if (const char* env = std::getenv("GRAPH_EVO_OUTPUT")) cfg.output_dir = env;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graphevo: co-evolution of robot morphologies and GNN "
               "controllers in deterministic 2D environments"};
  app.require_subcommand(1);

  CommonOpts run_o, fine_o, grid_o;
  auto* run_cmd = app.add_subcommand("run", "execute (or resume) a full run");
  add_common(run_cmd, run_o);

  auto* fine_cmd = app.add_subcommand(
      "finetune", "run starting from a seed body (fixture name or graph "
                  "JSON path)");
  add_common(fine_cmd, fine_o);
  std::string fine_graph = "fish";
  bool constrained = false;
  fine_cmd->add_option("--graph", fine_graph,
                       "\"fish\", \"walker\", or a graph JSON path");
  fine_cmd->add_flag("--constrained", constrained,
                     "attributes-only fine-tuning (topology preserved)");

  auto* grid_cmd = app.add_subcommand(
      "grid", "expand list-valued config fields into one run per combination");
  add_common(grid_cmd, grid_o);

  auto* exp_cmd =
      app.add_subcommand("export-genealogy", "convert a run's genealogy to DOT");
  std::string exp_run, exp_out;
  exp_cmd->add_option("--run", exp_run, "run directory")->required();
  exp_cmd->add_option("--out", exp_out, "output DOT path");

  auto* rep_cmd = app.add_subcommand(
      "replay", "re-simulate a run's champion and write a trajectory CSV");
  std::string rep_run, rep_out;
  rep_cmd->add_option("--run", rep_run, "run directory")->required();
  rep_cmd->add_option("--out", rep_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      gevo::run_session(load_config(run_o));
      return 0;
    }
    if (fine_cmd->parsed()) {
      gevo::RunConfig cfg = load_config(fine_o);
      cfg.seed_graph = fine_graph;
      if (constrained) cfg.mut.constrained_mode = true;
      gevo::run_session(cfg);
      return 0;
    }
    if (grid_cmd->parsed()) {
      gevo::RunConfig base = load_config(grid_o);
      auto combos = gevo::expand_grid_text(gevo::read_file(grid_o.config));
      std::string root = base.output_dir;
      if (root.empty())
        throw gevo::ConfigError("grid requires an output directory");
      int idx = 0;
      for (const auto& text : combos) {
        gevo::RunConfig cfg = gevo::parse_config_text(text);
        if (grid_o.seed >= 0) cfg.evo.seed = static_cast<uint64_t>(grid_o.seed);
        if (grid_o.workers >= 0) cfg.workers = grid_o.workers;
        char name[32];
        std::snprintf(name, sizeof(name), "grid_%03d", idx++);
        cfg.output_dir = root + "/" + name;
        std::cout << name << ": running\n";
        gevo::run_session(cfg);
      }
      std::cout << "grid: " << idx << " runs complete\n";
      return 0;
    }
    if (exp_cmd->parsed()) {
      if (exp_out.empty()) exp_out = exp_run + "/genealogy.dot";
      gevo::export_genealogy(exp_run, exp_out);
      return 0;
    }
    if (rep_cmd->parsed()) {
      if (rep_out.empty()) rep_out = rep_run + "/trajectory.csv";
      gevo::replay_champion(rep_run, rep_out);
      return 0;
    }
  } catch (const gevo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
