#include "graphevo/session.hpp"

#include <cmath>
#include <filesystem>
#include <set>
#include <thread>

#include "graphevo/io.hpp"
#include "json.hpp"

namespace gevo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError("config field '" + path + "': " + msg);
}

void check_keys(const json& obj, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      fail(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
}

void get_num(const json& obj, const std::string& base, const char* key,
             double& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number()) fail(base + key, "expected a number");
  out = v.get<double>();
}

void get_int(const json& obj, const std::string& base, const char* key,
             int& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) fail(base + key, "expected an integer");
  out = v.get<int>();
}

void get_u64(const json& obj, const std::string& base, const char* key,
             uint64_t& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) fail(base + key, "expected an integer");
  out = v.get<uint64_t>();
}

void get_bool(const json& obj, const std::string& base, const char* key,
              bool& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) fail(base + key, "expected a boolean");
  out = v.get<bool>();
}

void get_str(const json& obj, const std::string& base, const char* key,
             std::string& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_string()) fail(base + key, "expected a string");
  out = v.get<std::string>();
}

void get_range(const json& obj, const std::string& base, const char* key,
               Range& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  check_keys(v, base + key, {"lo", "hi"});
  get_num(v, base + key + ".", "lo", out.lo);
  get_num(v, base + key + ".", "hi", out.hi);
  if (!(out.lo <= out.hi)) fail(base + key, "requires lo <= hi");
}

}  // namespace

RunConfig parse_config_text(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "",
             {"method", "seed", "workers", "output_dir", "seed_graph", "env",
              "evolution", "ppo", "mutation", "surrogate", "policy", "fc",
              "attr_space"});
  RunConfig cfg;

  std::string method = "nge";
  get_str(j, "", "method", method);
  try {
    cfg.method = method_from_string(method);
  } catch (const std::exception& e) {
    fail("method", e.what());
  }
  get_u64(j, "", "seed", cfg.evo.seed);
  get_int(j, "", "workers", cfg.workers);
  get_str(j, "", "output_dir", cfg.output_dir);
  get_str(j, "", "seed_graph", cfg.seed_graph);

  if (j.contains("env")) {
    const auto& e = j.at("env");
    check_keys(e, "env",
               {"kind", "dt", "frame_skip", "horizon", "density",
                "drag_normal", "drag_tangent", "gravity", "contact_stiffness",
                "contact_damping", "friction_mu", "friction_viscous",
                "action_cost"});
    std::string kind = "fish2d";
    get_str(e, "env.", "kind", kind);
    if (kind == "fish2d")
      cfg.env = EnvSpec::fish();
    else if (kind == "walker2d")
      cfg.env = EnvSpec::walker();
    else
      fail("env.kind", "expected \"fish2d\" or \"walker2d\"");
    get_num(e, "env.", "dt", cfg.env.dt);
    get_int(e, "env.", "frame_skip", cfg.env.frame_skip);
    get_int(e, "env.", "horizon", cfg.env.horizon);
    get_num(e, "env.", "density", cfg.env.density);
    get_num(e, "env.", "drag_normal", cfg.env.drag_normal);
    get_num(e, "env.", "drag_tangent", cfg.env.drag_tangent);
    get_num(e, "env.", "gravity", cfg.env.gravity);
    get_num(e, "env.", "contact_stiffness", cfg.env.contact_stiffness);
    get_num(e, "env.", "contact_damping", cfg.env.contact_damping);
    get_num(e, "env.", "friction_mu", cfg.env.friction_mu);
    get_num(e, "env.", "friction_viscous", cfg.env.friction_viscous);
    get_num(e, "env.", "action_cost", cfg.env.action_cost);
  }

  if (j.contains("attr_space")) {
    const auto& a = j.at("attr_space");
    check_keys(a, "attr_space",
               {"geom_a", "geom_b", "attach_angle", "joint_range",
                "joint_gear", "max_nodes"});
    get_range(a, "attr_space.", "geom_a", cfg.space.geom_a);
    get_range(a, "attr_space.", "geom_b", cfg.space.geom_b);
    get_range(a, "attr_space.", "attach_angle", cfg.space.attach_angle);
    get_range(a, "attr_space.", "joint_range", cfg.space.joint_range);
    get_range(a, "attr_space.", "joint_gear", cfg.space.joint_gear);
    get_int(a, "attr_space.", "max_nodes", cfg.space.max_nodes);
  }

  if (j.contains("evolution")) {
    const auto& e = j.at("evolution");
    check_keys(e, "evolution",
               {"n_species", "elim_rate", "candidates", "max_generations",
                "reset_controllers", "reset_freq", "use_gmuc"});
    get_int(e, "evolution.", "n_species", cfg.evo.n_species);
    get_num(e, "evolution.", "elim_rate", cfg.evo.elim_rate);
    get_int(e, "evolution.", "candidates", cfg.evo.candidates);
    get_int(e, "evolution.", "max_generations", cfg.evo.max_generations);
    get_bool(e, "evolution.", "reset_controllers", cfg.evo.reset_controllers);
    get_int(e, "evolution.", "reset_freq", cfg.evo.reset_freq);
    get_bool(e, "evolution.", "use_gmuc", cfg.evo.use_gmuc);
  }

  if (j.contains("ppo")) {
    const auto& p = j.at("ppo");
    check_keys(p, "ppo",
               {"gamma", "lam", "kl_target", "beta_init",
                "timesteps_per_update", "epochs_per_generation",
                "minibatches_per_epoch", "learning_rate", "trunc_len",
                "value_coef", "reward_scale"});
    get_num(p, "ppo.", "gamma", cfg.ppo.gamma);
    get_num(p, "ppo.", "lam", cfg.ppo.lam);
    get_num(p, "ppo.", "kl_target", cfg.ppo.kl_target);
    get_num(p, "ppo.", "beta_init", cfg.ppo.beta_init);
    get_int(p, "ppo.", "timesteps_per_update", cfg.ppo.timesteps_per_update);
    get_int(p, "ppo.", "epochs_per_generation", cfg.ppo.epochs_per_generation);
    get_int(p, "ppo.", "minibatches_per_epoch", cfg.ppo.minibatches_per_epoch);
    get_num(p, "ppo.", "learning_rate", cfg.ppo.learning_rate);
    get_int(p, "ppo.", "trunc_len", cfg.ppo.trunc_len);
    get_num(p, "ppo.", "value_coef", cfg.ppo.value_coef);
    get_num(p, "ppo.", "reward_scale", cfg.ppo.reward_scale);
  }

  // Perturbation scales default to 10% of the (possibly overridden) space.
  cfg.mut.pert_sigma = PertSigma::defaults_for(cfg.space);
  if (j.contains("mutation")) {
    const auto& m = j.at("mutation");
    check_keys(m, "mutation",
               {"p_add_node", "p_add_graph", "p_del_graph", "p_pert_graph",
                "pert_sigma", "mirror_on_add_graph", "constrained_mode"});
    get_num(m, "mutation.", "p_add_node", cfg.mut.p_add_node);
    get_num(m, "mutation.", "p_add_graph", cfg.mut.p_add_graph);
    get_num(m, "mutation.", "p_del_graph", cfg.mut.p_del_graph);
    get_num(m, "mutation.", "p_pert_graph", cfg.mut.p_pert_graph);
    get_bool(m, "mutation.", "mirror_on_add_graph", cfg.mut.mirror_on_add_graph);
    get_bool(m, "mutation.", "constrained_mode", cfg.mut.constrained_mode);
    if (m.contains("pert_sigma")) {
      const auto& s = m.at("pert_sigma");
      check_keys(s, "mutation.pert_sigma",
                 {"geom_a", "geom_b", "attach_angle", "joint_range",
                  "joint_gear"});
      get_num(s, "mutation.pert_sigma.", "geom_a", cfg.mut.pert_sigma.geom_a);
      get_num(s, "mutation.pert_sigma.", "geom_b", cfg.mut.pert_sigma.geom_b);
      get_num(s, "mutation.pert_sigma.", "attach_angle",
              cfg.mut.pert_sigma.attach_angle);
      get_num(s, "mutation.pert_sigma.", "joint_range",
              cfg.mut.pert_sigma.joint_range);
      get_num(s, "mutation.pert_sigma.", "joint_gear",
              cfg.mut.pert_sigma.joint_gear);
    }
  }

  if (j.contains("surrogate")) {
    const auto& s = j.at("surrogate");
    check_keys(s, "surrogate",
               {"d_s", "T", "dropout_rate", "fit_epochs", "lr", "minibatch",
                "fit_window", "prune_temperature"});
    get_int(s, "surrogate.", "d_s", cfg.surr.d_s);
    get_int(s, "surrogate.", "T", cfg.surr.T);
    get_num(s, "surrogate.", "dropout_rate", cfg.surr.dropout_rate);
    get_int(s, "surrogate.", "fit_epochs", cfg.surr.fit_epochs);
    get_num(s, "surrogate.", "lr", cfg.surr.lr);
    get_int(s, "surrogate.", "minibatch", cfg.surr.minibatch);
    get_int(s, "surrogate.", "fit_window", cfg.surr.fit_window);
    get_num(s, "surrogate.", "prune_temperature", cfg.surr.prune_temperature);
  }

  if (j.contains("policy")) {
    const auto& p = j.at("policy");
    check_keys(p, "policy", {"d_h", "d_obs", "d_attr", "T"});
    get_int(p, "policy.", "d_h", cfg.gnn.d_h);
    get_int(p, "policy.", "d_obs", cfg.gnn.d_obs);
    get_int(p, "policy.", "d_attr", cfg.gnn.d_attr);
    get_int(p, "policy.", "T", cfg.gnn.T);
  }
  if (j.contains("fc")) {
    const auto& f = j.at("fc");
    check_keys(f, "fc", {"hidden"});
    get_int(f, "fc.", "hidden", cfg.fc.hidden);
  }

  // Cross-field invariants.
  if (cfg.evo.n_species < 2) fail("evolution.n_species", "must be >= 2");
  int kcount = cfg.evo.elim_count();
  if (!(cfg.evo.n_species > kcount && kcount >= 1))
    fail("evolution.elim_rate",
         "requires N > ceil(elim_rate*N) >= 1 (N=" +
             std::to_string(cfg.evo.n_species) +
             ", K=" + std::to_string(kcount) + ")");
  if (cfg.evo.candidates < cfg.evo.n_species)
    fail("evolution.candidates", "must be >= n_species");
  if (cfg.evo.max_generations < 1)
    fail("evolution.max_generations", "must be >= 1");
  if (cfg.evo.reset_freq < 1) fail("evolution.reset_freq", "must be >= 1");
  double psum = cfg.mut.p_add_node + cfg.mut.p_add_graph +
                cfg.mut.p_del_graph + cfg.mut.p_pert_graph;
  if (cfg.mut.p_add_node < 0 || cfg.mut.p_add_graph < 0 ||
      cfg.mut.p_del_graph < 0 || cfg.mut.p_pert_graph < 0 ||
      std::abs(psum - 1.0) > 1e-6)
    fail("mutation", "primitive probabilities must be nonnegative and sum to 1");
  if (cfg.mut.constrained_mode && cfg.seed_graph.empty())
    fail("mutation.constrained_mode", "requires a seed_graph");
  if (cfg.env.dt <= 0) fail("env.dt", "must be > 0");
  if (cfg.env.frame_skip < 1) fail("env.frame_skip", "must be >= 1");
  if (cfg.env.horizon < 1) fail("env.horizon", "must be >= 1");
  if (cfg.ppo.trunc_len < 1) fail("ppo.trunc_len", "must be >= 1");
  if (cfg.ppo.trunc_len > cfg.env.horizon)
    fail("ppo.trunc_len", "must not exceed env.horizon");
  if (cfg.ppo.timesteps_per_update < 1)
    fail("ppo.timesteps_per_update", "must be >= 1");
  if (cfg.ppo.epochs_per_generation < 1)
    fail("ppo.epochs_per_generation", "must be >= 1");
  if (!(cfg.ppo.gamma > 0 && cfg.ppo.gamma < 1))
    fail("ppo.gamma", "must lie in (0,1)");
  if (!(cfg.ppo.lam >= 0 && cfg.ppo.lam <= 1))
    fail("ppo.lam", "must lie in [0,1]");
  if (cfg.workers < 0) fail("workers", "must be >= 0");
  if (cfg.space.max_nodes < 1) fail("attr_space.max_nodes", "must be >= 1");
  if (cfg.surr.dropout_rate < 0 || cfg.surr.dropout_rate >= 1)
    fail("surrogate.dropout_rate", "must lie in [0,1)");
  return cfg;
}

std::string resolved_config_text(const RunConfig& cfg) {
  json j;
  j["method"] = to_string(cfg.method);
  j["seed"] = cfg.evo.seed;
  j["workers"] = cfg.workers;
  j["output_dir"] = cfg.output_dir;
  j["seed_graph"] = cfg.seed_graph;
  j["env"] = {{"kind", cfg.env.kind == EnvKind::Fish2d ? "fish2d" : "walker2d"},
              {"dt", cfg.env.dt},
              {"frame_skip", cfg.env.frame_skip},
              {"horizon", cfg.env.horizon},
              {"density", cfg.env.density},
              {"drag_normal", cfg.env.drag_normal},
              {"drag_tangent", cfg.env.drag_tangent},
              {"gravity", cfg.env.gravity},
              {"contact_stiffness", cfg.env.contact_stiffness},
              {"contact_damping", cfg.env.contact_damping},
              {"friction_mu", cfg.env.friction_mu},
              {"friction_viscous", cfg.env.friction_viscous},
              {"action_cost", cfg.env.action_cost}};
  auto range = [](const Range& r) {
    return json{{"lo", r.lo}, {"hi", r.hi}};
  };
  j["attr_space"] = {{"geom_a", range(cfg.space.geom_a)},
                     {"geom_b", range(cfg.space.geom_b)},
                     {"attach_angle", range(cfg.space.attach_angle)},
                     {"joint_range", range(cfg.space.joint_range)},
                     {"joint_gear", range(cfg.space.joint_gear)},
                     {"max_nodes", cfg.space.max_nodes}};
  j["evolution"] = {{"n_species", cfg.evo.n_species},
                    {"elim_rate", cfg.evo.elim_rate},
                    {"candidates", cfg.evo.candidates},
                    {"max_generations", cfg.evo.max_generations},
                    {"reset_controllers", cfg.evo.reset_controllers},
                    {"reset_freq", cfg.evo.reset_freq},
                    {"use_gmuc", cfg.evo.use_gmuc}};
  j["ppo"] = {{"gamma", cfg.ppo.gamma},
              {"lam", cfg.ppo.lam},
              {"kl_target", cfg.ppo.kl_target},
              {"beta_init", cfg.ppo.beta_init},
              {"timesteps_per_update", cfg.ppo.timesteps_per_update},
              {"epochs_per_generation", cfg.ppo.epochs_per_generation},
              {"minibatches_per_epoch", cfg.ppo.minibatches_per_epoch},
              {"learning_rate", cfg.ppo.learning_rate},
              {"trunc_len", cfg.ppo.trunc_len},
              {"value_coef", cfg.ppo.value_coef},
              {"reward_scale", cfg.ppo.reward_scale}};
  j["mutation"] = {{"p_add_node", cfg.mut.p_add_node},
                   {"p_add_graph", cfg.mut.p_add_graph},
                   {"p_del_graph", cfg.mut.p_del_graph},
                   {"p_pert_graph", cfg.mut.p_pert_graph},
                   {"pert_sigma",
                    {{"geom_a", cfg.mut.pert_sigma.geom_a},
                     {"geom_b", cfg.mut.pert_sigma.geom_b},
                     {"attach_angle", cfg.mut.pert_sigma.attach_angle},
                     {"joint_range", cfg.mut.pert_sigma.joint_range},
                     {"joint_gear", cfg.mut.pert_sigma.joint_gear}}},
                   {"mirror_on_add_graph", cfg.mut.mirror_on_add_graph},
                   {"constrained_mode", cfg.mut.constrained_mode}};
  j["surrogate"] = {{"d_s", cfg.surr.d_s},
                    {"T", cfg.surr.T},
                    {"dropout_rate", cfg.surr.dropout_rate},
                    {"fit_epochs", cfg.surr.fit_epochs},
                    {"lr", cfg.surr.lr},
                    {"minibatch", cfg.surr.minibatch},
                    {"fit_window", cfg.surr.fit_window},
                    {"prune_temperature", cfg.surr.prune_temperature}};
  j["policy"] = {{"d_h", cfg.gnn.d_h},
                 {"d_obs", cfg.gnn.d_obs},
                 {"d_attr", cfg.gnn.d_attr},
                 {"T", cfg.gnn.T}};
  j["fc"] = {{"hidden", cfg.fc.hidden}};
  return j.dump(2) + "\n";
}

std::vector<std::string> expand_grid_text(const std::string& json_text) {
  json base;
  try {
    base = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  struct Dim {
    std::string pointer;
    json values;
  };
  std::vector<Dim> dims;
  std::function<void(const json&, const std::string&)> walk =
      [&](const json& node, const std::string& ptr) {
        if (node.is_array()) {
          if (node.empty()) throw ConfigError("grid list at '" + ptr + "' is empty");
          dims.push_back({ptr, node});
          return;
        }
        if (node.is_object())
          for (auto it = node.begin(); it != node.end(); ++it)
            walk(it.value(), ptr + "/" + it.key());
      };
  walk(base, "");
  std::vector<std::string> out;
  size_t combos = 1;
  for (const auto& d : dims) combos *= d.values.size();
  for (size_t c = 0; c < combos; ++c) {
    json cfg = base;
    size_t rem = c;
    for (const auto& d : dims) {
      size_t i = rem % d.values.size();
      rem /= d.values.size();
      cfg[json::json_pointer(d.pointer)] = d.values[i];
    }
    out.push_back(cfg.dump());
  }
  return out;
}

MorphGraph fixture_fish() {
  constexpr double kPi = 3.14159265358979323846;
  MorphGraph g;
  g.root_id = 0;
  g.nodes = {{0, {0.28, 0.10, 0.0, 0.8, 150.0}},
             {1, {0.12, 0.03, 1.35, 0.9, 150.0}},
             {2, {0.12, 0.03, -1.35, 0.9, 150.0}},
             {3, {0.14, 0.04, kPi, 1.2, 200.0}},
             {4, {0.12, 0.035, 0.0, 1.2, 200.0}}};
  g.edges = {{0, 1}, {0, 2}, {0, 3}, {3, 4}};
  return canonicalize(g);
}

MorphGraph fixture_walker() {
  MorphGraph g;
  g.root_id = 0;
  g.nodes = {{0, {0.25, 0.07, 0.0, 0.5, 100.0}},
             {1, {0.16, 0.04, -1.95, 0.9, 120.0}},
             {2, {0.16, 0.04, -1.15, 0.9, 120.0}},
             {3, {0.15, 0.035, 0.35, 0.9, 90.0}},
             {4, {0.15, 0.035, -0.35, 0.9, 90.0}},
             {5, {0.09, 0.03, 1.2, 0.7, 60.0}},
             {6, {0.09, 0.03, 1.2, 0.7, 60.0}}};
  g.edges = {{0, 1}, {0, 2}, {1, 3}, {2, 4}, {3, 5}, {4, 6}};
  return canonicalize(g);
}

namespace {

void write_tensors(BinWriter& w, const std::vector<const Tensor*>& ts) {
  w.u64(ts.size());
  for (const Tensor* t : ts) {
    w.i64(t->rows);
    w.i64(t->cols);
    w.doubles(t->d);
  }
}

void read_tensors(BinReader& r, const std::vector<Tensor*>& ts) {
  size_t n = r.u64();
  if (n != ts.size()) throw std::runtime_error("state tensor count mismatch");
  for (Tensor* t : ts) {
    int rows = static_cast<int>(r.i64());
    int cols = static_cast<int>(r.i64());
    if (rows != t->rows || cols != t->cols)
      throw std::runtime_error("state tensor shape mismatch");
    t->d = r.doubles();
    if (static_cast<int>(t->d.size()) != rows * cols)
      throw std::runtime_error("state tensor size mismatch");
  }
}

void write_policy(BinWriter& w, const Policy& p) {
  if (const auto* g = dynamic_cast<const GnnPolicy*>(&p)) {
    w.str("gnn");
    w.i64(g->cfg_.d_h);
    w.i64(g->cfg_.d_obs);
    w.i64(g->cfg_.d_attr);
    w.i64(g->cfg_.T);
    w.i64(g->cfg_.obs_width);
    w.u8(g->cfg_.messages ? 1 : 0);
    write_tensors(w, p.params());
    return;
  }
  if (const auto* f = dynamic_cast<const FcPolicy*>(&p)) {
    w.str("fc");
    w.i64(f->cfg_.hidden);
    w.i64(f->cfg_.obs_width);
    w.i64(f->input_width());
    w.i64(f->n_act_);
    write_tensors(w, p.params());
    return;
  }
  throw std::runtime_error("unknown policy family");
}

std::unique_ptr<Policy> read_policy(BinReader& r) {
  std::string kind = r.str();
  if (kind == "gnn") {
    GnnConfig cfg;
    cfg.d_h = static_cast<int>(r.i64());
    cfg.d_obs = static_cast<int>(r.i64());
    cfg.d_attr = static_cast<int>(r.i64());
    cfg.T = static_cast<int>(r.i64());
    cfg.obs_width = static_cast<int>(r.i64());
    cfg.messages = r.u8() != 0;
    auto p = std::make_unique<GnnPolicy>(cfg);
    read_tensors(r, p->params());
    return p;
  }
  if (kind == "fc") {
    FcConfig cfg;
    cfg.hidden = static_cast<int>(r.i64());
    cfg.obs_width = static_cast<int>(r.i64());
    int in = static_cast<int>(r.i64());
    int na = static_cast<int>(r.i64());
    auto p = std::make_unique<FcPolicy>(cfg, in, na);
    read_tensors(r, p->params());
    return p;
  }
  throw std::runtime_error("unknown policy kind in state: " + kind);
}

void write_adam(BinWriter& w, const Adam& a) {
  w.i64(a.t);
  w.u64(a.m.size());
  for (const auto& v : a.m) w.doubles(v);
  w.u64(a.v.size());
  for (const auto& v : a.v) w.doubles(v);
}

Adam read_adam(BinReader& r) {
  Adam a;
  a.t = r.i64();
  size_t nm = r.u64();
  for (size_t i = 0; i < nm; ++i) a.m.push_back(r.doubles());
  size_t nv = r.u64();
  for (size_t i = 0; i < nv; ++i) a.v.push_back(r.doubles());
  return a;
}

void write_species(BinWriter& w, const Species& s) {
  w.i64(s.species_id);
  w.i64(s.parent_id.value_or(-1));
  w.i64(s.birth_generation);
  w.u8(s.fitness.has_value() ? 1 : 0);
  w.f64(s.fitness.value_or(0.0));
  w.str(serialize(s.graph));
  w.u8(s.policy ? 1 : 0);
  if (s.policy) write_policy(w, *s.policy);
  w.f64(s.opt.beta);
  w.f64(s.opt.lr);
  w.i64(s.opt.divergence_events);
  write_adam(w, s.opt.adam);
}

Species read_species(BinReader& r, const AttrSpace& space) {
  Species s;
  s.species_id = static_cast<int>(r.i64());
  int64_t pid = r.i64();
  if (pid >= 0) s.parent_id = static_cast<int>(pid);
  s.birth_generation = static_cast<int>(r.i64());
  bool has_fit = r.u8() != 0;
  double fit = r.f64();
  if (has_fit) s.fitness = fit;
  s.graph = deserialize(r.str(), space);
  if (r.u8()) s.policy = read_policy(r);
  s.opt.beta = r.f64();
  s.opt.lr = r.f64();
  s.opt.divergence_events = static_cast<int>(r.i64());
  s.opt.adam = read_adam(r);
  return s;
}

constexpr char kStateMagic[] = "GEVOSTATE1";

}  // namespace

std::string serialize_state(const EvoState& st, const std::string& config_text) {
  BinWriter w;
  w.str(kStateMagic);
  w.str(config_text);
  w.i64(st.next_gen);
  w.i64(st.next_species_id);
  w.u64(st.env_steps);
  w.u64(st.population.size());
  // AttrSpace is embedded in config_text; species graphs revalidate on load.
  for (const auto& s : st.population) write_species(w, s);
  w.u64(st.genealogy.records.size());
  for (const auto& rec : st.genealogy.records) {
    w.i64(rec.species_id);
    w.i64(rec.parent_id);
    w.i64(rec.birth_generation);
    w.str(rec.mutation);
    w.u64(rec.fitness_history.size());
    for (auto [g, af] : rec.fitness_history) {
      w.i64(g);
      w.f64(af);
    }
  }
  w.u64(st.metrics.size());
  for (const auto& m : st.metrics) {
    w.i64(m.gen);
    w.f64(m.best_af);
    w.f64(m.mean_af);
    w.f64(m.worst_af);
    w.f64(m.mean_nodes);
  }
  w.u64(st.training_rows.size());
  for (const auto& t : st.training_rows) {
    w.i64(t.generation);
    w.i64(t.species_id);
    w.f64(t.mean_reward);
    w.f64(t.kl);
    w.f64(t.beta);
    w.f64(t.value_loss);
  }
  w.u64(st.surrogate_rows.size());
  for (const auto& s : st.surrogate_rows) {
    w.i64(s.generation);
    w.f64(s.train_loss);
    w.f64(s.heldout_spearman);
  }
  // Surrogate model.
  w.i64(st.surrogate.cfg_.d_s);
  w.i64(st.surrogate.cfg_.T);
  w.f64(st.surrogate.cfg_.dropout_rate);
  w.i64(st.surrogate.cfg_.fit_epochs);
  w.f64(st.surrogate.cfg_.lr);
  w.i64(st.surrogate.cfg_.minibatch);
  w.i64(st.surrogate.cfg_.fit_window);
  w.f64(st.surrogate.cfg_.prune_temperature);
  w.f64(st.surrogate.t_mean);
  w.f64(st.surrogate.t_std);
  write_tensors(w, st.surrogate.params());
  write_adam(w, st.surrogate.adam);
  w.u64(st.surrogate.dataset().size());
  for (const auto& s : st.surrogate.dataset()) {
    w.str(serialize(s.graph));
    w.f64(s.fitness);
    w.i64(s.generation);
  }
  w.f64(st.best_af);
  w.i64(st.best_species_id);
  w.u8(st.best_species.policy ? 1 : 0);
  if (st.best_species.policy) write_species(w, st.best_species);
  return w.data();
}

EvoState deserialize_state(const std::string& data, std::string* config_text) {
  BinReader r(data);
  if (r.str() != kStateMagic) throw std::runtime_error("bad state magic");
  std::string cfg_text = r.str();
  if (config_text) *config_text = cfg_text;
  RunConfig cfg = parse_config_text(cfg_text);

  EvoState st;
  st.next_gen = static_cast<int>(r.i64());
  st.next_species_id = static_cast<int>(r.i64());
  st.env_steps = r.u64();
  size_t pn = r.u64();
  for (size_t i = 0; i < pn; ++i)
    st.population.push_back(read_species(r, cfg.space));
  size_t gn = r.u64();
  for (size_t i = 0; i < gn; ++i) {
    GenealogyRecord rec;
    rec.species_id = static_cast<int>(r.i64());
    rec.parent_id = static_cast<int>(r.i64());
    rec.birth_generation = static_cast<int>(r.i64());
    rec.mutation = r.str();
    size_t hn = r.u64();
    for (size_t h = 0; h < hn; ++h) {
      int g = static_cast<int>(r.i64());
      double af = r.f64();
      rec.fitness_history.emplace_back(g, af);
    }
    st.genealogy.records.push_back(std::move(rec));
  }
  size_t mn = r.u64();
  for (size_t i = 0; i < mn; ++i) {
    GenerationMetrics m;
    m.gen = static_cast<int>(r.i64());
    m.best_af = r.f64();
    m.mean_af = r.f64();
    m.worst_af = r.f64();
    m.mean_nodes = r.f64();
    st.metrics.push_back(m);
  }
  size_t tn = r.u64();
  for (size_t i = 0; i < tn; ++i) {
    TrainStatRow t;
    t.generation = static_cast<int>(r.i64());
    t.species_id = static_cast<int>(r.i64());
    t.mean_reward = r.f64();
    t.kl = r.f64();
    t.beta = r.f64();
    t.value_loss = r.f64();
    st.training_rows.push_back(t);
  }
  size_t sn = r.u64();
  for (size_t i = 0; i < sn; ++i) {
    SurrogateRow s;
    s.generation = static_cast<int>(r.i64());
    s.train_loss = r.f64();
    s.heldout_spearman = r.f64();
    st.surrogate_rows.push_back(s);
  }
  SurrogateConfig scfg;
  scfg.d_s = static_cast<int>(r.i64());
  scfg.T = static_cast<int>(r.i64());
  scfg.dropout_rate = r.f64();
  scfg.fit_epochs = static_cast<int>(r.i64());
  scfg.lr = r.f64();
  scfg.minibatch = static_cast<int>(r.i64());
  scfg.fit_window = static_cast<int>(r.i64());
  scfg.prune_temperature = r.f64();
  st.surrogate = SurrogateModel(scfg);
  st.surrogate.t_mean = r.f64();
  st.surrogate.t_std = r.f64();
  read_tensors(r, st.surrogate.params());
  st.surrogate.adam = read_adam(r);
  size_t dn = r.u64();
  for (size_t i = 0; i < dn; ++i) {
    std::string gtext = r.str();
    double fit = r.f64();
    int gen = static_cast<int>(r.i64());
    st.surrogate.add_sample(deserialize(gtext, cfg.space), fit, gen);
  }
  st.best_af = r.f64();
  st.best_species_id = static_cast<int>(r.i64());
  if (r.u8()) st.best_species = read_species(r, cfg.space);
  return st;
}

std::string genealogy_to_json(const Genealogy& g) {
  json j;
  j["records"] = json::array();
  for (const auto& rec : g.records) {
    json r;
    r["species_id"] = rec.species_id;
    if (rec.parent_id >= 0)
      r["parent_id"] = rec.parent_id;
    else
      r["parent_id"] = nullptr;
    r["birth_generation"] = rec.birth_generation;
    r["mutation"] = rec.mutation;
    r["fitness_history"] = json::array();
    for (auto [gen, af] : rec.fitness_history)
      r["fitness_history"].push_back({{"gen", gen}, {"af", dtos(af)}});
    j["records"].push_back(std::move(r));
  }
  return j.dump(2) + "\n";
}

std::string genealogy_to_dot(const Genealogy& g) {
  std::string out = "digraph genealogy {\n  rankdir=TB;\n";
  for (const auto& rec : g.records) {
    double last_af = rec.fitness_history.empty()
                         ? std::numeric_limits<double>::quiet_NaN()
                         : rec.fitness_history.back().second;
    out += "  s" + std::to_string(rec.species_id) + " [label=\"" +
           std::to_string(rec.species_id) + "|g" +
           std::to_string(rec.birth_generation) + "|" + rec.mutation +
           "|af=" + dtos(last_af) + "\"];\n";
  }
  for (const auto& rec : g.records)
    if (rec.parent_id >= 0)
      out += "  s" + std::to_string(rec.parent_id) + " -> s" +
             std::to_string(rec.species_id) + ";\n";
  out += "}\n";
  return out;
}

std::string metrics_to_csv(const std::vector<GenerationMetrics>& rows,
                           Method method) {
  std::string out = "gen,best_af,mean_af,worst_af,mean_nodes,method\n";
  for (const auto& m : rows)
    out += std::to_string(m.gen) + "," + dtos(m.best_af) + "," +
           dtos(m.mean_af) + "," + dtos(m.worst_af) + "," +
           dtos(m.mean_nodes) + "," + to_string(method) + "\n";
  return out;
}

std::string training_rows_to_csv(const std::vector<TrainStatRow>& rows) {
  std::string out = "generation,species_id,mean_reward,kl,beta,value_loss\n";
  for (const auto& t : rows)
    out += std::to_string(t.generation) + "," + std::to_string(t.species_id) +
           "," + dtos(t.mean_reward) + "," + dtos(t.kl) + "," + dtos(t.beta) +
           "," + dtos(t.value_loss) + "\n";
  return out;
}

std::string surrogate_rows_to_csv(const std::vector<SurrogateRow>& rows) {
  std::string out = "generation,train_loss,heldout_spearman\n";
  for (const auto& s : rows)
    out += std::to_string(s.generation) + "," + dtos(s.train_loss) + "," +
           dtos(s.heldout_spearman) + "\n";
  return out;
}

EvoInput make_evo_input(const RunConfig& cfg) {
  EvoInput in;
  in.method = cfg.method;
  in.evo = cfg.evo;
  in.env = cfg.env;
  in.ppo = cfg.ppo;
  in.mut = cfg.mut;
  in.surr = cfg.surr;
  in.space = cfg.space;
  in.gnn = cfg.gnn;
  in.gnn.obs_width = 6;
  in.fc = cfg.fc;
  in.fc.obs_width = 6;
  in.workers = cfg.workers > 0
                   ? cfg.workers
                   : std::max(1u, std::thread::hardware_concurrency());
  if (!cfg.seed_graph.empty()) {
    if (cfg.seed_graph == "fish")
      in.seed_graph = fixture_fish();
    else if (cfg.seed_graph == "walker")
      in.seed_graph = fixture_walker();
    else
      in.seed_graph = deserialize(read_file(cfg.seed_graph), cfg.space);
  }
  return in;
}

namespace {

void save_species_checkpoint(const Species& s, const std::string& path) {
  if (const auto* g = dynamic_cast<const GnnPolicy*>(s.policy.get())) {
    g->save_checkpoint(path);
    return;
  }
  // FC baseline: same container shape, header dims are
  // (input_width, hidden, n_act).
  const auto* f = dynamic_cast<const FcPolicy*>(s.policy.get());
  if (!f) throw std::runtime_error("unknown policy family for checkpoint");
  std::ofstream os(path, std::ios::binary);
  uint32_t header[4] = {static_cast<uint32_t>(f->input_width()),
                        static_cast<uint32_t>(f->cfg_.hidden),
                        static_cast<uint32_t>(f->n_act_), 1u};
  os.write(reinterpret_cast<const char*>(header), sizeof(header));
  for (const Tensor* t : f->params())
    os.write(reinterpret_cast<const char*>(t->d.data()),
             static_cast<std::streamsize>(t->d.size() * sizeof(double)));
}

}  // namespace

EvoState run_session(const RunConfig& cfg) {
  if (cfg.output_dir.empty())
    throw ConfigError("output_dir is required (flag --output, config field "
                      "output_dir, or GRAPH_EVO_OUTPUT)");
  fs::create_directories(cfg.output_dir);
  fs::create_directories(cfg.output_dir + "/checkpoints");
  fs::create_directories(cfg.output_dir + "/best");

  std::string resolved = resolved_config_text(cfg);
  write_file(cfg.output_dir + "/config.resolved.json", resolved);

  EvoInput in = make_evo_input(cfg);
  std::string state_path = cfg.output_dir + "/checkpoints/state.bin";

  EvoState st;
  if (fs::exists(state_path)) {
    std::string prev_cfg;
    st = deserialize_state(read_file(state_path), &prev_cfg);
    if (prev_cfg != resolved)
      throw ConfigError("existing checkpoint in '" + cfg.output_dir +
                        "' was produced by a different config; refusing to "
                        "resume");
  } else {
    st = init_state(in);
  }

  auto checkpoint = [&](const EvoState& s) {
    std::string tmp = state_path + ".tmp";
    write_file(tmp, serialize_state(s, resolved));
    fs::rename(tmp, state_path);
  };
  run_generations(in, st, checkpoint);

  write_file(cfg.output_dir + "/metrics.csv",
             metrics_to_csv(st.metrics, cfg.method));
  write_file(cfg.output_dir + "/training_stats.csv",
             training_rows_to_csv(st.training_rows));
  write_file(cfg.output_dir + "/surrogate.csv",
             surrogate_rows_to_csv(st.surrogate_rows));
  write_file(cfg.output_dir + "/genealogy.json",
             genealogy_to_json(st.genealogy));
  write_file(cfg.output_dir + "/genealogy.dot", genealogy_to_dot(st.genealogy));
  if (st.best_species.policy) {
    write_file(cfg.output_dir + "/best/graph.json",
               serialize(st.best_species.graph));
    save_species_checkpoint(st.best_species,
                            cfg.output_dir + "/best/species.bin");
  }
  {
    json s;
    s["best_af"] = dtos(st.best_af);
    s["best_species_id"] = st.best_species_id;
    s["env_steps"] = st.env_steps;
    s["generations"] = st.next_gen;
    write_file(cfg.output_dir + "/summary.json", s.dump(2) + "\n");
  }
  return st;
}

void export_genealogy(const std::string& run_dir,
                      const std::string& out_path) {
  EvoState st = deserialize_state(
      read_file(run_dir + "/checkpoints/state.bin"), nullptr);
  write_file(out_path, genealogy_to_dot(st.genealogy));
}

void replay_champion(const std::string& run_dir, const std::string& out_csv) {
  std::string cfg_text;
  EvoState st = deserialize_state(
      read_file(run_dir + "/checkpoints/state.bin"), &cfg_text);
  RunConfig cfg = parse_config_text(cfg_text);
  if (!st.best_species.policy)
    throw std::runtime_error("run has no champion species to replay");
  const Species& champ = st.best_species;
  auto env = make_env(champ.graph, cfg.env);
  Rng rng = Rng::keyed({cfg.evo.seed, kPurposeEnv});
  BodyState s = env->initial_state(rng);
  std::vector<double> hidden(champ.policy->hidden_size(champ.graph), 0.0);
  std::vector<double> obs(static_cast<size_t>(champ.graph.node_count()) *
                          env->obs_width());
  std::vector<double> mu, sigma;
  std::string csv = "t,torso_x,torso_y,reward\n";
  for (int t = 0; t < cfg.env.horizon; ++t) {
    env->observe(s, obs);
    double value = 0;
    champ.policy->forward(champ.graph, obs, hidden, mu, sigma, value);
    StepResult sr = env->step(s, mu);  // mean actions
    csv += std::to_string(t) + "," + dtos(sr.next.links[0].px) + "," +
           dtos(sr.next.links[0].py) + "," + dtos(sr.reward) + "\n";
    if (sr.done) break;
    s = sr.next;
  }
  write_file(out_csv, csv);
}

}  // namespace gevo
