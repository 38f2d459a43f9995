#include "graphevo/evolution.hpp"

#include <algorithm>
#include <cassert>
#include <limits>

#include "graphevo/stats.hpp"
#include "graphevo/workpool.hpp"

namespace gevo {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

GenealogyRecord* Genealogy::find(int species_id) {
  for (auto& r : records)
    if (r.species_id == species_id) return &r;
  return nullptr;
}

MorphGraph random_graph(const AttrSpace& space, Rng& rng) {
  int size = 1 + rng.uniform_int(4);
  MorphGraph g = MorphGraph::single_node(space.sample(rng));
  for (int i = 1; i < size; ++i) {
    auto next = add_node(g, space, rng);
    if (!next) break;
    g = std::move(*next);
  }
  return g;
}

namespace {

Species make_initial_species(const EvoInput& in, int id, int birth_gen,
                             uint64_t init_index) {
  Rng rng = Rng::keyed({in.evo.seed, kPurposeInit, init_index});
  Species sp;
  sp.graph = in.seed_graph ? canonicalize(*in.seed_graph)
                           : random_graph(in.space, rng);
  sp.policy = make_policy(in.method, sp.graph, in.gnn, in.fc, rng);
  sp.species_id = id;
  sp.birth_generation = birth_gen;
  sp.opt.beta = in.ppo.beta_init;
  sp.opt.lr = in.ppo.learning_rate;
  return sp;
}

double evaluate_rl(const EvoInput& in, Species& sp, int gen,
                   std::vector<TrainStatRow>& rows, uint64_t& steps) {
  Rng rng = Rng::keyed(
      {in.evo.seed, kPurposeEval, static_cast<uint64_t>(gen),
       static_cast<uint64_t>(sp.species_id)});
  auto env = make_env(sp.graph, in.env);
  Rollout last;
  for (int e = 0; e < in.ppo.epochs_per_generation; ++e) {
    last = collect(*env, *sp.policy, in.ppo.timesteps_per_update,
                   in.ppo.trunc_len, rng, in.ppo.reward_scale);
    steps += static_cast<uint64_t>(in.ppo.timesteps_per_update);
    UpdateStats st = update(*sp.policy, sp.graph, last, in.ppo, sp.opt, rng);
    rows.push_back({gen, sp.species_id, st.mean_reward, st.kl, st.beta,
                    st.value_loss});
  }
  double af = last.mean_episode_return();
  return std::isfinite(af) ? af : kNegInf;
}

}  // namespace

std::vector<int> select_survivors(const std::vector<Species>& pop, int k) {
  std::vector<int> idx(pop.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  auto key = [&](int i) {
    double af = pop[i].fitness.value_or(kNegInf);
    return std::tuple<double, int, int>(af, pop[i].birth_generation,
                                        pop[i].species_id);
  };
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return key(a) < key(b); });
  std::vector<bool> removed(pop.size(), false);
  for (int i = 0; i < k && i < static_cast<int>(idx.size()); ++i)
    removed[idx[i]] = true;
  std::vector<int> out;
  for (size_t i = 0; i < pop.size(); ++i)
    if (!removed[i]) out.push_back(static_cast<int>(i));
  return out;
}

EvoState init_state(const EvoInput& in) {
  EvoState st;
  st.surrogate = SurrogateModel(in.surr);
  {
    Rng srng = Rng::keyed({in.evo.seed, kPurposeSurrogate, 0, 0});
    st.surrogate.init_params(srng);
  }
  const int n = in.evo.n_species;
  for (int i = 0; i < n; ++i) {
    Species sp = make_initial_species(in, i, 0, static_cast<uint64_t>(i));
    GenealogyRecord rec;
    rec.species_id = sp.species_id;
    rec.birth_generation = 0;
    st.genealogy.records.push_back(rec);
    st.population.push_back(std::move(sp));
  }
  st.next_species_id = n;
  return st;
}

void run_generations(const EvoInput& in, EvoState& state,
                     const std::function<void(const EvoState&)>& on_generation) {
  const MethodTraits traits = traits_of(in.method, in.evo.use_gmuc);
  const int n = in.evo.n_species;
  const int k = in.evo.elim_count();
  assert(n > k && k >= 1);
  assert(in.evo.candidates >= n);

  for (int gen = state.next_gen; gen < in.evo.max_generations; ++gen) {
    // Controller resetting (all species, fair-competition option) and the
    // ESS-Sims rule of restarting training every generation.
    bool reset_now =
        (in.evo.reset_controllers && gen > 0 && gen % in.evo.reset_freq == 0) ||
        (traits.restart_every_generation && gen > 0);
    if (reset_now) {
      for (auto& sp : state.population) {
        Rng rng = Rng::keyed({in.evo.seed, kPurposeReset,
                              static_cast<uint64_t>(gen),
                              static_cast<uint64_t>(sp.species_id)});
        sp.policy->init_params(rng);
        sp.opt = OptimState{};
        sp.opt.beta = in.ppo.beta_init;
        sp.opt.lr = in.ppo.learning_rate;
      }
    }

    // Fitness inner loop, one species per task.
    const int pop_n = static_cast<int>(state.population.size());
    std::vector<std::vector<TrainStatRow>> row_buf(pop_n);
    std::vector<uint64_t> step_buf(pop_n, 0);
    std::vector<double> af(pop_n, kNegInf);
    parallel_for(pop_n, in.workers, [&](int i) {
      Species& sp = state.population[i];
      if (in.synthetic_fitness) {
        double f = in.synthetic_fitness(sp.graph);
        af[i] = std::isfinite(f) ? f : kNegInf;
        return;
      }
      try {
        af[i] = evaluate_rl(in, sp, gen, row_buf[i], step_buf[i]);
      } catch (const std::exception&) {
        af[i] = kNegInf;
      }
    });
    for (int i = 0; i < pop_n; ++i) {
      state.population[i].fitness = af[i];
      state.env_steps += step_buf[i];
      for (auto& r : row_buf[i]) state.training_rows.push_back(r);
      if (auto* rec = state.genealogy.find(state.population[i].species_id))
        rec->fitness_history.emplace_back(gen, af[i]);
    }

    // Champion tracking (strictly-greater keeps the earliest best).
    for (const auto& sp : state.population)
      if (sp.fitness.value_or(kNegInf) > state.best_af) {
        state.best_af = *sp.fitness;
        state.best_species_id = sp.species_id;
        state.best_species = sp;
      }

    // Generation metrics.
    {
      GenerationMetrics m;
      m.gen = gen;
      double best = kNegInf, worst = std::numeric_limits<double>::infinity();
      double sum = 0, nodes = 0;
      for (const auto& sp : state.population) {
        double f = sp.fitness.value_or(kNegInf);
        best = std::max(best, f);
        worst = std::min(worst, f);
        sum += f;
        nodes += sp.graph.node_count();
      }
      m.best_af = best;
      m.worst_af = worst;
      m.mean_af = sum / pop_n;
      m.mean_nodes = nodes / pop_n;
      state.metrics.push_back(m);
    }

    // Surrogate bookkeeping: held-out correlation on the just-observed pairs,
    // then absorb them into the dataset and refit.
    if (traits.thompson_pruning) {
      std::vector<double> pred, truth;
      for (const auto& sp : state.population) {
        double f = sp.fitness.value_or(kNegInf);
        if (!std::isfinite(f)) continue;
        pred.push_back(state.surrogate.predict(sp.graph));
        truth.push_back(f);
      }
      double held = spearman(pred, truth);
      for (const auto& sp : state.population)
        state.surrogate.add_sample(sp.graph, sp.fitness.value_or(kNegInf),
                                   gen);
      Rng frng = Rng::keyed({in.evo.seed, kPurposeSurrogate,
                             static_cast<uint64_t>(gen) + 1, 1});
      auto curve = state.surrogate.fit(frng);
      state.surrogate_rows.push_back(
          {gen, curve.empty() ? 0.0 : curve.back(), held});
    }

    state.next_gen = gen + 1;
    if (gen + 1 >= in.evo.max_generations) {
      if (on_generation) on_generation(state);
      break;
    }

    if (!traits.evolves) {
      // Random graph search: a fresh batch of independent random species.
      std::vector<Species> next;
      for (int i = 0; i < n; ++i) {
        uint64_t init_index =
            static_cast<uint64_t>(gen + 1) * static_cast<uint64_t>(n) + i;
        Species sp =
            make_initial_species(in, state.next_species_id++, gen + 1,
                                 init_index);
        GenealogyRecord rec;
        rec.species_id = sp.species_id;
        rec.birth_generation = gen + 1;
        state.genealogy.records.push_back(rec);
        next.push_back(std::move(sp));
      }
      state.population = std::move(next);
      if (on_generation) on_generation(state);
      continue;
    }

    // Remove worst K.
    auto surv_idx = select_survivors(state.population, k);
    std::vector<Species> survivors;
    for (int i : surv_idx) survivors.push_back(std::move(state.population[i]));

    // Mutate C candidates from uniformly sampled survivors (policy sharing
    // per the method's inheritance rule).
    struct Candidate {
      MorphGraph graph;
      MutationKind kind;
      int parent_idx;
      Inherited inh;
    };
    std::vector<Candidate> cands;
    cands.reserve(in.evo.candidates);
    for (int h = 0; h < in.evo.candidates; ++h) {
      Rng rng = Rng::keyed({in.evo.seed, kPurposeSpawn,
                            static_cast<uint64_t>(gen),
                            static_cast<uint64_t>(h)});
      int pi = rng.uniform_int(static_cast<int>(survivors.size()));
      MutationResult mr = mutate(survivors[pi].graph, in.mut, in.space, rng);
      Candidate c;
      c.graph = std::move(mr.graph);
      c.kind = mr.kind;
      c.parent_idx = pi;
      c.inh = inherit(in.method, in.evo.use_gmuc, survivors[pi], c.graph,
                      in.gnn, in.fc, in.ppo.beta_init, in.ppo.learning_rate,
                      rng);
      cands.push_back(std::move(c));
    }

    // Prune C candidates down to K.
    std::vector<int> keep;
    Rng prng = Rng::keyed({in.evo.seed, kPurposePrune,
                           static_cast<uint64_t>(gen)});
    if (traits.thompson_pruning) {
      std::vector<MorphGraph> graphs;
      graphs.reserve(cands.size());
      for (const auto& c : cands) graphs.push_back(c.graph);
      keep = prune_thompson(state.surrogate, graphs, k, prng);
    } else {
      std::vector<int> pool(cands.size());
      for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
      for (int i = 0; i < k; ++i) {
        int j = i + prng.uniform_int(static_cast<int>(pool.size()) - i);
        std::swap(pool[i], pool[j]);
        keep.push_back(pool[i]);
      }
      std::sort(keep.begin(), keep.end());
    }

    for (int ci : keep) {
      Candidate& c = cands[ci];
      Species child;
      child.graph = std::move(c.graph);
      child.policy = std::move(c.inh.policy);
      child.opt = std::move(c.inh.opt);
      child.species_id = state.next_species_id++;
      child.parent_id = survivors[c.parent_idx].species_id;
      child.birth_generation = gen + 1;
      GenealogyRecord rec;
      rec.species_id = child.species_id;
      rec.parent_id = *child.parent_id;
      rec.birth_generation = gen + 1;
      rec.mutation = to_string(c.kind);
      state.genealogy.records.push_back(rec);
      survivors.push_back(std::move(child));
    }
    state.population = std::move(survivors);
    assert(static_cast<int>(state.population.size()) == n);

    if (on_generation) on_generation(state);
  }
}

EvoState run(const EvoInput& in,
             const std::function<void(const EvoState&)>& on_generation) {
  EvoState st = init_state(in);
  run_generations(in, st, on_generation);
  return st;
}

}  // namespace gevo
