#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "graphevo/evolution.hpp"
#include "graphevo/surrogate.hpp"
#include "helpers.hpp"

using namespace gevo;

namespace {
SurrogateConfig small_cfg() {
  SurrogateConfig c;
  c.d_s = 12;
  c.T = 2;
  c.fit_epochs = 60;
  c.minibatch = 16;
  return c;
}

std::vector<MorphGraph> random_graphs(int n, Rng& rng) {
  AttrSpace space;
  std::vector<MorphGraph> out;
  for (int i = 0; i < n; ++i) out.push_back(random_graph(space, rng));
  return out;
}
}  // namespace

TEST_CASE("zero weights predict exactly zero") {
  SurrogateModel m(small_cfg());
  Rng rng(1);
  MorphGraph g = random_graph(AttrSpace{}, rng);
  CHECK(m.predict(g) == 0.0);
}

TEST_CASE("an all-ones mask is identical to no mask") {
  SurrogateConfig cfg = small_cfg();
  cfg.dropout_rate = 0.0;  // keep-prob 1: gate entries are exactly 1
  SurrogateModel m(cfg);
  Rng rng(2);
  m.init_params(rng);
  DropoutMask ones = m.sample_mask(rng);
  for (double v : ones.gate) CHECK(v == 1.0);
  MorphGraph g = random_graph(AttrSpace{}, rng);
  CHECK(m.predict(g, &ones) == m.predict(g));
}

TEST_CASE("prediction is invariant under node relabeling") {
  SurrogateModel m(small_cfg());
  Rng rng(3);
  m.init_params(rng);
  AttrSpace space;
  for (int trial = 0; trial < 50; ++trial) {
    MorphGraph g = random_graph(space, rng);
    int n = g.node_count();
    // Random relabeling that keeps the root at some permuted id.
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n; i > 1; --i)
      std::swap(perm[i - 1], perm[rng.uniform_int(i)]);
    MorphGraph h;
    h.root_id = perm[g.root_id];
    for (const auto& node : g.nodes) h.nodes.push_back({perm[node.id], node.attr});
    for (auto [p, c] : g.edges) h.edges.emplace_back(perm[p], perm[c]);
    MorphGraph hc = canonicalize(h);
    CHECK(std::abs(m.predict(g) - m.predict(hc)) < 1e-12);
  }
}

TEST_CASE("fit memorizes a single datapoint") {
  SurrogateConfig cfg = small_cfg();
  cfg.fit_epochs = 400;
  cfg.lr = 3e-3;
  SurrogateModel m(cfg);
  Rng rng(4);
  m.init_params(rng);
  MorphGraph g = random_graph(AttrSpace{}, rng);
  m.add_sample(g, 3.25, 0);
  Rng frng(5);
  auto curve = m.fit(frng);
  REQUIRE_FALSE(curve.empty());
  // Single point: the standardized target is 0, so loss is the squared
  // standardized residual; check the raw prediction directly.
  CHECK(std::abs(m.predict(g) - 3.25) < 1e-3);
}

TEST_CASE("fit loss curve is finite and ends at or below its start") {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    SurrogateConfig cfg = small_cfg();
    cfg.fit_epochs = 40;
    SurrogateModel m(cfg);
    m.init_params(rng);
    auto graphs = random_graphs(20, rng);
    for (size_t i = 0; i < graphs.size(); ++i)
      m.add_sample(graphs[i], rng.normal() * 3.0, 0);
    Rng frng(100 + trial);
    auto curve = m.fit(frng);
    REQUIRE(curve.size() == 40);
    for (double v : curve) REQUIRE(std::isfinite(v));
    CHECK(curve.back() <= curve.front());
  }
}

TEST_CASE("default dropout rate is 0.5") {
  SurrogateConfig cfg;
  CHECK(cfg.dropout_rate == 0.5);
  SurrogateModel m(cfg);
  Rng rng(7);
  DropoutMask mask = m.sample_mask(rng);
  int zeros = 0;
  for (double v : mask.gate) {
    CHECK((v == 0.0 || v == 2.0));
    if (v == 0.0) ++zeros;
  }
  CHECK(zeros > 0);
}

TEST_CASE("prune_greedy keeps everything in original order when K = |C|") {
  SurrogateModel m(small_cfg());
  Rng rng(8);
  m.init_params(rng);
  auto graphs = random_graphs(10, rng);
  auto keep = prune_greedy(m, graphs, 10);
  REQUIRE(keep.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(keep[i] == i);
}

TEST_CASE("prune_greedy with zero weights keeps the first K (tie-break)") {
  SurrogateModel m(small_cfg());  // zero weights: all scores equal
  Rng rng(9);
  auto graphs = random_graphs(8, rng);
  auto keep = prune_greedy(m, graphs, 3);
  CHECK(keep == std::vector<int>{0, 1, 2});
}

TEST_CASE("prune_greedy equals an exhaustive sort oracle") {
  SurrogateModel m(small_cfg());
  Rng rng(10);
  m.init_params(rng);
  auto graphs = random_graphs(100, rng);
  int k = 17;
  auto keep = prune_greedy(m, graphs, k);
  // Oracle: stable sort by descending score, take K, compare as sets.
  std::vector<std::pair<double, int>> scored;
  for (size_t i = 0; i < graphs.size(); ++i)
    scored.emplace_back(-m.predict(graphs[i]), static_cast<int>(i));
  std::stable_sort(scored.begin(), scored.end());
  std::set<int> expect;
  for (int i = 0; i < k; ++i) expect.insert(scored[i].second);
  std::set<int> got(keep.begin(), keep.end());
  CHECK(got == expect);
}

TEST_CASE("prune_thompson with dropout 0 equals prune_greedy") {
  SurrogateConfig cfg = small_cfg();
  cfg.dropout_rate = 0.0;
  SurrogateModel m(cfg);
  Rng rng(11);
  m.init_params(rng);
  auto graphs = random_graphs(40, rng);
  Rng prng(12);
  CHECK(prune_thompson(m, graphs, 9, prng) == prune_greedy(m, graphs, 9));
}

TEST_CASE("prune_thompson is deterministic given the seed (one mask per call)") {
  SurrogateModel m(small_cfg());
  Rng rng(13);
  m.init_params(rng);
  auto graphs = random_graphs(40, rng);
  Rng p1(99), p2(99);
  auto a = prune_thompson(m, graphs, 7, p1);
  auto b = prune_thompson(m, graphs, 7, p2);
  CHECK(a == b);
  // Equivalent manual path: one mask drawn up front, then greedy top-K under
  // that mask. Confirms the mask is shared across candidates.
  Rng p3(99);
  DropoutMask mask = m.sample_mask(p3);
  std::vector<std::pair<double, int>> scored;
  for (size_t i = 0; i < graphs.size(); ++i)
    scored.emplace_back(-m.predict(graphs[i], &mask), static_cast<int>(i));
  std::stable_sort(scored.begin(), scored.end());
  std::vector<int> expect;
  for (int i = 0; i < 7; ++i) expect.push_back(scored[i].second);
  std::sort(expect.begin(), expect.end());
  CHECK(a == expect);
}

TEST_CASE("prune_* return exactly K distinct input indices") {
  SurrogateModel m(small_cfg());
  Rng rng(14);
  m.init_params(rng);
  auto graphs = random_graphs(25, rng);
  for (int k : {1, 5, 24}) {
    Rng prng(k);
    for (auto keep : {prune_greedy(m, graphs, k),
                      prune_thompson(m, graphs, k, prng)}) {
      CHECK(static_cast<int>(keep.size()) == k);
      std::set<int> uniq(keep.begin(), keep.end());
      CHECK(static_cast<int>(uniq.size()) == k);
      for (int i : keep) CHECK((i >= 0 && i < 25));
    }
  }
}

TEST_CASE("masked ranking varies across masks on a two-mode landscape") {
  // Train the surrogate on a bimodal synthetic fitness, then measure the
  // selection entropy of thompson pruning across many masks; greedy pruning
  // has zero entropy by construction.
  SurrogateConfig cfg = small_cfg();
  cfg.fit_epochs = 30;
  SurrogateModel m(cfg);
  Rng rng(15);
  m.init_params(rng);
  auto graphs = random_graphs(30, rng);
  for (const auto& g : graphs) {
    double f = (g.node_count() % 2 == 0) ? 1.0 : -1.0;
    m.add_sample(g, f + 0.05 * rng.normal(), 0);
  }
  Rng frng(16);
  m.fit(frng);

  std::set<std::vector<int>> greedy_selections, thompson_selections;
  for (int trial = 0; trial < 200; ++trial) {
    Rng prng(1000 + trial);
    greedy_selections.insert(prune_greedy(m, graphs, 5));
    thompson_selections.insert(prune_thompson(m, graphs, 5, prng));
  }
  CHECK(greedy_selections.size() == 1);
  CHECK(thompson_selections.size() > 1);
}
