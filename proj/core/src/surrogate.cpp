#include "graphevo/surrogate.hpp"

#include <algorithm>
#include <cassert>
#include <climits>
#include <cmath>

#include "graphevo/nervenet.hpp"

namespace gevo {

SurrogateModel::SurrogateModel(const SurrogateConfig& cfg) : cfg_(cfg) {
  int d = cfg.d_s;
  int din = 2 * d;  // GRU input: [message sum; attribute embedding]
  zw1 = Tensor(d, 5);
  zb1 = Tensor(d, 1);
  zw2 = Tensor(d, d);
  zb2 = Tensor(d, 1);
  mw = Tensor(d, d);
  mb = Tensor(d, 1);
  wz = Tensor(d, din);
  uz = Tensor(d, d);
  bz = Tensor(d, 1);
  wr = Tensor(d, din);
  ur = Tensor(d, d);
  br = Tensor(d, 1);
  wn = Tensor(d, din);
  un = Tensor(d, d);
  bn = Tensor(d, 1);
  f1w = Tensor(d, d);
  f1b = Tensor(d, 1);
  f2w = Tensor(1, d);
  f2b = Tensor(1, 1);
}

void SurrogateModel::init_params(Rng& rng) {
  for (Tensor* t : {&zw1, &zw2, &mw, &wz, &wr, &wn, &f1w, &f2w})
    init_scaled_uniform(*t, rng);
  init_orthogonal(uz, rng);
  init_orthogonal(ur, rng);
  init_orthogonal(un, rng);
  for (Tensor* t : {&zb1, &zb2, &mb, &bz, &br, &bn, &f1b, &f2b}) t->zero();
}

std::vector<Tensor*> SurrogateModel::params() {
  return {&zw1, &zb1, &zw2, &zb2, &mw, &mb, &wz, &uz, &bz, &wr, &ur,
          &br,  &wn,  &un,  &bn,  &f1w, &f1b, &f2w, &f2b};
}

std::vector<const Tensor*> SurrogateModel::params() const {
  auto* self = const_cast<SurrogateModel*>(this);
  std::vector<const Tensor*> out;
  for (auto* t : self->params()) out.push_back(t);
  return out;
}

DropoutMask SurrogateModel::sample_mask(Rng& rng) const {
  DropoutMask m;
  double p = cfg_.dropout_rate;
  double keep = 1.0 - p;
  m.gate.resize(static_cast<size_t>(2) * cfg_.d_s);
  for (auto& g : m.gate) g = (p > 0 && rng.uniform() < p) ? 0.0 : 1.0 / keep;
  return m;
}

namespace {
std::vector<std::vector<int>> neighbors_of(const MorphGraph& g) {
  std::vector<std::vector<int>> nb(g.node_count());
  for (auto [p, c] : g.edges) {
    nb[p].push_back(c);
    nb[c].push_back(p);
  }
  return nb;
}
}  // namespace

double SurrogateModel::predict(const MorphGraph& g,
                               const DropoutMask* mask) const {
  const int n = g.node_count();
  const int d = cfg_.d_s;
  auto nb = neighbors_of(g);

  std::vector<double> x(static_cast<size_t>(n) * d);
  std::vector<double> tmp(d);
  for (int u = 0; u < n; ++u) {
    auto in = GnnPolicy::attr_input(g.nodes[u].attr);
    affine(zw1, in, zb1, tmp);
    for (auto& v : tmp) v = std::tanh(v);
    affine(zw2, tmp, zb2,
           std::span<double>(&x[static_cast<size_t>(u) * d], d));
  }
  std::vector<double> h(static_cast<size_t>(n) * d, 0.0);
  std::vector<double> msgs(static_cast<size_t>(n) * d);
  std::vector<double> hnew(static_cast<size_t>(n) * d);
  std::vector<double> xin(2 * d), zg(d), rg(d), hr(d), cand(d);
  for (int step = 0; step < cfg_.T; ++step) {
    for (int u = 0; u < n; ++u)
      affine(mw, std::span<const double>(&h[static_cast<size_t>(u) * d], d),
             mb, std::span<double>(&msgs[static_cast<size_t>(u) * d], d));
    for (int u = 0; u < n; ++u) {
      std::fill(xin.begin(), xin.begin() + d, 0.0);
      for (int v : nb[u])
        for (int i = 0; i < d; ++i)
          xin[i] += msgs[static_cast<size_t>(v) * d + i];
      std::copy(&x[static_cast<size_t>(u) * d],
                &x[static_cast<size_t>(u) * d] + d, xin.begin() + d);
      std::span<const double> hu(&h[static_cast<size_t>(u) * d], d);
      affine2(wz, xin, uz, hu, bz, zg);
      for (auto& v : zg) v = sigmoid(v);
      affine2(wr, xin, ur, hu, br, rg);
      for (auto& v : rg) v = sigmoid(v);
      for (int i = 0; i < d; ++i) hr[i] = rg[i] * hu[i];
      affine2(wn, xin, un, hr, bn, cand);
      for (auto& v : cand) v = std::tanh(v);
      for (int i = 0; i < d; ++i)
        hnew[static_cast<size_t>(u) * d + i] = hu[i] + zg[i] * (cand[i] - hu[i]);
    }
    std::swap(h, hnew);
  }
  std::vector<double> pool(d, 0.0);
  for (int u = 0; u < n; ++u)
    for (int i = 0; i < d; ++i) pool[i] += h[static_cast<size_t>(u) * d + i];
  double inv = 1.0 / n;
  for (auto& v : pool) v *= inv;
  if (mask)
    for (int i = 0; i < d; ++i) pool[i] *= mask->gate[i];
  std::vector<double> hid(d);
  affine(f1w, pool, f1b, hid);
  for (auto& v : hid) v = std::tanh(v);
  if (mask)
    for (int i = 0; i < d; ++i) hid[i] *= mask->gate[d + i];
  double out = f2b.d[0];
  for (int i = 0; i < d; ++i) out += f2w.d[i] * hid[i];
  return t_mean + t_std * out;
}

int SurrogateModel::record_graph(ad::Tape& tape, const MorphGraph& g,
                                 const std::vector<int>& P,
                                 const std::vector<double>* gate) const {
  enum {
    kZw1, kZb1, kZw2, kZb2, kMw, kMb, kWz, kUz, kBz, kWr, kUr, kBr,
    kWn, kUn, kBn, kF1w, kF1b, kF2w, kF2b
  };
  const int n = g.node_count();
  const int d = cfg_.d_s;
  auto nb = neighbors_of(g);

  std::vector<int> x(n), h(n);
  for (int u = 0; u < n; ++u) {
    auto in = GnnPolicy::attr_input(g.nodes[u].attr);
    int a = tape.leaf(std::span<const double>(in.data(), in.size()));
    x[u] = tape.affine(P[kZw2],
                       tape.tanh(tape.affine(P[kZw1], a, P[kZb1])), P[kZb2]);
    h[u] = tape.zeros(d);
  }
  for (int step = 0; step < cfg_.T; ++step) {
    std::vector<int> msgs(n);
    for (int u = 0; u < n; ++u) msgs[u] = tape.affine(P[kMw], h[u], P[kMb]);
    std::vector<int> hn(n);
    for (int u = 0; u < n; ++u) {
      int r = -1;
      for (int v : nb[u]) r = r < 0 ? msgs[v] : tape.add(r, msgs[v]);
      if (r < 0) r = tape.zeros(d);
      int xin = tape.concat(r, x[u]);
      int zg = tape.sigmoid(tape.affine2(P[kWz], xin, P[kUz], h[u], P[kBz]));
      int rg = tape.sigmoid(tape.affine2(P[kWr], xin, P[kUr], h[u], P[kBr]));
      int hrv = tape.hadamard(rg, h[u]);
      int cand = tape.tanh(tape.affine2(P[kWn], xin, P[kUn], hrv, P[kBn]));
      hn[u] = tape.add(h[u], tape.hadamard(zg, tape.sub(cand, h[u])));
    }
    h = hn;
  }
  int pool = h[0];
  for (int u = 1; u < n; ++u) pool = tape.add(pool, h[u]);
  pool = tape.scale(pool, 1.0 / n);
  if (gate)
    pool = tape.mul_const(pool, std::span<const double>(gate->data(), d));
  int hid = tape.tanh(tape.affine(P[kF1w], pool, P[kF1b]));
  if (gate)
    hid = tape.mul_const(hid, std::span<const double>(gate->data() + d, d));
  return tape.affine(P[kF2w], hid, P[kF2b]);
}

void SurrogateModel::add_sample(const MorphGraph& g, double fitness,
                                int generation) {
  // Re-evaluations of an unchanged species carry no new information and
  // would let duplicates dominate the regression; keep one copy per exact
  // (graph, fitness) pair.
  for (const auto& s : data_)
    if (s.fitness == fitness && s.graph == g) return;
  data_.push_back({g, fitness, generation});
}

std::vector<double> SurrogateModel::fit(Rng& rng) {
  std::vector<double> curve;
  if (data_.empty()) return curve;

  // Training view: optionally restricted to the most recent generations.
  std::vector<int> view;
  {
    int max_gen = 0;
    for (const auto& s : data_) max_gen = std::max(max_gen, s.generation);
    int min_gen =
        cfg_.fit_window > 0 ? max_gen - cfg_.fit_window + 1 : INT_MIN;
    for (int i = 0; i < static_cast<int>(data_.size()); ++i)
      if (data_[i].generation >= min_gen) view.push_back(i);
  }

  // Standardize targets so the regression scale is stable across domains.
  {
    double m = 0;
    int n_finite = 0;
    for (int i : view)
      if (std::isfinite(data_[i].fitness)) {
        m += data_[i].fitness;
        ++n_finite;
      }
    t_mean = n_finite > 0 ? m / n_finite : 0.0;
    double var = 0;
    for (int i : view)
      if (std::isfinite(data_[i].fitness))
        var += (data_[i].fitness - t_mean) * (data_[i].fitness - t_mean);
    t_std = n_finite > 0 ? std::sqrt(var / n_finite) : 1.0;
    if (!(t_std > 1e-9)) t_std = 1.0;
  }
  auto target = [&](const SurrogateSample& s) {
    double f = std::isfinite(s.fitness) ? s.fitness : t_mean - 3.0 * t_std;
    return (f - t_mean) / t_std;
  };

  auto P = params();
  const int n = static_cast<int>(view.size());
  std::vector<int> order = view;

  ad::Tape tape;
  for (int epoch = 0; epoch < cfg_.fit_epochs; ++epoch) {
    for (int i = n; i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    for (int lo = 0; lo < n; lo += cfg_.minibatch) {
      int hi = std::min(n, lo + cfg_.minibatch);
      tape.reset();
      std::vector<int> pvars;
      for (const Tensor* p : params()) pvars.push_back(tape.leaf(*p));
      int loss = -1;
      for (int k = lo; k < hi; ++k) {
        const auto& s = data_[order[k]];
        DropoutMask m = sample_mask(rng);
        int pred = record_graph(tape, s.graph, pvars, &m.gate);
        int err = tape.square(tape.add_const(pred, -target(s)));
        loss = loss < 0 ? err : tape.add(loss, err);
      }
      loss = tape.scale(loss, 1.0 / (hi - lo));
      tape.backward(loss);
      std::vector<std::vector<double>> grads;
      bool finite = true;
      for (int pv : pvars) {
        auto g = tape.grad(pv);
        grads.emplace_back(g.begin(), g.end());
        for (double x : grads.back())
          if (!std::isfinite(x)) finite = false;
      }
      if (finite) adam.step(P, grads, cfg_.lr);
    }
    // Epoch loss reported without dropout, over the training view.
    double ev = 0;
    for (int i : view) {
      double pred = (predict(data_[i].graph) - t_mean) / t_std;
      double e = pred - target(data_[i]);
      ev += e * e;
    }
    curve.push_back(ev / n);
  }
  return curve;
}

namespace {
std::vector<int> top_k(const std::vector<double>& scores, int keep) {
  std::vector<int> idx(scores.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  idx.resize(std::min<size_t>(idx.size(), keep));
  std::sort(idx.begin(), idx.end());
  return idx;
}
}  // namespace

std::vector<int> prune_greedy(const SurrogateModel& m,
                              const std::vector<MorphGraph>& candidates,
                              int keep) {
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& g : candidates) scores.push_back(m.predict(g));
  return top_k(scores, keep);
}

std::vector<int> prune_thompson(const SurrogateModel& m,
                                const std::vector<MorphGraph>& candidates,
                                int keep, Rng& rng) {
  DropoutMask mask = m.sample_mask(rng);
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& g : candidates) scores.push_back(m.predict(g, &mask));
  if (m.config().prune_temperature <= 0.0) return top_k(scores, keep);

  // Softmax sampling without replacement at the configured temperature.
  std::vector<int> pool(candidates.size());
  for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
  std::vector<int> chosen;
  double temp = m.config().prune_temperature;
  while (static_cast<int>(chosen.size()) < keep && !pool.empty()) {
    double mx = -1e300;
    for (int i : pool) mx = std::max(mx, scores[i] / temp);
    double z = 0;
    for (int i : pool) z += std::exp(scores[i] / temp - mx);
    double r = rng.uniform() * z;
    double acc = 0;
    size_t kidx = pool.size() - 1;
    for (size_t k = 0; k < pool.size(); ++k) {
      acc += std::exp(scores[pool[k]] / temp - mx);
      if (r < acc) {
        kidx = k;
        break;
      }
    }
    chosen.push_back(pool[kidx]);
    pool.erase(pool.begin() + static_cast<long>(kidx));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace gevo
