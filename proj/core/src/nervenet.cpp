#include "graphevo/nervenet.hpp"

#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace gevo {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kHalfLog2Pi = 0.9189385332046727;

std::vector<std::vector<int>> neighbors_of(const MorphGraph& g) {
  std::vector<std::vector<int>> nb(g.node_count());
  for (auto [p, c] : g.edges) {
    nb[p].push_back(c);
    nb[c].push_back(p);
  }
  return nb;
}
}  // namespace

GnnPolicy::GnnPolicy(const GnnConfig& cfg) : cfg_(cfg) {
  int dh = cfg.d_h, dobs = cfg.d_obs, dattr = cfg.d_attr;
  int din = dh + dobs + dattr;  // GRU input: [aggregated message; x_u]
  phi_w1 = Tensor(dh, cfg.obs_width);
  phi_b1 = Tensor(dh, 1);
  phi_w2 = Tensor(dobs, dh);
  phi_b2 = Tensor(dobs, 1);
  zeta_w1 = Tensor(dh, 5);
  zeta_b1 = Tensor(dh, 1);
  zeta_w2 = Tensor(dattr, dh);
  zeta_b2 = Tensor(dattr, 1);
  msg_w = Tensor(dh, dh);
  msg_b = Tensor(dh, 1);
  gru_wz = Tensor(dh, din);
  gru_uz = Tensor(dh, dh);
  gru_bz = Tensor(dh, 1);
  gru_wr = Tensor(dh, din);
  gru_ur = Tensor(dh, dh);
  gru_br = Tensor(dh, 1);
  gru_wn = Tensor(dh, din);
  gru_un = Tensor(dh, dh);
  gru_bn = Tensor(dh, 1);
  mu_w = Tensor(1, dh);
  mu_b = Tensor(1, 1);
  log_std = Tensor(1, 1);
  val_w = Tensor(1, dh);
  val_b = Tensor(1, 1);
  log_std.d[0] = std::log(0.4);
}

std::unique_ptr<Policy> GnnPolicy::clone() const {
  return std::make_unique<GnnPolicy>(*this);
}

std::vector<Tensor*> GnnPolicy::params() {
  return {&phi_w1, &phi_b1, &phi_w2, &phi_b2, &zeta_w1, &zeta_b1, &zeta_w2,
          &zeta_b2, &msg_w,  &msg_b,  &gru_wz, &gru_uz,  &gru_bz,  &gru_wr,
          &gru_ur,  &gru_br, &gru_wn, &gru_un, &gru_bn,  &mu_w,    &mu_b,
          &log_std, &val_w,  &val_b};
}

std::vector<const Tensor*> GnnPolicy::params() const {
  auto* self = const_cast<GnnPolicy*>(this);
  std::vector<const Tensor*> out;
  for (auto* t : self->params()) out.push_back(t);
  return out;
}

std::vector<TensorShape> GnnPolicy::shape_manifest() const {
  static const char* names[] = {
      "phi_w1", "phi_b1", "phi_w2", "phi_b2", "zeta_w1", "zeta_b1",
      "zeta_w2", "zeta_b2", "msg_w", "msg_b", "gru_wz", "gru_uz", "gru_bz",
      "gru_wr", "gru_ur", "gru_br", "gru_wn", "gru_un", "gru_bn", "mu_w",
      "mu_b", "log_std", "val_w", "val_b"};
  std::vector<TensorShape> out;
  auto ps = params();
  for (size_t i = 0; i < ps.size(); ++i)
    out.push_back({names[i], ps[i]->rows, ps[i]->cols});
  return out;
}

void GnnPolicy::init_params(Rng& rng) {
  init_scaled_uniform(phi_w1, rng);
  phi_b1.zero();
  init_scaled_uniform(phi_w2, rng);
  phi_b2.zero();
  init_scaled_uniform(zeta_w1, rng);
  zeta_b1.zero();
  init_scaled_uniform(zeta_w2, rng);
  zeta_b2.zero();
  init_scaled_uniform(msg_w, rng);
  msg_b.zero();
  init_scaled_uniform(gru_wz, rng);
  init_orthogonal(gru_uz, rng);
  gru_bz.zero();
  init_scaled_uniform(gru_wr, rng);
  init_orthogonal(gru_ur, rng);
  gru_br.zero();
  init_scaled_uniform(gru_wn, rng);
  init_orthogonal(gru_un, rng);
  gru_bn.zero();
  init_scaled_uniform(mu_w, rng, 0.01);
  mu_b.zero();
  log_std.d[0] = std::log(0.4);
  init_scaled_uniform(val_w, rng);
  val_b.zero();
}

void GnnPolicy::project_params() {
  for (auto& v : log_std.d) {
    if (v < kLogStdMin) v = kLogStdMin;
    if (v > kLogStdMax) v = kLogStdMax;
  }
}

std::array<double, 5> GnnPolicy::attr_input(const NodeAttr& a) {
  return {a.geom_a / 0.4, a.geom_b / 0.2, a.attach_angle / kPi,
          a.joint_range / 1.4, a.joint_gear / 300.0};
}

void GnnPolicy::embed_obs(std::span<const double> o,
                          std::span<double> out) const {
  std::vector<double> sq(o.size());
  for (size_t i = 0; i < o.size(); ++i) sq[i] = squash_obs(o[i]);
  std::vector<double> h(cfg_.d_h);
  affine(phi_w1, sq, phi_b1, h);
  for (auto& v : h) v = std::tanh(v);
  affine(phi_w2, h, phi_b2, out);
}

void GnnPolicy::embed_attr(const NodeAttr& a, std::span<double> out) const {
  auto in = attr_input(a);
  std::vector<double> h(cfg_.d_h);
  affine(zeta_w1, in, zeta_b1, h);
  for (auto& v : h) v = std::tanh(v);
  affine(zeta_w2, h, zeta_b2, out);
}

void GnnPolicy::forward(const MorphGraph& g, std::span<const double> obs,
                        std::span<double> hidden, std::vector<double>& mu,
                        std::vector<double>& sigma, double& value) const {
  const int n = g.node_count();
  const int dh = cfg_.d_h;
  const int dx = cfg_.d_obs + cfg_.d_attr;
  assert(static_cast<int>(obs.size()) == n * cfg_.obs_width);
  assert(static_cast<int>(hidden.size()) == n * dh);

  auto nb = neighbors_of(g);

  // Input model: x_u = [Phi(o_u); zeta(A_u)].
  std::vector<double> x(static_cast<size_t>(n) * dx);
  for (int u = 0; u < n; ++u) {
    embed_obs(obs.subspan(static_cast<size_t>(u) * cfg_.obs_width,
                          cfg_.obs_width),
              std::span<double>(&x[static_cast<size_t>(u) * dx], cfg_.d_obs));
    embed_attr(g.nodes[u].attr,
               std::span<double>(&x[static_cast<size_t>(u) * dx + cfg_.d_obs],
                                 cfg_.d_attr));
  }

  // Propagation model: T synchronous rounds of message/update.
  std::vector<double> msgs(static_cast<size_t>(n) * dh);
  std::vector<double> hnew(static_cast<size_t>(n) * dh);
  std::vector<double> xin(dh + dx), zg(dh), rg(dh), hr(dh), cand(dh);
  for (int step = 0; step < cfg_.T; ++step) {
    if (cfg_.messages) {
      for (int u = 0; u < n; ++u)
        affine(msg_w, hidden.subspan(static_cast<size_t>(u) * dh, dh), msg_b,
               std::span<double>(&msgs[static_cast<size_t>(u) * dh], dh));
    }
    for (int u = 0; u < n; ++u) {
      // r_u = sum of neighbor messages (zeros when messages are disabled).
      std::fill(xin.begin(), xin.begin() + dh, 0.0);
      if (cfg_.messages)
        for (int v : nb[u])
          for (int i = 0; i < dh; ++i)
            xin[i] += msgs[static_cast<size_t>(v) * dh + i];
      std::copy(&x[static_cast<size_t>(u) * dx],
                &x[static_cast<size_t>(u) * dx] + dx, xin.begin() + dh);
      auto hu = hidden.subspan(static_cast<size_t>(u) * dh, dh);
      affine2(gru_wz, xin, gru_uz, hu, gru_bz, zg);
      for (auto& v : zg) v = sigmoid(v);
      affine2(gru_wr, xin, gru_ur, hu, gru_br, rg);
      for (auto& v : rg) v = sigmoid(v);
      for (int i = 0; i < dh; ++i) hr[i] = rg[i] * hu[i];
      affine2(gru_wn, xin, gru_un, hr, gru_bn, cand);
      for (auto& v : cand) v = std::tanh(v);
      for (int i = 0; i < dh; ++i)
        hnew[static_cast<size_t>(u) * dh + i] = hu[i] + zg[i] * (cand[i] - hu[i]);
    }
    std::copy(hnew.begin(), hnew.end(), hidden.begin());
  }

  // Output model: one Gaussian controller per non-root node, ascending id.
  mu.clear();
  sigma.clear();
  double sig = std::exp(log_std.d[0]);
  for (int u = 0; u < n; ++u) {
    if (u == g.root_id) continue;
    auto hu = hidden.subspan(static_cast<size_t>(u) * dh, dh);
    double m = mu_b.d[0];
    for (int i = 0; i < dh; ++i) m += mu_w.d[i] * hu[i];
    mu.push_back(m);
    sigma.push_back(sig);
  }

  // Value head: mean-pooled hidden state.
  std::vector<double> pool(dh, 0.0);
  for (int u = 0; u < n; ++u)
    for (int i = 0; i < dh; ++i)
      pool[i] += hidden[static_cast<size_t>(u) * dh + i];
  double inv = 1.0 / n;
  for (auto& v : pool) v *= inv;
  value = val_b.d[0];
  for (int i = 0; i < dh; ++i) value += val_w.d[i] * pool[i];
}

WindowVars GnnPolicy::build_window(ad::Tape& tape, const WindowView& w,
                                   const std::vector<int>& param_vars) const {
  const MorphGraph& g = *w.graph;
  const int n = g.node_count();
  const int dh = cfg_.d_h;
  auto nb = neighbors_of(g);

  enum {
    kPhiW1, kPhiB1, kPhiW2, kPhiB2, kZetaW1, kZetaB1, kZetaW2, kZetaB2,
    kMsgW, kMsgB, kWz, kUz, kBz, kWr, kUr, kBr, kWn, kUn, kBn,
    kMuW, kMuB, kLogStd, kValW, kValB
  };
  const auto& P = param_vars;

  // Window-start hidden state is a constant: the stop-gradient boundary.
  std::vector<int> h(n);
  for (int u = 0; u < n; ++u)
    h[u] = tape.leaf(w.h0.subspan(static_cast<size_t>(u) * dh, dh));

  // Attribute embeddings are constant within a window.
  std::vector<int> xa(n);
  for (int u = 0; u < n; ++u) {
    auto in = attr_input(g.nodes[u].attr);
    int a = tape.leaf(std::span<const double>(in.data(), in.size()));
    xa[u] = tape.affine(P[kZetaW2], tape.tanh(tape.affine(P[kZetaW1], a, P[kZetaB1])),
                        P[kZetaB2]);
  }

  int sig = tape.exp(P[kLogStd]);  // shared sigma, one per output slot
  int zero_msg = tape.zeros(dh);

  WindowVars out;
  const int steps = w.steps();
  for (int t = 0; t < steps; ++t) {
    // Input model.
    std::vector<int> x(n);
    for (int u = 0; u < n; ++u) {
      auto raw = w.obs[t].subspan(static_cast<size_t>(u) * cfg_.obs_width,
                                  cfg_.obs_width);
      std::vector<double> sq(raw.size());
      for (size_t i = 0; i < raw.size(); ++i) sq[i] = squash_obs(raw[i]);
      int o = tape.leaf(std::span<const double>(sq.data(), sq.size()));
      int xo = tape.affine(
          P[kPhiW2], tape.tanh(tape.affine(P[kPhiW1], o, P[kPhiB1])), P[kPhiB2]);
      x[u] = tape.concat(xo, xa[u]);
    }
    // Propagation model.
    for (int step = 0; step < cfg_.T; ++step) {
      std::vector<int> msgs(n, -1);
      if (cfg_.messages)
        for (int u = 0; u < n; ++u)
          msgs[u] = tape.affine(P[kMsgW], h[u], P[kMsgB]);
      std::vector<int> hn(n);
      for (int u = 0; u < n; ++u) {
        int r = zero_msg;
        if (cfg_.messages) {
          bool first = true;
          for (int v : nb[u]) {
            r = first ? msgs[v] : tape.add(r, msgs[v]);
            first = false;
          }
          if (first) r = zero_msg;
        }
        int xin = tape.concat(r, x[u]);
        int zg = tape.sigmoid(tape.affine2(P[kWz], xin, P[kUz], h[u], P[kBz]));
        int rg = tape.sigmoid(tape.affine2(P[kWr], xin, P[kUr], h[u], P[kBr]));
        int hr = tape.hadamard(rg, h[u]);
        int cand = tape.tanh(tape.affine2(P[kWn], xin, P[kUn], hr, P[kBn]));
        hn[u] = tape.add(h[u], tape.hadamard(zg, tape.sub(cand, h[u])));
      }
      h = hn;
    }
    // Output model: factored Gaussian log-density and per-step KL.
    int logp = -1, kl = -1;
    int slot = 0;
    for (int u = 0; u < n; ++u) {
      if (u == g.root_id) continue;
      int mu = tape.affine(P[kMuW], h[u], P[kMuB]);
      {
        double a = w.actions[t][slot];
        int diff = tape.add_const(tape.scale(mu, -1.0), a);
        int zq = tape.div(diff, sig);
        int term = tape.scale(tape.square(zq), -0.5);
        int lp = tape.add_const(tape.sub(term, P[kLogStd]), -kHalfLog2Pi);
        logp = logp < 0 ? lp : tape.add(logp, lp);
      }
      {
        double mu0 = w.mu_old[t][slot];
        double s0 = w.sigma_old[t][slot];
        int d2 = tape.square(tape.add_const(mu, -mu0));
        int num = tape.add(tape.square(sig), d2);
        int frac = tape.scale(num, 1.0 / (2.0 * s0 * s0));
        int k = tape.add_const(tape.sub(frac, P[kLogStd]), std::log(s0) - 0.5);
        kl = kl < 0 ? k : tape.add(kl, k);
      }
      ++slot;
    }
    if (logp < 0) logp = tape.scalar(0.0);
    if (kl < 0) kl = tape.scalar(0.0);

    // Value head.
    int pool = h[0];
    for (int u = 1; u < n; ++u) pool = tape.add(pool, h[u]);
    pool = tape.scale(pool, 1.0 / n);
    int value = tape.affine(P[kValW], pool, P[kValB]);

    out.logp.push_back(logp);
    out.value.push_back(value);
    out.kl.push_back(kl);
  }
  return out;
}

void GnnPolicy::save_checkpoint(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  uint32_t header[4] = {static_cast<uint32_t>(cfg_.d_h),
                        static_cast<uint32_t>(cfg_.d_obs),
                        static_cast<uint32_t>(cfg_.d_attr), 1u};
  f.write(reinterpret_cast<const char*>(header), sizeof(header));
  for (const Tensor* t : params())
    f.write(reinterpret_cast<const char*>(t->d.data()),
            static_cast<std::streamsize>(t->d.size() * sizeof(double)));
  if (!f) throw std::runtime_error("short write: " + path);
}

void load_gnn_tensors(GnnPolicy& p, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint: " + path);
  uint32_t header[4];
  f.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!f || header[0] != static_cast<uint32_t>(p.cfg_.d_h) ||
      header[1] != static_cast<uint32_t>(p.cfg_.d_obs) ||
      header[2] != static_cast<uint32_t>(p.cfg_.d_attr))
    throw std::runtime_error("checkpoint header mismatch: " + path);
  for (Tensor* t : p.params()) {
    f.read(reinterpret_cast<char*>(t->d.data()),
           static_cast<std::streamsize>(t->d.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
}

GnnPolicy GnnPolicy::load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint: " + path);
  uint32_t header[4];
  f.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  f.seekg(0, std::ios::end);
  auto bytes = static_cast<size_t>(f.tellg()) - sizeof(header);
  size_t n_doubles = bytes / sizeof(double);
  GnnConfig cfg;
  cfg.d_h = static_cast<int>(header[0]);
  cfg.d_obs = static_cast<int>(header[1]);
  cfg.d_attr = static_cast<int>(header[2]);
  // obs_width is recovered from the total parameter count.
  GnnConfig probe = cfg;
  for (int w = 1; w <= 256; ++w) {
    probe.obs_width = w;
    GnnPolicy cand(probe);
    size_t total = 0;
    for (const Tensor* t : cand.params()) total += t->d.size();
    if (total == n_doubles) {
      load_gnn_tensors(cand, path);
      return cand;
    }
  }
  throw std::runtime_error("checkpoint size does not match any obs width: " +
                           path);
}

}  // namespace gevo
