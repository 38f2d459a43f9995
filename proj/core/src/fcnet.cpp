#include "graphevo/fcnet.hpp"

#include <cassert>
#include <cmath>

namespace gevo {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;
}

FcPolicy::FcPolicy(const FcConfig& cfg, const MorphGraph& g)
    : FcPolicy(cfg, g.node_count() * cfg.obs_width, g.node_count() - 1) {}

FcPolicy::FcPolicy(const FcConfig& cfg, int input_width, int n_act)
    : cfg_(cfg) {
  in_ = input_width;
  n_act_ = n_act;
  int h = cfg.hidden;
  pw1 = Tensor(h, in_);
  pb1 = Tensor(h, 1);
  pw2 = Tensor(h, h);
  pb2 = Tensor(h, 1);
  pw3 = Tensor(h, h);
  pb3 = Tensor(h, 1);
  pow_ = Tensor(std::max(n_act_, 0), h);
  pob = Tensor(std::max(n_act_, 0), 1);
  log_std = Tensor(std::max(n_act_, 0), 1);
  for (auto& v : log_std.d) v = std::log(0.4);
  vw1 = Tensor(h, in_);
  vb1 = Tensor(h, 1);
  vw2 = Tensor(h, h);
  vb2 = Tensor(h, 1);
  vw3 = Tensor(h, h);
  vb3 = Tensor(h, 1);
  vow = Tensor(1, h);
  vob = Tensor(1, 1);
}

std::unique_ptr<Policy> FcPolicy::clone() const {
  return std::make_unique<FcPolicy>(*this);
}

std::vector<Tensor*> FcPolicy::params() {
  return {&pw1, &pb1, &pw2, &pb2, &pw3, &pb3, &pow_, &pob, &log_std,
          &vw1, &vb1, &vw2, &vb2, &vw3, &vb3, &vow,  &vob};
}

std::vector<const Tensor*> FcPolicy::params() const {
  auto* self = const_cast<FcPolicy*>(this);
  std::vector<const Tensor*> out;
  for (auto* t : self->params()) out.push_back(t);
  return out;
}

std::vector<TensorShape> FcPolicy::shape_manifest() const {
  static const char* names[] = {"pw1", "pb1", "pw2", "pb2", "pw3", "pb3",
                                "pow", "pob", "log_std", "vw1", "vb1", "vw2",
                                "vb2", "vw3", "vb3", "vow", "vob"};
  std::vector<TensorShape> out;
  auto ps = params();
  for (size_t i = 0; i < ps.size(); ++i)
    out.push_back({names[i], ps[i]->rows, ps[i]->cols});
  return out;
}

void FcPolicy::init_params(Rng& rng) {
  for (Tensor* t : {&pw1, &pw2, &pw3, &vw1, &vw2, &vw3, &vow})
    init_scaled_uniform(*t, rng);
  init_scaled_uniform(pow_, rng, 0.01);
  for (Tensor* t : {&pb1, &pb2, &pb3, &pob, &vb1, &vb2, &vb3, &vob}) t->zero();
  for (auto& v : log_std.d) v = std::log(0.4);
}

void FcPolicy::project_params() {
  for (auto& v : log_std.d) {
    if (v < kLogStdMin) v = kLogStdMin;
    if (v > kLogStdMax) v = kLogStdMax;
  }
}

void FcPolicy::forward(const MorphGraph& g, std::span<const double> obs,
                       std::span<double>, std::vector<double>& mu,
                       std::vector<double>& sigma, double& value) const {
  assert(static_cast<int>(obs.size()) == in_);
  (void)g;
  int h = cfg_.hidden;
  std::vector<double> sq(obs.size());
  for (size_t i = 0; i < obs.size(); ++i) sq[i] = squash_obs(obs[i]);
  std::vector<double> a(h), b(h);
  affine(pw1, sq, pb1, a);
  for (auto& v : a) v = std::tanh(v);
  affine(pw2, a, pb2, b);
  for (auto& v : b) v = std::tanh(v);
  affine(pw3, b, pb3, a);
  for (auto& v : a) v = std::tanh(v);
  mu.assign(n_act_, 0.0);
  if (n_act_ > 0) affine(pow_, a, pob, mu);
  sigma.resize(n_act_);
  for (int i = 0; i < n_act_; ++i) sigma[i] = std::exp(log_std.d[i]);

  affine(vw1, sq, vb1, a);
  for (auto& v : a) v = std::tanh(v);
  affine(vw2, a, vb2, b);
  for (auto& v : b) v = std::tanh(v);
  affine(vw3, b, vb3, a);
  for (auto& v : a) v = std::tanh(v);
  value = vob.d[0];
  for (int i = 0; i < h; ++i) value += vow.d[i] * a[i];
}

WindowVars FcPolicy::build_window(ad::Tape& tape, const WindowView& w,
                                  const std::vector<int>& param_vars) const {
  enum {
    kPw1, kPb1, kPw2, kPb2, kPw3, kPb3, kPow, kPob, kLogStd,
    kVw1, kVb1, kVw2, kVb2, kVw3, kVb3, kVow, kVob
  };
  const auto& P = param_vars;
  WindowVars out;
  int sig = n_act_ > 0 ? tape.exp(P[kLogStd]) : -1;
  for (int t = 0; t < w.steps(); ++t) {
    std::vector<double> sq(w.obs[t].size());
    for (size_t i = 0; i < sq.size(); ++i) sq[i] = squash_obs(w.obs[t][i]);
    int o = tape.leaf(std::span<const double>(sq.data(), sq.size()));
    int a1 = tape.tanh(tape.affine(P[kPw1], o, P[kPb1]));
    int a2 = tape.tanh(tape.affine(P[kPw2], a1, P[kPb2]));
    int a3 = tape.tanh(tape.affine(P[kPw3], a2, P[kPb3]));
    int logp, kl;
    if (n_act_ > 0) {
      int mu = tape.affine(P[kPow], a3, P[kPob]);
      int diff = tape.add_const(tape.scale(mu, -1.0), w.actions[t]);
      int zq = tape.div(diff, sig);
      int term = tape.scale(tape.square(zq), -0.5);
      int per = tape.sub(term, P[kLogStd]);
      logp = tape.add_const(tape.sum_all(per),
                            -kHalfLog2Pi * static_cast<double>(n_act_));
      // KL[new||old] summed over output slots.
      std::vector<double> neg_mu0(w.mu_old[t].begin(), w.mu_old[t].end());
      for (auto& v : neg_mu0) v = -v;
      int d2 = tape.square(tape.add_const(mu, neg_mu0));
      int num = tape.add(tape.square(sig), d2);
      std::vector<double> inv2s0(n_act_), c0(n_act_);
      for (int i = 0; i < n_act_; ++i) {
        double s0 = w.sigma_old[t][i];
        inv2s0[i] = 1.0 / (2.0 * s0 * s0);
        c0[i] = std::log(s0) - 0.5;
      }
      int frac = tape.mul_const(num, inv2s0);
      int per_kl = tape.add_const(tape.sub(frac, P[kLogStd]), c0);
      kl = tape.sum_all(per_kl);
    } else {
      logp = tape.scalar(0.0);
      kl = tape.scalar(0.0);
    }
    int v1 = tape.tanh(tape.affine(P[kVw1], o, P[kVb1]));
    int v2 = tape.tanh(tape.affine(P[kVw2], v1, P[kVb2]));
    int v3 = tape.tanh(tape.affine(P[kVw3], v2, P[kVb3]));
    int value = tape.affine(P[kVow], v3, P[kVob]);

    out.logp.push_back(logp);
    out.value.push_back(value);
    out.kl.push_back(kl);
  }
  return out;
}

}  // namespace gevo
