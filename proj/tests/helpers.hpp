#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "graphevo/morphology.hpp"
#include "graphevo/rng.hpp"

namespace gevo::testing {

// ---------------------------------------------------------------------------
// Brute-force tree checker (structural oracle, |V| small).
// Edges treated as undirected; checks connectivity from root, acyclicity,
// exactly one parent per non-root node, no self loops, no parent over root.
inline bool brute_force_is_tree(const MorphGraph& g) {
  const int n = g.node_count();
  if (n == 0) return false;
  std::vector<int> ids;
  for (const auto& node : g.nodes) ids.push_back(node.id);
  std::sort(ids.begin(), ids.end());
  if (std::unique(ids.begin(), ids.end()) != ids.end()) return false;
  auto known = [&](int id) {
    return std::binary_search(ids.begin(), ids.end(), id);
  };
  if (!known(g.root_id)) return false;
  if (static_cast<int>(g.edges.size()) != n - 1) return false;
  for (auto [p, c] : g.edges) {
    if (!known(p) || !known(c) || p == c) return false;
    if (c == g.root_id) return false;
  }
  // one parent per child
  for (auto [p1, c1] : g.edges) {
    int cnt = 0;
    for (auto [p2, c2] : g.edges)
      if (c2 == c1) ++cnt;
    if (cnt != 1) return false;
  }
  // reachability from root over undirected edges
  std::vector<int> stack{g.root_id}, seen{g.root_id};
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (auto [p, c] : g.edges) {
      int other = -1;
      if (p == u) other = c;
      if (c == u) other = p;
      if (other >= 0 &&
          std::find(seen.begin(), seen.end(), other) == seen.end()) {
        seen.push_back(other);
        stack.push_back(other);
      }
    }
  }
  return static_cast<int>(seen.size()) == n;
}

// ---------------------------------------------------------------------------
// Exhaustive rooted-isomorphism test for small graphs (attribute-exact).
inline bool isomorphic_exhaustive(const MorphGraph& a, const MorphGraph& b) {
  if (a.node_count() != b.node_count()) return false;
  const int n = a.node_count();
  std::vector<int> ida, idb;
  for (const auto& node : a.nodes) ida.push_back(node.id);
  for (const auto& node : b.nodes) idb.push_back(node.id);
  std::sort(idb.begin(), idb.end());
  std::vector<int> perm = idb;  // mapping a.id (by ida order) -> b.id
  std::sort(perm.begin(), perm.end());
  do {
    auto map_id = [&](int id) {
      for (int i = 0; i < n; ++i)
        if (ida[i] == id) return perm[i];
      return -1;
    };
    if (map_id(a.root_id) != b.root_id) continue;
    bool ok = true;
    for (const auto& node : a.nodes) {
      int bid = map_id(node.id);
      bool found = false;
      for (const auto& bn : b.nodes)
        if (bn.id == bid && bn.attr == node.attr) found = true;
      if (!found) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    for (auto [p, c] : a.edges) {
      bool found = false;
      for (auto [bp, bc] : b.edges)
        if (bp == map_id(p) && bc == map_id(c)) found = true;
      if (!found) {
        ok = false;
        break;
      }
    }
    if (ok) return true;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return false;
}

// ---------------------------------------------------------------------------
// Central finite differences of a scalar function of a flat parameter view.
inline std::vector<double> finite_difference(
    const std::function<double()>& f, std::vector<double*> coords,
    double h = 1e-5) {
  std::vector<double> g(coords.size());
  for (size_t i = 0; i < coords.size(); ++i) {
    double orig = *coords[i];
    *coords[i] = orig + h;
    double fp = f();
    *coords[i] = orig - h;
    double fm = f();
    *coords[i] = orig;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Inverse standard normal CDF (Acklam's rational approximation).
inline double norm_ppf(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  double plow = 0.02425, phigh = 1 - plow, q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > phigh) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
             c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
         q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Shapiro-Wilk W test p-value, Royston's AS R94 approximation (12 <= n <= 5000).
inline double shapiro_wilk_pvalue(std::vector<double> x) {
  const int n = static_cast<int>(x.size());
  std::sort(x.begin(), x.end());
  std::vector<double> m(n);
  for (int i = 0; i < n; ++i)
    m[i] = norm_ppf((i + 1 - 0.375) / (n + 0.25));
  double ssq_m = 0;
  for (double v : m) ssq_m += v * v;
  double rsn = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<double> a(n);
  double an = -2.706056 * std::pow(rsn, 5) + 4.434685 * std::pow(rsn, 4) -
              2.071190 * std::pow(rsn, 3) - 0.147981 * rsn * rsn +
              0.221157 * rsn + m[n - 1] / std::sqrt(ssq_m);
  double an1 = -3.582633 * std::pow(rsn, 5) + 5.682633 * std::pow(rsn, 4) -
               1.752461 * std::pow(rsn, 3) - 0.293762 * rsn * rsn +
               0.042981 * rsn + m[n - 2] / std::sqrt(ssq_m);
  double phi = (ssq_m - 2 * m[n - 1] * m[n - 1] - 2 * m[n - 2] * m[n - 2]) /
               (1 - 2 * an * an - 2 * an1 * an1);
  a[n - 1] = an;
  a[n - 2] = an1;
  a[0] = -an;
  a[1] = -an1;
  for (int i = 2; i < n - 2; ++i) a[i] = m[i] / std::sqrt(phi);
  double mean = 0;
  for (double v : x) mean += v;
  mean /= n;
  double num = 0, den = 0;
  for (int i = 0; i < n; ++i) {
    num += a[i] * x[i];
    den += (x[i] - mean) * (x[i] - mean);
  }
  double w = num * num / den;
  double lw = std::log(1.0 - w);
  double ln = std::log(static_cast<double>(n));
  double mu = 0.0038915 * ln * ln * ln - 0.083751 * ln * ln - 0.31082 * ln -
              1.5861;
  double sigma = std::exp(0.0030302 * ln * ln - 0.082676 * ln - 0.4803);
  double z = (lw - mu) / sigma;
  return 1.0 - norm_cdf(z);
}

// ---------------------------------------------------------------------------
// Exact one-sided Mann-Whitney p-value P(U <= u_obs) for small samples, by
// full enumeration of rank assignments.
inline double mann_whitney_p(const std::vector<double>& x,
                             const std::vector<double>& y) {
  // U statistic for x against y: number of (i,j) pairs with x_i < y_j gives
  // evidence that x < y; here we test H1: x > y, so count y_j < x_i.
  auto u_of = [](const std::vector<double>& a, const std::vector<double>& b) {
    double u = 0;
    for (double va : a)
      for (double vb : b) {
        if (vb < va) u += 1.0;
        else if (vb == va) u += 0.5;
      }
    return u;
  };
  double u_obs = u_of(y, x);  // small when x systematically exceeds y
  const int nx = static_cast<int>(x.size());
  const int ny = static_cast<int>(y.size());
  const int n = nx + ny;
  // Enumerate all C(n, nx) assignments of ranks to group x using pooled
  // values; ties handled by the same 0.5 convention.
  std::vector<double> pooled(x);
  pooled.insert(pooled.end(), y.begin(), y.end());
  std::vector<int> comb(nx);
  for (int i = 0; i < nx; ++i) comb[i] = i;
  int count_le = 0, total = 0;
  for (;;) {
    std::vector<double> gx, gy;
    std::vector<bool> in_x(n, false);
    for (int i : comb) in_x[i] = true;
    for (int i = 0; i < n; ++i) (in_x[i] ? gx : gy).push_back(pooled[i]);
    if (u_of(gy, gx) <= u_obs + 1e-12) ++count_le;
    ++total;
    int i = nx - 1;
    while (i >= 0 && comb[i] == n - nx + i) --i;
    if (i < 0) break;
    ++comb[i];
    for (int j = i + 1; j < nx; ++j) comb[j] = comb[j - 1] + 1;
  }
  return static_cast<double>(count_le) / total;
}

}  // namespace gevo::testing
