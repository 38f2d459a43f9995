#pragma once

#include <cassert>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "graphevo/rng.hpp"

namespace gevo {

/// Dense row-major f64 matrix; cols == 1 makes it a column vector.
struct Tensor {
  int rows = 0;
  int cols = 1;
  std::vector<double> d;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * c, 0.0) {}

  int size() const { return rows * cols; }
  double& at(int r, int c) { return d[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return d[static_cast<size_t>(r) * cols + c]; }

  void zero() { std::fill(d.begin(), d.end(), 0.0); }

  bool operator==(const Tensor&) const = default;
};

struct TensorShape {
  std::string name;
  int rows = 0;
  int cols = 0;
  bool operator==(const TensorShape&) const = default;
};

/// y = W x + b. Sizes must agree.
inline void affine(const Tensor& w, std::span<const double> x,
                   const Tensor& b, std::span<double> y) {
  assert(w.cols == static_cast<int>(x.size()));
  assert(w.rows == static_cast<int>(y.size()) && b.rows == w.rows);
  for (int r = 0; r < w.rows; ++r) {
    const double* wr = &w.d[static_cast<size_t>(r) * w.cols];
    double acc = b.d[r];
    for (int c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

/// y = W a + U b + bias.
inline void affine2(const Tensor& w, std::span<const double> a,
                    const Tensor& u, std::span<const double> b,
                    const Tensor& bias, std::span<double> y) {
  assert(w.rows == u.rows && w.rows == bias.rows);
  for (int r = 0; r < w.rows; ++r) {
    const double* wr = &w.d[static_cast<size_t>(r) * w.cols];
    const double* ur = &u.d[static_cast<size_t>(r) * u.cols];
    double acc = bias.d[r];
    for (int c = 0; c < w.cols; ++c) acc += wr[c] * a[c];
    for (int c = 0; c < u.cols; ++c) acc += ur[c] * b[c];
    y[r] = acc;
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Uniform(-s, s) with s = 1/sqrt(fan_in), times `gain`.
inline void init_scaled_uniform(Tensor& t, Rng& rng, double gain = 1.0) {
  double s = gain / std::sqrt(static_cast<double>(std::max(1, t.cols)));
  for (auto& v : t.d) v = rng.uniform(-s, s);
}

/// Orthogonal-ish init for square recurrent weights: random Gaussian matrix
/// orthonormalized by modified Gram-Schmidt.
inline void init_orthogonal(Tensor& t, Rng& rng) {
  assert(t.rows == t.cols);
  int n = t.rows;
  std::vector<std::vector<double>> q(n, std::vector<double>(n));
  for (auto& row : q)
    for (auto& v : row) v = rng.normal();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0;
      for (int k = 0; k < n; ++k) dot += q[i][k] * q[j][k];
      for (int k = 0; k < n; ++k) q[i][k] -= dot * q[j][k];
    }
    double nrm = 0;
    for (int k = 0; k < n; ++k) nrm += q[i][k] * q[i][k];
    nrm = std::sqrt(nrm);
    if (nrm < 1e-12) {
      q[i][i] = 1.0;
      nrm = 1.0;
    }
    for (int k = 0; k < n; ++k) q[i][k] /= nrm;
  }
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) t.at(r, c) = q[r][c];
}

}  // namespace gevo
