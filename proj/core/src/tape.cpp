#include "graphevo/tape.hpp"

#include <cassert>
#include <cmath>

namespace gevo::ad {

int Tape::push(Node n) {
  n.grad.assign(n.val.size(), 0.0);
  live_ += n.val.size() + n.grad.size() + n.aux.size();
  if (live_ > peak_) peak_ = live_;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::reset() {
  nodes_.clear();
  live_ = 0;
}

int Tape::leaf(const Tensor& t) {
  Node n;
  n.op = Op::Leaf;
  n.rows = t.rows;
  n.cols = t.cols;
  n.val = t.d;
  return push(std::move(n));
}

int Tape::leaf(std::span<const double> v) {
  Node n;
  n.op = Op::Leaf;
  n.rows = static_cast<int>(v.size());
  n.val.assign(v.begin(), v.end());
  return push(std::move(n));
}

int Tape::scalar(double v) {
  Node n;
  n.op = Op::Leaf;
  n.rows = 1;
  n.val = {v};
  return push(std::move(n));
}

int Tape::zeros(int rows) {
  Node n;
  n.op = Op::Leaf;
  n.rows = rows;
  n.val.assign(rows, 0.0);
  return push(std::move(n));
}

int Tape::affine(int w, int x, int b) {
  const Node& W = nodes_[w];
  const Node& X = nodes_[x];
  const Node& B = nodes_[b];
  assert(W.cols == X.rows && W.rows == B.rows && X.cols == 1);
  Node n;
  n.op = Op::Affine;
  n.p0 = w;
  n.p1 = x;
  n.p2 = b;
  n.rows = W.rows;
  n.val.resize(W.rows);
  for (int r = 0; r < W.rows; ++r) {
    const double* wr = &W.val[static_cast<size_t>(r) * W.cols];
    double acc = B.val[r];
    for (int c = 0; c < W.cols; ++c) acc += wr[c] * X.val[c];
    n.val[r] = acc;
  }
  return push(std::move(n));
}

int Tape::affine2(int w, int a, int u, int b, int bias) {
  const Node& W = nodes_[w];
  const Node& A = nodes_[a];
  const Node& U = nodes_[u];
  const Node& B = nodes_[b];
  const Node& C = nodes_[bias];
  assert(W.cols == A.rows && U.cols == B.rows && W.rows == U.rows &&
         W.rows == C.rows);
  Node n;
  n.op = Op::Affine2;
  n.p0 = w;
  n.p1 = a;
  n.p2 = u;
  n.p3 = b;
  n.p4 = bias;
  n.rows = W.rows;
  n.val.resize(W.rows);
  for (int r = 0; r < W.rows; ++r) {
    const double* wr = &W.val[static_cast<size_t>(r) * W.cols];
    const double* ur = &U.val[static_cast<size_t>(r) * U.cols];
    double acc = C.val[r];
    for (int c = 0; c < W.cols; ++c) acc += wr[c] * A.val[c];
    for (int c = 0; c < U.cols; ++c) acc += ur[c] * B.val[c];
    n.val[r] = acc;
  }
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  const Node& A = nodes_[a];
  const Node& B = nodes_[b];
  assert(A.rows == B.rows);
  Node n;
  n.op = Op::Add;
  n.p0 = a;
  n.p1 = b;
  n.rows = A.rows;
  n.val.resize(A.rows);
  for (int i = 0; i < A.rows; ++i) n.val[i] = A.val[i] + B.val[i];
  return push(std::move(n));
}

int Tape::sub(int a, int b) {
  const Node& A = nodes_[a];
  const Node& B = nodes_[b];
  assert(A.rows == B.rows);
  Node n;
  n.op = Op::Sub;
  n.p0 = a;
  n.p1 = b;
  n.rows = A.rows;
  n.val.resize(A.rows);
  for (int i = 0; i < A.rows; ++i) n.val[i] = A.val[i] - B.val[i];
  return push(std::move(n));
}

int Tape::concat(int a, int b) {
  const Node& A = nodes_[a];
  const Node& B = nodes_[b];
  Node n;
  n.op = Op::Concat;
  n.p0 = a;
  n.p1 = b;
  n.rows = A.rows + B.rows;
  n.val.reserve(n.rows);
  n.val.insert(n.val.end(), A.val.begin(), A.val.end());
  n.val.insert(n.val.end(), B.val.begin(), B.val.end());
  return push(std::move(n));
}

int Tape::tanh(int a) {
  const Node& A = nodes_[a];
  Node n;
  n.op = Op::Tanh;
  n.p0 = a;
  n.rows = A.rows;
  n.val.resize(A.rows);
  for (int i = 0; i < A.rows; ++i) n.val[i] = std::tanh(A.val[i]);
  return push(std::move(n));
}

int Tape::sigmoid(int a) {
  const Node& A = nodes_[a];
  Node n;
  n.op = Op::Sigmoid;
  n.p0 = a;
  n.rows = A.rows;
  n.val.resize(A.rows);
  for (int i = 0; i < A.rows; ++i) n.val[i] = 1.0 / (1.0 + std::exp(-A.val[i]));
  return push(std::move(n));
}

int Tape::exp(int a) {
  const Node& A = nodes_[a];
  Node n;
  n.op = Op::Exp;
  n.p0 = a;
  n.rows = A.rows;
  n.val.resize(A.rows);
  for (int i = 0; i < A.rows; ++i) n.val[i] = std::exp(A.val[i]);
  return push(std::move(n));
}

int Tape::square(int a) {
  const Node& A = nodes_[a];
  Node n;
  n.op = Op::Square;
  n.p0 = a;
  n.rows = A.rows;
  n.val.resize(A.rows);
  for (int i = 0; i < A.rows; ++i) n.val[i] = A.val[i] * A.val[i];
  return push(std::move(n));
}

int Tape::hadamard(int a, int b) {
  const Node& A = nodes_[a];
  const Node& B = nodes_[b];
  assert(A.rows == B.rows);
  Node n;
  n.op = Op::Hadamard;
  n.p0 = a;
  n.p1 = b;
  n.rows = A.rows;
  n.val.resize(A.rows);
  for (int i = 0; i < A.rows; ++i) n.val[i] = A.val[i] * B.val[i];
  return push(std::move(n));
}

int Tape::div(int a, int b) {
  const Node& A = nodes_[a];
  const Node& B = nodes_[b];
  assert(A.rows == B.rows);
  Node n;
  n.op = Op::Div;
  n.p0 = a;
  n.p1 = b;
  n.rows = A.rows;
  n.val.resize(A.rows);
  for (int i = 0; i < A.rows; ++i) n.val[i] = A.val[i] / B.val[i];
  return push(std::move(n));
}

int Tape::scale(int a, double s) {
  const Node& A = nodes_[a];
  Node n;
  n.op = Op::Scale;
  n.p0 = a;
  n.rows = A.rows;
  n.s = s;
  n.val.resize(A.rows);
  for (int i = 0; i < A.rows; ++i) n.val[i] = s * A.val[i];
  return push(std::move(n));
}

int Tape::add_const(int a, std::span<const double> k) {
  const Node& A = nodes_[a];
  assert(static_cast<size_t>(A.rows) == k.size());
  Node n;
  n.op = Op::AddConst;
  n.p0 = a;
  n.rows = A.rows;
  n.aux.assign(k.begin(), k.end());
  n.val.resize(A.rows);
  for (int i = 0; i < A.rows; ++i) n.val[i] = A.val[i] + n.aux[i];
  return push(std::move(n));
}

int Tape::add_const(int a, double k) {
  std::vector<double> v(nodes_[a].rows, k);
  return add_const(a, v);
}

int Tape::mul_const(int a, std::span<const double> k) {
  const Node& A = nodes_[a];
  assert(static_cast<size_t>(A.rows) == k.size());
  Node n;
  n.op = Op::MulConst;
  n.p0 = a;
  n.rows = A.rows;
  n.aux.assign(k.begin(), k.end());
  n.val.resize(A.rows);
  for (int i = 0; i < A.rows; ++i) n.val[i] = A.val[i] * n.aux[i];
  return push(std::move(n));
}

int Tape::sum_all(int a) {
  const Node& A = nodes_[a];
  Node n;
  n.op = Op::SumAll;
  n.p0 = a;
  n.rows = 1;
  double acc = 0;
  for (double v : A.val) acc += v;
  n.val = {acc};
  return push(std::move(n));
}

void Tape::backward(int loss) {
  assert(nodes_[loss].rows == 1);
  nodes_[loss].grad[0] = 1.0;
  for (int i = loss; i >= 0; --i) {
    Node& n = nodes_[i];
    const auto& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Affine: {
        Node& W = nodes_[n.p0];
        Node& X = nodes_[n.p1];
        Node& B = nodes_[n.p2];
        for (int r = 0; r < W.rows; ++r) {
          double gr = g[r];
          if (gr == 0.0) continue;
          double* wg = &W.grad[static_cast<size_t>(r) * W.cols];
          const double* wv = &W.val[static_cast<size_t>(r) * W.cols];
          for (int c = 0; c < W.cols; ++c) {
            wg[c] += gr * X.val[c];
            X.grad[c] += gr * wv[c];
          }
          B.grad[r] += gr;
        }
        break;
      }
      case Op::Affine2: {
        Node& W = nodes_[n.p0];
        Node& A = nodes_[n.p1];
        Node& U = nodes_[n.p2];
        Node& Bv = nodes_[n.p3];
        Node& C = nodes_[n.p4];
        for (int r = 0; r < W.rows; ++r) {
          double gr = g[r];
          if (gr == 0.0) continue;
          double* wg = &W.grad[static_cast<size_t>(r) * W.cols];
          const double* wv = &W.val[static_cast<size_t>(r) * W.cols];
          for (int c = 0; c < W.cols; ++c) {
            wg[c] += gr * A.val[c];
            A.grad[c] += gr * wv[c];
          }
          double* ug = &U.grad[static_cast<size_t>(r) * U.cols];
          const double* uv = &U.val[static_cast<size_t>(r) * U.cols];
          for (int c = 0; c < U.cols; ++c) {
            ug[c] += gr * Bv.val[c];
            Bv.grad[c] += gr * uv[c];
          }
          C.grad[r] += gr;
        }
        break;
      }
      case Op::Add:
        for (int r = 0; r < n.rows; ++r) {
          nodes_[n.p0].grad[r] += g[r];
          nodes_[n.p1].grad[r] += g[r];
        }
        break;
      case Op::Sub:
        for (int r = 0; r < n.rows; ++r) {
          nodes_[n.p0].grad[r] += g[r];
          nodes_[n.p1].grad[r] -= g[r];
        }
        break;
      case Op::Concat: {
        Node& A = nodes_[n.p0];
        Node& B = nodes_[n.p1];
        for (int r = 0; r < A.rows; ++r) A.grad[r] += g[r];
        for (int r = 0; r < B.rows; ++r) B.grad[r] += g[A.rows + r];
        break;
      }
      case Op::Tanh:
        for (int r = 0; r < n.rows; ++r)
          nodes_[n.p0].grad[r] += g[r] * (1.0 - n.val[r] * n.val[r]);
        break;
      case Op::Sigmoid:
        for (int r = 0; r < n.rows; ++r)
          nodes_[n.p0].grad[r] += g[r] * n.val[r] * (1.0 - n.val[r]);
        break;
      case Op::Exp:
        for (int r = 0; r < n.rows; ++r)
          nodes_[n.p0].grad[r] += g[r] * n.val[r];
        break;
      case Op::Square:
        for (int r = 0; r < n.rows; ++r)
          nodes_[n.p0].grad[r] += g[r] * 2.0 * nodes_[n.p0].val[r];
        break;
      case Op::Hadamard:
        for (int r = 0; r < n.rows; ++r) {
          nodes_[n.p0].grad[r] += g[r] * nodes_[n.p1].val[r];
          nodes_[n.p1].grad[r] += g[r] * nodes_[n.p0].val[r];
        }
        break;
      case Op::Div:
        for (int r = 0; r < n.rows; ++r) {
          double b = nodes_[n.p1].val[r];
          nodes_[n.p0].grad[r] += g[r] / b;
          nodes_[n.p1].grad[r] -= g[r] * n.val[r] / b;
        }
        break;
      case Op::Scale:
        for (int r = 0; r < n.rows; ++r) nodes_[n.p0].grad[r] += g[r] * n.s;
        break;
      case Op::AddConst:
        for (int r = 0; r < n.rows; ++r) nodes_[n.p0].grad[r] += g[r];
        break;
      case Op::MulConst:
        for (int r = 0; r < n.rows; ++r)
          nodes_[n.p0].grad[r] += g[r] * n.aux[r];
        break;
      case Op::SumAll:
        for (int r = 0; r < nodes_[n.p0].rows; ++r)
          nodes_[n.p0].grad[r] += g[0];
        break;
    }
  }
}

}  // namespace gevo::ad
