#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "graphevo/tensor.hpp"

namespace gevo::ad {

/// Reverse-mode autodiff over vector-valued nodes. Values are column vectors
/// (or matrices for parameter leaves). Each recorded op keeps fixed parent
/// slots and a switch-dispatched backward rule; `peak_doubles` counts the
/// recorded-graph memory high-water mark (values + gradients + constants),
/// which is what truncated-BPTT memory comparisons measure.
class Tape {
 public:
  enum class Op : uint8_t {
    Leaf,      // constant or parameter
    Affine,    // y = W x + b            (W, x, b)
    Affine2,   // y = W a + U b + bias   (W, a, U, b, bias)
    Add,       // y = a + b
    Sub,       // y = a - b
    Concat,    // y = [a; b]
    Tanh,
    Sigmoid,
    Exp,
    Square,
    Hadamard,  // y = a .* b
    Div,       // y = a ./ b
    Scale,     // y = s * a
    AddConst,  // y = a + k
    MulConst,  // y = a .* k
    SumAll,    // y = sum(a), 1x1
  };

  int leaf(const Tensor& t);
  int leaf(std::span<const double> v);
  int scalar(double v);
  int zeros(int rows);

  int affine(int w, int x, int b);
  int affine2(int w, int a, int u, int b, int bias);
  int add(int a, int b);
  int sub(int a, int b);
  int concat(int a, int b);
  int tanh(int a);
  int sigmoid(int a);
  int exp(int a);
  int square(int a);
  int hadamard(int a, int b);
  int div(int a, int b);
  int scale(int a, double s);
  int add_const(int a, std::span<const double> k);
  int add_const(int a, double k);
  int mul_const(int a, std::span<const double> k);
  int sum_all(int a);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node.
  void backward(int loss);

  std::span<const double> val(int i) const { return nodes_[i].val; }
  std::span<const double> grad(int i) const { return nodes_[i].grad; }
  double scalar_val(int i) const { return nodes_[i].val[0]; }
  int rows(int i) const { return nodes_[i].rows; }

  /// Drops all nodes; the peak counter persists across resets.
  void reset();
  size_t peak_doubles() const { return peak_; }
  size_t live_doubles() const { return live_; }
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    int p0 = -1, p1 = -1, p2 = -1, p3 = -1, p4 = -1;
    int rows = 0, cols = 1;
    double s = 0.0;
    std::vector<double> val, grad, aux;
  };

  int push(Node n);
  std::vector<Node> nodes_;
  size_t live_ = 0, peak_ = 0;
};

}  // namespace gevo::ad
