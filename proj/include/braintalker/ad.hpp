// braintalker/ad.hpp
//
// Reverse-mode automatic differentiation over Eigen matrices. A Tape owns a
// growing list of nodes; every op appends a node holding the forward value
// and a closure that routes the node's gradient to its parents. One tape is
// built per training step and discarded afterwards.
//
// Shapes follow the sequence convention used across the project: a sequence
// is frames x dim, a weight is out x in, a bias is 1 x out (broadcast over
// rows). Scalars are 1 x 1 matrices.

#pragma once

#include "braintalker/types.hpp"

#include <functional>
#include <vector>

namespace bt::ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. Gradients are accumulated only into vars created with
  // requires_grad = true (and into interior nodes that depend on them).
  Var leaf(const Matrix& value, bool requires_grad);
  Var constant(const Matrix& value) { return leaf(value, false); }
  Var scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

  const Matrix& value(Var v) const { return node(v.id).value; }
  // Gradient after backward(); zero matrix if the var was never touched.
  Matrix grad(Var v) const;

  // --- elementwise and affine ---
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cmul(Var a, Var b);
  Var scale(Var a, double s);
  Var scale_by(Var a, Var s);   // s is 1 x 1, broadcast multiply
  Var add_scalar(Var a, Var s); // s is 1 x 1, broadcast add
  Var add_const(Var a, const Matrix& c);
  Var leaky_relu(Var x, double negative_slope);
  Var relu(Var x) { return leaky_relu(x, 0.0); }
  Var gelu(Var x);
  Var tanh(Var x);
  Var sigmoid(Var x);

  // --- linear algebra ---
  Var matmul(Var a, Var b);
  Var matmul_t(Var a, Var b);  // a * b^T
  Var transpose(Var a);
  Var linear(Var x, Var weight, Var bias);  // x * W^T + bias (rowwise)

  // --- shape ---
  Var slice_cols(Var x, Index start, Index count);
  Var concat_cols(const std::vector<Var>& xs);
  Var rows_head(Var x, Index count);

  // --- normalization and attention pieces ---
  Var layer_norm(Var x, Var gamma, Var beta, double eps);
  Var softmax_rows(Var x);

  // --- convolutions over the frame axis ---
  // x: T x Cin, weight: Cout x (K*Cin) with column k*Cin + cin, bias 1 x Cout.
  Var conv1d(Var x, Var weight, Var bias, int kernel, int stride);
  // Transposed conv; output length (T-1)*stride + kernel - 2*pad.
  Var conv1d_transpose(Var x, Var weight, Var bias, int kernel, int stride, int pad);

  // --- recurrence ---
  struct GruParams {
    Var w_reset, w_update, w_cand;  // H x D
    Var u_reset, u_update, u_cand;  // H x H
    Var b_in_reset, b_in_update, b_in_cand;  // 1 x H
    Var b_h_reset, b_h_update, b_h_cand;     // 1 x H
  };
  // Unidirectional single-layer GRU, zero initial state. x: T x D -> T x H.
  Var gru(Var x, const GruParams& p);

  // --- reductions ---
  Var l2_norm(Var x);  // Frobenius norm, 1 x 1
  Var sum(Var x);      // 1 x 1

  Var stop_gradient(Var x);

  // Seeds d(loss)/d(loss) = 1 and runs the reverse sweep. loss must be 1 x 1.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backfn;
  };

  Node& node(int id) {
    require(id >= 0 && std::size_t(id) < nodes_.size(), "ad: invalid var");
    return nodes_[std::size_t(id)];
  }
  const Node& node(int id) const {
    require(id >= 0 && std::size_t(id) < nodes_.size(), "ad: invalid var");
    return nodes_[std::size_t(id)];
  }

  Var push(Matrix value, bool requires_grad, std::function<void(Tape&)> backfn);
  bool needs_grad(Var v) const { return node(v.id).requires_grad; }
  void accumulate(int id, const Matrix& g);
  const Matrix& grad_of(int id) const { return node(id).grad; }

  std::vector<Node> nodes_;
};

}  // namespace bt::ad
