#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "deci/tensor.hpp"

namespace deci::num {

class Tape;

// Handle into a Tape. Only valid for the tape that produced it.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Dynamic reverse-mode tape over dense tensors. Single-owner: one thread
// records and runs backward; results are read out before the tape is reset.
class Tape {
 public:
  Var input(Tensor v) { return push(std::move(v), true); }
  Var constant(Tensor v) { return push(std::move(v), false); }
  Var constant(double v) { return push(Tensor::scalar(v), false); }

  const Tensor& value(Var x) const { return nodes_[x.id].value; }
  const Tensor& grad(Var x) const { return nodes_[x.id].grad; }
  bool requires_grad(Var x) const { return nodes_[x.id].requires_grad; }

  // Accumulates into the gradient of x during backward.
  Tensor& grad_acc(Var x);

  // Runs reverse accumulation from a scalar root. Rejects non-scalar roots.
  void backward(Var root);

  void reset() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  // Low-level node construction, used by the op library and by modules that
  // register custom differentiable operations (e.g. the DAG penalty).
  using BackwardFn = std::function<void(Tape&, Var self)>;
  Var make_node(Tensor value, bool requires_grad, BackwardFn backward) {
    Var v = push(std::move(value), requires_grad);
    nodes_[v.id].backward = std::move(backward);
    return v;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until backward touches it
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor v, bool req) {
    nodes_.push_back(Node{std::move(v), Tensor{}, req, nullptr});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
};

// --- elementwise / linear algebra op library ---
// Binary ops broadcast in three forms: identical shapes, scalar operand, or
// matrix (n,m) against row vector (m).

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var div(Tape& t, Var a, Var b);

Var neg(Tape& t, Var a);
Var scale(Tape& t, Var a, double c);
Var add_const(Tape& t, Var a, double c);

Var matmul(Tape& t, Var a, Var b);

Var sum(Tape& t, Var a);            // -> scalar
Var sum_rows(Tape& t, Var a);       // (n,m) -> (n)
Var mean(Tape& t, Var a);           // -> scalar

Var leaky_relu(Tape& t, Var a, double slope = 0.01);
Var sigmoid(Tape& t, Var a);
Var softplus(Tape& t, Var a);
Var log_(Tape& t, Var a);
Var exp_(Tape& t, Var a);
Var sqrt_(Tape& t, Var a);
Var square(Tape& t, Var a);
Var std_normal_cdf(Tape& t, Var a);

// Row-wise normalization to zero mean / unit variance (no affine part).
Var layer_norm_rows(Tape& t, Var a, double eps = 1e-5);
Var log_softmax_rows(Tape& t, Var a);

// out[i] = a[idx[i]]; backward scatter-adds.
Var gather(Tape& t, Var a, const std::vector<std::size_t>& idx);

// out[i,:] = a[rows[i],:]; backward scatter-adds rows.
Var gather_rows(Tape& t, Var a, const std::vector<std::size_t>& rows);

Var slice_cols(Tape& t, Var a, std::size_t c0, std::size_t c1);
Var concat_cols(Tape& t, const std::vector<Var>& parts);
Var reshape(Tape& t, Var a, std::vector<std::size_t> shape);

// A[s,i,:] = sum_j W[j,i] * L[s,j,:], with L given as ((n*D), K) row-major
// over samples then nodes. Returns the same layout.
Var graph_aggregate(Tape& t, Var w, Var l, std::size_t n, std::size_t d,
                    std::size_t k);

// out = mask * a + (1 - mask) * b, mask a constant 0/1 tensor.
Var select(Tape& t, const Tensor& mask, Var a, Var b);

// Straight-through: value of hard, gradient of soft.
Var straight_through(Tape& t, Var soft, Tensor hard);

// Plain dgemm on tensors (no tape).
void matmul_values(const Tensor& a, const Tensor& b, Tensor& out);

// Caps BLAS threading; training and tests pin this to 1 for determinism.
void set_blas_threads(int n);

}  // namespace deci::num
