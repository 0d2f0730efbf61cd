#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "conpro/tensor.hpp"

namespace conpro {

struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Define-by-run reverse-mode tape. Every op appends a node holding the
// forward value and a closure that scatters the node's gradient into its
// parents. Creation order is a topological order, so backward() is a single
// reverse sweep. Gradients are only materialized along paths that reach a
// requires_grad input; everything else is skipped.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var input(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return input(std::move(value), false); }
  Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const;
  bool has_grad(Var v) const { return node(v).has_grad; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  size_t size() const { return nodes_.size(); }

  // elementwise / scalar
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);

  // linear algebra
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add_rowvec(Var a, Var v);  // (M,N) + (N,) per row

  // convolution stack; x:(B,C,H,W) w:(Co,C,k,k) b:(Co) optional (pass {} to skip)
  Var conv2d(Var x, Var w, Var b, int pad);
  Var upsample2(Var x);
  Var avgpool2(Var x);
  Var instance_norm(Var x, Var gain, Var bias, double eps = 1e-6);

  // activations
  Var leaky_relu(Var x, double alpha);
  Var tanh(Var x);
  Var sigmoid(Var x);
  Var softplus(Var x);
  Var exp(Var x);
  Var log(Var x);
  Var sqrt(Var x);

  // reductions / shaping
  Var sum(Var x);
  Var mean(Var x);
  Var row_sum(Var x);  // (M,N) -> (M,)
  Var reshape(Var x, Shape s);
  Var select_row(Var x, int64_t i);  // (B, rest...) -> (rest...)
  Var slice_rows(Var x, int64_t start, int64_t len);  // contiguous range on axis 0
  Var concat_scalars(const std::vector<Var>& xs);
  Var softmax(Var x);  // 1-d, max-subtracted

  // AFM layout: rows pair (c_out, kernel-row), cols pair (c_in, kernel-col),
  // both row-major. afm_unreshape is the exact inverse.
  Var afm_reshape(Var w);
  Var afm_unreshape(Var m, int64_t c_out, int64_t c_in, int64_t k);

  // convenience compositions
  Var dot(Var a, Var b) { return sum(mul(a, b)); }
  Var l2_norm(Var a) { return sqrt(sum(mul(a, a))); }
  Var cosine(Var a, Var b) { return div(dot(a, b), mul(l2_norm(a), l2_norm(b))); }

  // Seeds d(loss)/d(loss)=1 and runs the reverse sweep. loss must be scalar.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::function<void()> backprop;
  };

  // deque keeps value()/grad() references stable as later ops append nodes
  std::deque<Node> nodes_;

  Node& node(Var v) {
    check(v.valid() && v.id < static_cast<int32_t>(nodes_.size()), "invalid graph variable");
    return nodes_[static_cast<size_t>(v.id)];
  }
  const Node& node(Var v) const {
    check(v.valid() && v.id < static_cast<int32_t>(nodes_.size()), "invalid graph variable");
    return nodes_[static_cast<size_t>(v.id)];
  }

  Var make(Tensor value, std::vector<Var> parents, std::function<void()> backprop);
  Tensor& grad_buf(Var v);
};

}  // namespace conpro
