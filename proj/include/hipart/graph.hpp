#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "hipart/common.hpp"

namespace hipart::nn {

class Graph;

struct Node {
  Mat val;
  Mat grad;  // allocated only when needs_grad
  bool needs_grad = false;
  int param_id = -1;
  std::function<void()> backward;  // accumulates this->grad into parents
};

// Handle into a Graph-owned node.
struct Var {
  Node* n = nullptr;
  const Mat& val() const { return n->val; }
  const Mat& grad() const { return n->grad; }
  int rows() const { return static_cast<int>(n->val.rows()); }
  int cols() const { return static_cast<int>(n->val.cols()); }
};

// Dynamic reverse-mode tape. One Graph per forward pass; nodes are replayed
// in reverse creation order on backward().
class Graph {
 public:
  Var constant(Mat v);
  Var param(const Mat& v, int param_id);  // leaf that collects gradient
  Var leaf_grad(Mat v);                   // gradient-carrying leaf without a param id

  void backward(Var loss);  // loss must be 1x1

  // Parameter gradients accumulated by the last backward(), in creation order.
  const std::vector<std::pair<int, const Mat*>>& param_grads() const { return param_grads_; }

  Node* make(Mat val, bool needs_grad);

 private:
  std::deque<Node> nodes_;
  std::vector<std::pair<int, const Mat*>> param_grads_;
};

// ---- primitive ops -------------------------------------------------------

Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var hadamard(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
Var matmul(Graph& g, Var a, Var b);
Var transpose(Graph& g, Var a);
Var add_rowvec(Graph& g, Var a, Var bias);  // bias is 1 x D, broadcast over rows
Var gelu(Graph& g, Var a);
Var layer_norm(Graph& g, Var x, Var gain, Var bias, double eps = 1e-6);
// Row softmax; `mask` (optional) is added to the logits before the softmax
// and may contain -inf.
Var softmax_rows(Graph& g, Var a, const Mat* mask = nullptr);
Var dropout(Graph& g, Var a, double rate, Rng& rng);
Var concat_cols(Graph& g, const std::vector<Var>& parts);
Var concat_rows(Graph& g, const std::vector<Var>& parts);
Var slice_cols(Graph& g, Var a, int c0, int n);
Var slice_rows(Graph& g, Var a, int r0, int n);
Var gather_rows(Graph& g, Var a, const std::vector<int>& idx);
Var mean_rows(Graph& g, Var a);  // 1 x D
Var sum_sq(Graph& g, Var a);     // 1 x 1
Var stop_gradient(Graph& g, Var a);
// Value is `quantized`; the gradient passes to `z` unchanged.
Var straight_through(Graph& g, Var z, const Mat& quantized);
Var l2_normalize_rows(Graph& g, Var a, double eps = 1e-12);
// Mean over rows of -log softmax(logits)[row, label].
Var cross_entropy_rows(Graph& g, Var logits, const std::vector<int>& labels);

}  // namespace hipart::nn
