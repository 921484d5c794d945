#include "hipart/graph.hpp"

#include <cmath>

namespace hipart::nn {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Node* Graph::make(Mat val, bool needs_grad) {
  nodes_.emplace_back();
  Node* n = &nodes_.back();
  n->val = std::move(val);
  n->needs_grad = needs_grad;
  if (needs_grad) n->grad = Mat::Zero(n->val.rows(), n->val.cols());
  return n;
}

Var Graph::constant(Mat v) { return {make(std::move(v), false)}; }

Var Graph::param(const Mat& v, int param_id) {
  Node* n = make(v, true);
  n->param_id = param_id;
  return {n};
}

Var Graph::leaf_grad(Mat v) { return {make(std::move(v), true)}; }

void Graph::backward(Var loss) {
  if (loss.rows() != 1 || loss.cols() != 1) throw NumericError("backward target must be 1x1");
  if (!loss.n->needs_grad) return;
  loss.n->grad(0, 0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->needs_grad && it->backward) it->backward();
  }
  param_grads_.clear();
  for (const auto& n : nodes_)
    if (n.param_id >= 0) param_grads_.emplace_back(n.param_id, &n.grad);
}

namespace {
bool any_grad(std::initializer_list<Var> vs) {
  for (Var v : vs)
    if (v.n->needs_grad) return true;
  return false;
}
}  // namespace

Var add(Graph& g, Var a, Var b) {
  Node* n = g.make(a.val() + b.val(), any_grad({a, b}));
  if (n->needs_grad) {
    Node *pa = a.n, *pb = b.n;
    n->backward = [n, pa, pb] {
      if (pa->needs_grad) pa->grad += n->grad;
      if (pb->needs_grad) pb->grad += n->grad;
    };
  }
  return {n};
}

Var sub(Graph& g, Var a, Var b) {
  Node* n = g.make(a.val() - b.val(), any_grad({a, b}));
  if (n->needs_grad) {
    Node *pa = a.n, *pb = b.n;
    n->backward = [n, pa, pb] {
      if (pa->needs_grad) pa->grad += n->grad;
      if (pb->needs_grad) pb->grad -= n->grad;
    };
  }
  return {n};
}

Var hadamard(Graph& g, Var a, Var b) {
  Node* n = g.make(a.val().cwiseProduct(b.val()), any_grad({a, b}));
  if (n->needs_grad) {
    Node *pa = a.n, *pb = b.n;
    n->backward = [n, pa, pb] {
      if (pa->needs_grad) pa->grad += n->grad.cwiseProduct(pb->val);
      if (pb->needs_grad) pb->grad += n->grad.cwiseProduct(pa->val);
    };
  }
  return {n};
}

Var scale(Graph& g, Var a, double s) {
  Node* n = g.make(a.val() * s, a.n->needs_grad);
  if (n->needs_grad) {
    Node* pa = a.n;
    n->backward = [n, pa, s] { pa->grad += n->grad * s; };
  }
  return {n};
}

Var matmul(Graph& g, Var a, Var b) {
  Node* n = g.make(a.val() * b.val(), any_grad({a, b}));
  if (n->needs_grad) {
    Node *pa = a.n, *pb = b.n;
    n->backward = [n, pa, pb] {
      if (pa->needs_grad) pa->grad.noalias() += n->grad * pb->val.transpose();
      if (pb->needs_grad) pb->grad.noalias() += pa->val.transpose() * n->grad;
    };
  }
  return {n};
}

Var transpose(Graph& g, Var a) {
  Node* n = g.make(a.val().transpose(), a.n->needs_grad);
  if (n->needs_grad) {
    Node* pa = a.n;
    n->backward = [n, pa] { pa->grad += n->grad.transpose(); };
  }
  return {n};
}

Var add_rowvec(Graph& g, Var a, Var bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) throw NumericError("add_rowvec shape mismatch");
  Node* n = g.make(a.val().rowwise() + bias.val().row(0), any_grad({a, bias}));
  if (n->needs_grad) {
    Node *pa = a.n, *pb = bias.n;
    n->backward = [n, pa, pb] {
      if (pa->needs_grad) pa->grad += n->grad;
      if (pb->needs_grad) pb->grad += n->grad.colwise().sum();
    };
  }
  return {n};
}

Var gelu(Graph& g, Var a) {
  Mat y = a.val().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  Node* n = g.make(std::move(y), a.n->needs_grad);
  if (n->needs_grad) {
    Node* pa = a.n;
    n->backward = [n, pa] {
      Mat d = pa->val.unaryExpr([](double x) {
        double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
      pa->grad += n->grad.cwiseProduct(d);
    };
  }
  return {n};
}

Var layer_norm(Graph& g, Var x, Var gain, Var bias, double eps) {
  const Mat& xv = x.val();
  int R = static_cast<int>(xv.rows()), C = static_cast<int>(xv.cols());
  Vec mu(R), inv_sd(R);
  Mat xhat(R, C);
  for (int i = 0; i < R; ++i) {
    mu(i) = xv.row(i).mean();
    double var = (xv.row(i).array() - mu(i)).square().mean();
    inv_sd(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu(i)) * inv_sd(i);
  }
  Mat y = (xhat.array().rowwise() * gain.val().row(0).array()).rowwise() +
          bias.val().row(0).array();
  Node* n = g.make(std::move(y), any_grad({x, gain, bias}));
  if (n->needs_grad) {
    Node *px = x.n, *pg = gain.n, *pb = bias.n;
    n->backward = [n, px, pg, pb, xhat = std::move(xhat), inv_sd = std::move(inv_sd)] {
      if (pb->needs_grad) pb->grad += n->grad.colwise().sum();
      if (pg->needs_grad) pg->grad += n->grad.cwiseProduct(xhat).colwise().sum();
      if (px->needs_grad) {
        for (int i = 0; i < n->grad.rows(); ++i) {
          Eigen::RowVectorXd dy = n->grad.row(i).cwiseProduct(pg->val.row(0));
          double m1 = dy.mean();
          double m2 = dy.cwiseProduct(xhat.row(i)).mean();
          px->grad.row(i) +=
              inv_sd(i) * (dy.array() - m1 - xhat.row(i).array() * m2).matrix();
        }
      }
    };
  }
  return {n};
}

Var softmax_rows(Graph& g, Var a, const Mat* mask) {
  Mat logits = a.val();
  if (mask) logits += *mask;
  Mat y(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    y.row(i) = e / e.sum();
  }
  Node* n = g.make(y, a.n->needs_grad);
  if (n->needs_grad) {
    Node* pa = a.n;
    n->backward = [n, pa] {
      for (int i = 0; i < n->grad.rows(); ++i) {
        double dot = n->grad.row(i).dot(n->val.row(i));
        pa->grad.row(i) += (n->grad.row(i).array() - dot).matrix().cwiseProduct(n->val.row(i));
      }
    };
  }
  return {n};
}

Var dropout(Graph& g, Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw NumericError("dropout rate must be < 1");
  double keep = 1.0 - rate;
  Mat m(a.rows(), a.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform() < rate ? 0.0 : 1.0 / keep;
  Node* n = g.make(a.val().cwiseProduct(m), a.n->needs_grad);
  if (n->needs_grad) {
    Node* pa = a.n;
    n->backward = [n, pa, m = std::move(m)] { pa->grad += n->grad.cwiseProduct(m); };
  }
  return {n};
}

Var concat_cols(Graph& g, const std::vector<Var>& parts) {
  int R = parts.front().rows(), C = 0;
  bool ng = false;
  for (Var p : parts) {
    C += p.cols();
    ng = ng || p.n->needs_grad;
  }
  Mat v(R, C);
  int c = 0;
  for (Var p : parts) {
    v.middleCols(c, p.cols()) = p.val();
    c += p.cols();
  }
  Node* n = g.make(std::move(v), ng);
  if (ng) {
    std::vector<Node*> ps;
    for (Var p : parts) ps.push_back(p.n);
    n->backward = [n, ps] {
      int c = 0;
      for (Node* p : ps) {
        int w = static_cast<int>(p->val.cols());
        if (p->needs_grad) p->grad += n->grad.middleCols(c, w);
        c += w;
      }
    };
  }
  return {n};
}

Var concat_rows(Graph& g, const std::vector<Var>& parts) {
  int C = parts.front().cols(), R = 0;
  bool ng = false;
  for (Var p : parts) {
    R += p.rows();
    ng = ng || p.n->needs_grad;
  }
  Mat v(R, C);
  int r = 0;
  for (Var p : parts) {
    v.middleRows(r, p.rows()) = p.val();
    r += p.rows();
  }
  Node* n = g.make(std::move(v), ng);
  if (ng) {
    std::vector<Node*> ps;
    for (Var p : parts) ps.push_back(p.n);
    n->backward = [n, ps] {
      int r = 0;
      for (Node* p : ps) {
        int h = static_cast<int>(p->val.rows());
        if (p->needs_grad) p->grad += n->grad.middleRows(r, h);
        r += h;
      }
    };
  }
  return {n};
}

Var slice_cols(Graph& g, Var a, int c0, int nc) {
  Node* n = g.make(a.val().middleCols(c0, nc), a.n->needs_grad);
  if (n->needs_grad) {
    Node* pa = a.n;
    n->backward = [n, pa, c0, nc] { pa->grad.middleCols(c0, nc) += n->grad; };
  }
  return {n};
}

Var slice_rows(Graph& g, Var a, int r0, int nr) {
  Node* n = g.make(a.val().middleRows(r0, nr), a.n->needs_grad);
  if (n->needs_grad) {
    Node* pa = a.n;
    n->backward = [n, pa, r0, nr] { pa->grad.middleRows(r0, nr) += n->grad; };
  }
  return {n};
}

Var gather_rows(Graph& g, Var a, const std::vector<int>& idx) {
  Mat v(static_cast<int>(idx.size()), a.cols());
  for (size_t i = 0; i < idx.size(); ++i) v.row(static_cast<int>(i)) = a.val().row(idx[i]);
  Node* n = g.make(std::move(v), a.n->needs_grad);
  if (n->needs_grad) {
    Node* pa = a.n;
    n->backward = [n, pa, idx] {
      for (size_t i = 0; i < idx.size(); ++i)
        pa->grad.row(idx[i]) += n->grad.row(static_cast<int>(i));
    };
  }
  return {n};
}

Var mean_rows(Graph& g, Var a) {
  Node* n = g.make(a.val().colwise().mean(), a.n->needs_grad);
  if (n->needs_grad) {
    Node* pa = a.n;
    double inv = 1.0 / a.rows();
    n->backward = [n, pa, inv] { pa->grad += (n->grad * inv).replicate(pa->val.rows(), 1); };
  }
  return {n};
}

Var sum_sq(Graph& g, Var a) {
  Mat v(1, 1);
  v(0, 0) = a.val().squaredNorm();
  Node* n = g.make(std::move(v), a.n->needs_grad);
  if (n->needs_grad) {
    Node* pa = a.n;
    n->backward = [n, pa] { pa->grad += 2.0 * n->grad(0, 0) * pa->val; };
  }
  return {n};
}

Var stop_gradient(Graph& g, Var a) { return g.constant(a.val()); }

Var straight_through(Graph& g, Var z, const Mat& quantized) {
  Node* n = g.make(quantized, z.n->needs_grad);
  if (n->needs_grad) {
    Node* pz = z.n;
    n->backward = [n, pz] { pz->grad += n->grad; };
  }
  return {n};
}

Var l2_normalize_rows(Graph& g, Var a, double eps) {
  int R = a.rows();
  Vec inv_norm(R);
  Mat y(R, a.cols());
  for (int i = 0; i < R; ++i) {
    inv_norm(i) = 1.0 / std::sqrt(a.val().row(i).squaredNorm() + eps);
    y.row(i) = a.val().row(i) * inv_norm(i);
  }
  Node* n = g.make(std::move(y), a.n->needs_grad);
  if (n->needs_grad) {
    Node* pa = a.n;
    n->backward = [n, pa, inv_norm = std::move(inv_norm)] {
      for (int i = 0; i < n->grad.rows(); ++i) {
        double dot = n->grad.row(i).dot(n->val.row(i));
        pa->grad.row(i) += inv_norm(i) * (n->grad.row(i) - dot * n->val.row(i));
      }
    };
  }
  return {n};
}

Var cross_entropy_rows(Graph& g, Var logits, const std::vector<int>& labels) {
  int R = logits.rows(), C = logits.cols();
  if (static_cast<int>(labels.size()) != R) throw NumericError("label count mismatch");
  Mat probs(R, C);
  double total = 0.0;
  for (int i = 0; i < R; ++i) {
    if (labels[i] < 0 || labels[i] >= C) throw DomainError("label out of range");
    double mx = logits.val().row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.val().row(i).array() - mx).exp();
    double z = e.sum();
    probs.row(i) = e / z;
    total += -(logits.val()(i, labels[i]) - mx - std::log(z));
  }
  Mat v(1, 1);
  v(0, 0) = total / R;
  Node* n = g.make(std::move(v), logits.n->needs_grad);
  if (n->needs_grad) {
    Node* pl = logits.n;
    n->backward = [n, pl, probs = std::move(probs), labels] {
      double s = n->grad(0, 0) / probs.rows();
      Mat d = probs;
      for (int i = 0; i < d.rows(); ++i) d(i, labels[i]) -= 1.0;
      pl->grad += s * d;
    };
  }
  return {n};
}

}  // namespace hipart::nn
