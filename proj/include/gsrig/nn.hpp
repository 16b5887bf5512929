#pragma once

#include "gsrig/rng.hpp"
#include "gsrig/types.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

// Minimal reverse-mode autodiff over dense matrices, templated on scalar so
// the same model code runs at float (training) and double (verification).
//
// Reductions that cross a set axis (attention over joints, feature pooling
// over points, kNN interpolation) sum their addends in ascending value order.
// A sorted sum of a multiset is independent of input order, which is what
// makes permutation equivariance hold at the bit level rather than just to
// rounding error.

namespace gsrig::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using IdxMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
S sorted_sum(std::vector<S>& buf) {
  std::sort(buf.begin(), buf.end());
  S acc = S(0);
  for (S v : buf) acc += v;
  return acc;
}

// ---------------------------------------------------------------------------
// Graph

template <class S>
struct Node {
  Mat<S> value;
  Mat<S> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<S>>> inputs;
  std::function<void(Node<S>&)> backward;
  long id = 0;

  int rows() const { return static_cast<int>(value.rows()); }
  int cols() const { return static_cast<int>(value.cols()); }
};

template <class S>
using Ref = std::shared_ptr<Node<S>>;

namespace detail {
template <class S>
long next_id() {
  static long counter = 0;
  return ++counter;
}

template <class S>
Ref<S> make_node(Mat<S> value, std::vector<Ref<S>> inputs) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs) n->requires_grad = n->requires_grad || in->requires_grad;
  n->id = next_id<S>();
  return n;
}

// Accumulates into a node's gradient, allocating it on first touch.
template <class S, class Expr>
void accum(Node<S>& n, const Expr& g) {
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
  n.grad += g;
}

template <class S>
void check_same_shape(const Ref<S>& a, const Ref<S>& b, const char* op) {
  if (a->rows() != b->rows() || a->cols() != b->cols())
    throw Error("ShapeError", std::string(op) + ": operand shapes disagree");
}
}  // namespace detail

template <class S>
Ref<S> constant(Mat<S> value) {
  return detail::make_node<S>(std::move(value), {});
}

template <class S>
Ref<S> parameter(Mat<S> value) {
  auto n = detail::make_node<S>(std::move(value), {});
  n->requires_grad = true;
  return n;
}

// Runs reverse-mode accumulation from a 1x1 loss node.
template <class S>
void backward(const Ref<S>& loss) {
  if (loss->rows() != 1 || loss->cols() != 1)
    throw Error("ShapeError", "backward: loss must be 1x1");

  // Iterative postorder DFS; reversed postorder is a topological order.
  std::vector<Node<S>*> order;
  std::vector<std::pair<Node<S>*, size_t>> stack{{loss.get(), 0}};
  std::unordered_set<Node<S>*> seen{loss.get()};
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<S>* child = node->inputs[next++].get();
      if (seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->grad = Mat<S>::Constant(1, 1, S(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backward && n->requires_grad && n->grad.size() != 0) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise / linear ops

template <class S>
Ref<S> add(Ref<S> a, Ref<S> b) {
  detail::check_same_shape(a, b, "add");
  auto n = detail::make_node<S>(a->value + b->value, {a, b});
  n->backward = [](Node<S>& self) {
    detail::accum(*self.inputs[0], self.grad);
    detail::accum(*self.inputs[1], self.grad);
  };
  return n;
}

template <class S>
Ref<S> sub(Ref<S> a, Ref<S> b) {
  detail::check_same_shape(a, b, "sub");
  auto n = detail::make_node<S>(a->value - b->value, {a, b});
  n->backward = [](Node<S>& self) {
    detail::accum(*self.inputs[0], self.grad);
    detail::accum(*self.inputs[1], -self.grad);
  };
  return n;
}

template <class S>
Ref<S> mul(Ref<S> a, Ref<S> b) {
  detail::check_same_shape(a, b, "mul");
  auto n = detail::make_node<S>(a->value.cwiseProduct(b->value), {a, b});
  n->backward = [](Node<S>& self) {
    detail::accum(*self.inputs[0], self.grad.cwiseProduct(self.inputs[1]->value));
    detail::accum(*self.inputs[1], self.grad.cwiseProduct(self.inputs[0]->value));
  };
  return n;
}

template <class S>
Ref<S> scale(Ref<S> a, double s) {
  auto n = detail::make_node<S>(a->value * S(s), {a});
  n->backward = [s](Node<S>& self) { detail::accum(*self.inputs[0], self.grad * S(s)); };
  return n;
}

template <class S>
Ref<S> add_scalar(Ref<S> a, double s) {
  auto n = detail::make_node<S>((a->value.array() + S(s)).matrix(), {a});
  n->backward = [](Node<S>& self) { detail::accum(*self.inputs[0], self.grad); };
  return n;
}

template <class S>
Ref<S> matmul(Ref<S> a, Ref<S> b) {
  if (a->cols() != b->rows()) throw Error("ShapeError", "matmul: inner dimensions disagree");
  // Row-by-row products, not one blocked GEMM: the blocked kernel rounds tail
  // rows differently from full panels, so an output row's bits would depend on
  // its position. Per-row products keep each row a pure function of its own
  // values, which the permutation-equivariance guarantees rely on.
  Mat<S> out(a->rows(), b->cols());
  for (int i = 0; i < a->rows(); ++i) out.row(i) = a->value.row(i) * b->value;
  auto n = detail::make_node<S>(std::move(out), {a, b});
  n->backward = [](Node<S>& self) {
    detail::accum(*self.inputs[0], self.grad * self.inputs[1]->value.transpose());
    detail::accum(*self.inputs[1], self.inputs[0]->value.transpose() * self.grad);
  };
  return n;
}

// Matmul whose inner sums are order-independent; use where the inner axis is
// a set axis (attention values over tokens).
template <class S>
Ref<S> matmul_sorted(Ref<S> a, Ref<S> b) {
  if (a->cols() != b->rows()) throw Error("ShapeError", "matmul_sorted: inner dimensions disagree");
  const int r = a->rows(), k = a->cols(), c = b->cols();
  Mat<S> out(r, c);
  std::vector<S> buf(static_cast<size_t>(k));
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      for (int l = 0; l < k; ++l) buf[static_cast<size_t>(l)] = a->value(i, l) * b->value(l, j);
      out(i, j) = sorted_sum(buf);
    }
  auto n = detail::make_node<S>(std::move(out), {a, b});
  n->backward = [](Node<S>& self) {
    detail::accum(*self.inputs[0], self.grad * self.inputs[1]->value.transpose());
    detail::accum(*self.inputs[1], self.inputs[0]->value.transpose() * self.grad);
  };
  return n;
}

template <class S>
Ref<S> transpose(Ref<S> a) {
  auto n = detail::make_node<S>(a->value.transpose(), {a});
  n->backward = [](Node<S>& self) { detail::accum(*self.inputs[0], self.grad.transpose()); };
  return n;
}

// Broadcasts a 1xd row onto every row of X.
template <class S>
Ref<S> add_row(Ref<S> x, Ref<S> r) {
  if (r->rows() != 1 || r->cols() != x->cols())
    throw Error("ShapeError", "add_row: bias must be 1 x cols(x)");
  auto n = detail::make_node<S>(x->value.rowwise() + r->value.row(0), {x, r});
  n->backward = [](Node<S>& self) {
    detail::accum(*self.inputs[0], self.grad);
    detail::accum(*self.inputs[1], self.grad.colwise().sum());
  };
  return n;
}

template <class S>
Ref<S> tanh_(Ref<S> a) {
  auto n = detail::make_node<S>(a->value.array().tanh().matrix(), {a});
  n->backward = [](Node<S>& self) {
    detail::accum(*self.inputs[0],
                  self.grad.cwiseProduct((1 - self.value.array().square()).matrix()));
  };
  return n;
}

// ---------------------------------------------------------------------------
// Structure ops

template <class S>
Ref<S> gather_rows(Ref<S> a, std::vector<int> idx) {
  Mat<S> out(static_cast<int>(idx.size()), a->cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a->rows()) throw Error("ShapeError", "gather_rows: index out of range");
    out.row(static_cast<int>(i)) = a->value.row(idx[i]);
  }
  auto n = detail::make_node<S>(std::move(out), {a});
  n->backward = [idx = std::move(idx)](Node<S>& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    if (in.grad.size() == 0) in.grad = Mat<S>::Zero(in.value.rows(), in.value.cols());
    for (size_t i = 0; i < idx.size(); ++i)
      in.grad.row(idx[i]) += self.grad.row(static_cast<int>(i));
  };
  return n;
}

// Each row repeated k times consecutively.
template <class S>
Ref<S> repeat_rows(Ref<S> a, int k) {
  if (k < 1) throw Error("ShapeError", "repeat_rows: k must be >= 1");
  Mat<S> out(a->rows() * k, a->cols());
  for (int i = 0; i < a->rows(); ++i)
    for (int j = 0; j < k; ++j) out.row(i * k + j) = a->value.row(i);
  auto n = detail::make_node<S>(std::move(out), {a});
  n->backward = [k](Node<S>& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    if (in.grad.size() == 0) in.grad = Mat<S>::Zero(in.value.rows(), in.value.cols());
    for (int i = 0; i < in.value.rows(); ++i)
      for (int j = 0; j < k; ++j) in.grad.row(i) += self.grad.row(i * k + j);
  };
  return n;
}

template <class S>
Ref<S> concat_cols(std::vector<Ref<S>> parts) {
  if (parts.empty()) throw Error("ShapeError", "concat_cols: empty input");
  int rows = parts[0]->rows(), cols = 0;
  for (const auto& p : parts) {
    if (p->rows() != rows) throw Error("ShapeError", "concat_cols: row counts disagree");
    cols += p->cols();
  }
  Mat<S> out(rows, cols);
  int at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p->cols()) = p->value;
    at += p->cols();
  }
  auto n = detail::make_node<S>(std::move(out), parts);
  n->backward = [](Node<S>& self) {
    int at = 0;
    for (auto& inp : self.inputs) {
      detail::accum(*inp, self.grad.middleCols(at, inp->value.cols()));
      at += static_cast<int>(inp->value.cols());
    }
  };
  return n;
}

template <class S>
Ref<S> concat_rows(std::vector<Ref<S>> parts) {
  if (parts.empty()) throw Error("ShapeError", "concat_rows: empty input");
  int cols = parts[0]->cols(), rows = 0;
  for (const auto& p : parts) {
    if (p->cols() != cols) throw Error("ShapeError", "concat_rows: column counts disagree");
    rows += p->rows();
  }
  Mat<S> out(rows, cols);
  int at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p->rows()) = p->value;
    at += p->rows();
  }
  auto n = detail::make_node<S>(std::move(out), parts);
  n->backward = [](Node<S>& self) {
    int at = 0;
    for (auto& inp : self.inputs) {
      detail::accum(*inp, self.grad.middleRows(at, inp->value.rows()));
      at += static_cast<int>(inp->value.rows());
    }
  };
  return n;
}

template <class S>
Ref<S> slice_cols(Ref<S> a, int start, int len) {
  if (start < 0 || len < 1 || start + len > a->cols())
    throw Error("ShapeError", "slice_cols: range out of bounds");
  auto n = detail::make_node<S>(a->value.middleCols(start, len), {a});
  n->backward = [start, len](Node<S>& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    if (in.grad.size() == 0) in.grad = Mat<S>::Zero(in.value.rows(), in.value.cols());
    in.grad.middleCols(start, len) += self.grad;
  };
  return n;
}

// Max over each consecutive block of k rows; ties route the gradient to the
// lowest row in the block.
template <class S>
Ref<S> block_max(Ref<S> a, int blocks, int k) {
  if (a->rows() != blocks * k) throw Error("ShapeError", "block_max: rows != blocks*k");
  Mat<S> out(blocks, a->cols());
  IdxMat arg(blocks, a->cols());
  for (int b = 0; b < blocks; ++b)
    for (int c = 0; c < a->cols(); ++c) {
      S best = a->value(b * k, c);
      int bi = 0;
      for (int j = 1; j < k; ++j)
        if (a->value(b * k + j, c) > best) {
          best = a->value(b * k + j, c);
          bi = j;
        }
      out(b, c) = best;
      arg(b, c) = bi;
    }
  auto n = detail::make_node<S>(std::move(out), {a});
  n->backward = [arg = std::move(arg), k](Node<S>& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    if (in.grad.size() == 0) in.grad = Mat<S>::Zero(in.value.rows(), in.value.cols());
    for (int b = 0; b < arg.rows(); ++b)
      for (int c = 0; c < arg.cols(); ++c) in.grad(b * k + arg(b, c), c) += self.grad(b, c);
  };
  return n;
}

// out.row(i) = sum_l w(i,l) * feats.row(idx(i,l)), accumulated order-independently.
// The weights are constants (not differentiated) — distance-based interpolation
// where weights come from the query geometry, not from parameters.
template <class S>
Ref<S> const_weighted_rows(Ref<S> feats, const IdxMat& idx, const Mat<S>& w) {
  if (idx.rows() != w.rows() || idx.cols() != w.cols())
    throw Error("ShapeError", "const_weighted_rows: idx/w shapes disagree");
  const int m = static_cast<int>(idx.rows()), k = static_cast<int>(idx.cols());
  Mat<S> out(m, feats->cols());
  std::vector<S> buf(static_cast<size_t>(k));
  for (int i = 0; i < m; ++i)
    for (int c = 0; c < feats->cols(); ++c) {
      for (int l = 0; l < k; ++l) buf[static_cast<size_t>(l)] = w(i, l) * feats->value(idx(i, l), c);
      out(i, c) = sorted_sum(buf);
    }
  auto n = detail::make_node<S>(std::move(out), {feats});
  n->backward = [idx, w](Node<S>& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    if (in.grad.size() == 0) in.grad = Mat<S>::Zero(in.value.rows(), in.value.cols());
    for (int i = 0; i < idx.rows(); ++i)
      for (int l = 0; l < idx.cols(); ++l) in.grad.row(idx(i, l)) += w(i, l) * self.grad.row(i);
  };
  return n;
}

// ---------------------------------------------------------------------------
// Reductions, normalization

template <class S>
Ref<S> sum_all(Ref<S> a) {
  S acc = S(0);
  for (int j = 0; j < a->cols(); ++j)
    for (int i = 0; i < a->rows(); ++i) acc += a->value(i, j);
  auto n = detail::make_node<S>(Mat<S>::Constant(1, 1, acc), {a});
  n->backward = [](Node<S>& self) {
    detail::accum(*self.inputs[0],
                  Mat<S>::Constant(self.inputs[0]->value.rows(), self.inputs[0]->value.cols(),
                                   self.grad(0, 0)));
  };
  return n;
}

template <class S>
Ref<S> mean_all(Ref<S> a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a->value.size()));
}

// Column means accumulated order-independently — the pooling used for the
// global geometry token must not depend on point order.
template <class S>
Ref<S> sorted_mean_rows(Ref<S> a) {
  const int r = a->rows(), c = a->cols();
  if (r == 0) throw Error("ShapeError", "sorted_mean_rows: empty input");
  Mat<S> out(1, c);
  std::vector<S> buf(static_cast<size_t>(r));
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < r; ++i) buf[static_cast<size_t>(i)] = a->value(i, j);
    out(0, j) = sorted_sum(buf) / S(r);
  }
  auto n = detail::make_node<S>(std::move(out), {a});
  n->backward = [](Node<S>& self) {
    auto& in = *self.inputs[0];
    detail::accum(in, (Mat<S>::Ones(in.value.rows(), 1) * self.grad) / S(in.value.rows()));
  };
  return n;
}

template <class S>
Ref<S> softmax_rows(Ref<S> a) {
  const int r = a->rows(), c = a->cols();
  Mat<S> out(r, c);
  std::vector<S> buf(static_cast<size_t>(c));
  for (int i = 0; i < r; ++i) {
    S mx = a->value.row(i).maxCoeff();
    for (int j = 0; j < c; ++j) buf[static_cast<size_t>(j)] = std::exp(a->value(i, j) - mx);
    std::vector<S> tmp = buf;
    S z = sorted_sum(tmp);
    for (int j = 0; j < c; ++j) out(i, j) = buf[static_cast<size_t>(j)] / z;
  }
  auto n = detail::make_node<S>(std::move(out), {a});
  n->backward = [](Node<S>& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Mat<S> g(self.value.rows(), self.value.cols());
    for (int i = 0; i < self.value.rows(); ++i) {
      S dot = self.grad.row(i).dot(self.value.row(i));
      g.row(i) = self.value.row(i).cwiseProduct((self.grad.row(i).array() - dot).matrix());
    }
    detail::accum(in, g);
  };
  return n;
}

template <class S>
Ref<S> layer_norm_rows(Ref<S> x, Ref<S> gain, Ref<S> bias, double eps = 1e-5) {
  if (gain->rows() != 1 || gain->cols() != x->cols() || bias->rows() != 1 ||
      bias->cols() != x->cols())
    throw Error("ShapeError", "layer_norm_rows: gain/bias must be 1 x cols(x)");
  const int r = x->rows(), c = x->cols();
  Mat<S> xhat(r, c);
  Mat<S> inv_std(r, 1);
  for (int i = 0; i < r; ++i) {
    S mu = x->value.row(i).mean();
    S var = (x->value.row(i).array() - mu).square().mean();
    S is = S(1) / std::sqrt(var + S(eps));
    inv_std(i, 0) = is;
    xhat.row(i) = (x->value.row(i).array() - mu).matrix() * is;
  }
  Mat<S> out = (xhat.array().rowwise() * gain->value.row(0).array()).matrix();
  out.rowwise() += bias->value.row(0);
  auto n = detail::make_node<S>(std::move(out), {x, gain, bias});
  n->backward = [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<S>& self) {
    auto& xin = *self.inputs[0];
    auto& gin = *self.inputs[1];
    auto& bin = *self.inputs[2];
    const int rr = static_cast<int>(xhat.rows()), cc = static_cast<int>(xhat.cols());
    detail::accum(bin, self.grad.colwise().sum());
    detail::accum(gin, self.grad.cwiseProduct(xhat).colwise().sum());
    if (!xin.requires_grad) return;
    Mat<S> gx(rr, cc);
    for (int i = 0; i < rr; ++i) {
      Eigen::RowVectorX<S> dxhat =
          self.grad.row(i).cwiseProduct(gin.value.row(0));
      S m1 = dxhat.mean();
      S m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
      gx.row(i) = inv_std(i, 0) *
                  (dxhat.array() - m1 - xhat.row(i).array() * m2).matrix();
    }
    detail::accum(xin, gx);
  };
  return n;
}

// Mean over rows of (logsumexp(row) - row[target]); targets one per row.
template <class S>
Ref<S> cross_entropy_logits(Ref<S> logits, std::vector<int> targets) {
  const int r = logits->rows(), c = logits->cols();
  if (static_cast<int>(targets.size()) != r)
    throw Error("ShapeError", "cross_entropy_logits: one target per row required");
  for (int t : targets)
    if (t < 0 || t >= c) throw Error("ShapeError", "cross_entropy_logits: target out of range");
  S total = S(0);
  Mat<S> probs(r, c);
  for (int i = 0; i < r; ++i) {
    S mx = logits->value.row(i).maxCoeff();
    Eigen::RowVectorX<S> e = (logits->value.row(i).array() - mx).exp().matrix();
    S z = e.sum();
    probs.row(i) = e / z;
    total += std::log(z) + mx - logits->value(i, targets[static_cast<size_t>(i)]);
  }
  auto n = detail::make_node<S>(Mat<S>::Constant(1, 1, total / S(r)), {logits});
  n->backward = [probs = std::move(probs), targets = std::move(targets)](Node<S>& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Mat<S> g = probs;
    for (int i = 0; i < g.rows(); ++i) g(i, targets[static_cast<size_t>(i)]) -= S(1);
    detail::accum(in, g * (self.grad(0, 0) / S(g.rows())));
  };
  return n;
}

// mean((a - b)^2) against a constant target.
template <class S>
Ref<S> mse(Ref<S> a, const Mat<S>& target) {
  if (a->rows() != target.rows() || a->cols() != target.cols())
    throw Error("ShapeError", "mse: target shape disagrees");
  Mat<S> diff = a->value - target;
  S total = S(0);
  for (int j = 0; j < diff.cols(); ++j)
    for (int i = 0; i < diff.rows(); ++i) total += diff(i, j) * diff(i, j);
  auto n = detail::make_node<S>(Mat<S>::Constant(1, 1, total / S(diff.size())), {a});
  n->backward = [diff = std::move(diff)](Node<S>& self) {
    detail::accum(*self.inputs[0], diff * (S(2) * self.grad(0, 0) / S(diff.size())));
  };
  return n;
}

// ---------------------------------------------------------------------------
// Parameters, optimizer

template <class S>
struct ParamStore {
  std::vector<std::pair<std::string, Ref<S>>> items;

  Ref<S> add(const std::string& name, Mat<S> init) {
    for (const auto& [n, _] : items)
      if (n == name) throw Error("BadCheckpoint", "duplicate parameter name: " + name);
    auto p = parameter<S>(std::move(init));
    items.emplace_back(name, p);
    return p;
  }
  Ref<S> find(const std::string& name) const {
    for (const auto& [n, p] : items)
      if (n == name) return p;
    throw Error("BadCheckpoint", "unknown parameter: " + name);
  }
  std::vector<Ref<S>> refs() const {
    std::vector<Ref<S>> out;
    out.reserve(items.size());
    for (const auto& [_, p] : items) out.push_back(p);
    return out;
  }
  size_t count() const {
    size_t n = 0;
    for (const auto& [_, p] : items) n += static_cast<size_t>(p->value.size());
    return n;
  }
  void zero_grads() {
    for (auto& [_, p] : items) p->grad.resize(0, 0);
  }
};

// Normal init scaled by 1/sqrt(fan_in); the generic dense-layer default here.
template <class S>
Mat<S> dense_init(Rng& rng, int rows, int cols, double gain = 1.0) {
  Mat<S> m(rows, cols);
  double std = gain / std::sqrt(static_cast<double>(rows));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = S(rng.normal() * std);
  return m;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class S>
struct AdamState {
  std::vector<Mat<S>> m, v;
  long t = 0;
};

template <class S>
void adam_step(const std::vector<Ref<S>>& params, AdamState<S>& st, const AdamConfig& cfg) {
  if (st.m.empty()) {
    for (const auto& p : params) {
      st.m.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
      st.v.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (st.m.size() != params.size())
    throw Error("ShapeError", "adam_step: state does not match parameter list");
  ++st.t;
  const S b1 = S(cfg.beta1), b2 = S(cfg.beta2);
  const S c1 = S(1) - S(std::pow(cfg.beta1, static_cast<double>(st.t)));
  const S c2 = S(1) - S(std::pow(cfg.beta2, static_cast<double>(st.t)));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    Mat<S> g = p.grad.size() == 0 ? Mat<S>::Zero(p.value.rows(), p.value.cols()) : p.grad;
    st.m[i] = b1 * st.m[i] + (S(1) - b1) * g;
    st.v[i] = b2 * st.v[i] + (S(1) - b2) * g.cwiseProduct(g);
    Mat<S> mhat = st.m[i] / c1;
    Mat<S> vhat = st.v[i] / c2;
    p.value -= S(cfg.lr) * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + S(cfg.eps)).matrix());
  }
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckOptions {
  double eps = 1e-6;                // h = eps * max(1, |w|)
  int max_coords_per_param = 0;     // 0 = every coordinate
  uint64_t seed = 1;                // coordinate subsampling stream
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int worst_coord = -1;
};

// f() must rebuild the loss graph from current parameter values each call.
inline GradCheckResult grad_check(const std::function<Ref<double>()>& f,
                                  const std::vector<std::pair<std::string, Ref<double>>>& params,
                                  const GradCheckOptions& opt = {}) {
  auto loss = f();
  if (!std::isfinite(loss->value(0, 0))) throw Error("NumericalError", "grad_check: loss is not finite");
  backward(loss);
  std::vector<Mat<double>> analytic;
  for (const auto& [_, p] : params)
    analytic.push_back(p->grad.size() == 0 ? Mat<double>::Zero(p->value.rows(), p->value.cols())
                                           : p->grad);

  GradCheckResult res;
  Rng rng(opt.seed);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = *params[pi].second;
    const int n = static_cast<int>(p.value.size());
    std::vector<int> coords;
    if (opt.max_coords_per_param <= 0 || n <= opt.max_coords_per_param) {
      coords.resize(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      for (int i = 0; i < opt.max_coords_per_param; ++i)
        coords.push_back(static_cast<int>(rng.uniform_index(static_cast<size_t>(n))));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    for (int ci : coords) {
      double w0 = p.value.data()[ci];
      double h = opt.eps * std::max(1.0, std::abs(w0));
      p.value.data()[ci] = w0 + h;
      double fp = f()->value(0, 0);
      p.value.data()[ci] = w0 - h;
      double fm = f()->value(0, 0);
      p.value.data()[ci] = w0;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw Error("NumericalError", "grad_check: perturbed loss is not finite");
      double numeric = (fp - fm) / (2.0 * h);
      double a = analytic[pi].data()[ci];
      double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.worst_param = params[pi].first;
        res.worst_coord = ci;
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, u64 manifest length, JSON manifest, raw little-endian
// row-major blob.

inline constexpr char kCkptMagic[9] = "GSRIGCK1";

template <class S>
constexpr const char* dtype_tag() {
  if constexpr (sizeof(S) == 4)
    return "f4";
  else
    return "f8";
}

void write_checkpoint_file(const std::string& path, const nlohmann::json& manifest,
                           const std::vector<char>& blob);

struct RawCheckpoint {
  nlohmann::json config;
  std::string dtype;
  std::vector<std::pair<std::string, Mat<double>>> tensors;  // widened on load
};

RawCheckpoint load_checkpoint(const std::string& path);

template <class S>
void save_checkpoint(const std::string& path, const ParamStore<S>& store,
                     const nlohmann::json& config) {
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<char> blob;
  size_t offset = 0;
  for (const auto& [name, p] : store.items) {
    const int r = p->rows(), c = p->cols();
    tensors.push_back({{"name", name}, {"rows", r}, {"cols", c}, {"offset", offset}});
    size_t bytes = static_cast<size_t>(r) * static_cast<size_t>(c) * sizeof(S);
    size_t at = blob.size();
    blob.resize(at + bytes);
    S* out = reinterpret_cast<S*>(blob.data() + at);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) *out++ = p->value(i, j);
    offset += bytes;
  }
  nlohmann::json manifest = {{"blob_bytes", blob.size()},
                             {"config", config},
                             {"dtype", dtype_tag<S>()},
                             {"format", 1},
                             {"tensors", tensors}};
  write_checkpoint_file(path, manifest, blob);
}

template <class S>
void load_into(const RawCheckpoint& ckpt, ParamStore<S>& store) {
  if (ckpt.tensors.size() != store.items.size())
    throw Error("BadCheckpoint", "checkpoint parameter count does not match model");
  for (size_t i = 0; i < store.items.size(); ++i) {
    const auto& [name, mat] = ckpt.tensors[i];
    auto& [want, p] = store.items[i];
    if (name != want) throw Error("BadCheckpoint", "checkpoint tensor order mismatch: " + name);
    if (mat.rows() != p->value.rows() || mat.cols() != p->value.cols())
      throw Error("BadCheckpoint", "checkpoint tensor shape mismatch: " + name);
    p->value = mat.template cast<S>();
  }
}

}  // namespace gsrig::nn
