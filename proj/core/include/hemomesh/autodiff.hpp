#pragma once

#include <Eigen/Core>
#include <functional>
#include <utility>
#include <vector>

#include "hemomesh/common.hpp"

namespace hemomesh {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

namespace ad {

// Reverse-mode tape. Nodes are matrices (per-vertex rows x channel columns,
// or flat parameter vectors). Creation order is a topological order, so
// backward() walks the tape in reverse calling each node's pullback. Ops
// capture the ids of their inputs and of the node they produce; the output
// id of the next node is tape.size() at construction time.
template <typename T>
class Tape {
 public:
  int leaf(MatX<T> value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, requires_grad});
    return static_cast<int>(nodes_.size()) - 1;
  }
  int constant(MatX<T> value) { return leaf(std::move(value), false); }

  int make(MatX<T> value, bool requires_grad,
           std::function<void(Tape&)> back) {
    nodes_.push_back(
        Node{std::move(value), {}, std::move(back), requires_grad});
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Id the next node created will get.
  int next_id() const { return static_cast<int>(nodes_.size()); }

  const MatX<T>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool has_grad(int id) const { return nodes_[id].grad.size() > 0; }

  // Gradient buffer, allocated zeroed on first touch.
  MatX<T>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0)
      n.grad = MatX<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void backward(int root) {
    if (root < 0 || root >= static_cast<int>(nodes_.size()))
      throw ConfigError("backward: invalid node id");
    if (nodes_[root].value.size() != 1)
      throw ConfigError("backward: root must be a scalar node");
    if (!nodes_[root].back && !nodes_[root].requires_grad)
      throw ConfigError("backward called without a recorded forward pass");
    grad(root)(0, 0) = T(1);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.back && n.requires_grad && n.grad.size() > 0) n.back(*this);
    }
  }

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    MatX<T> value;
    MatX<T> grad;
    std::function<void(Tape&)> back;
    bool requires_grad;
  };
  std::vector<Node> nodes_;
};

template <typename T>
int add(Tape<T>& tape, int a, int b) {
  if (tape.value(a).rows() != tape.value(b).rows() ||
      tape.value(a).cols() != tape.value(b).cols())
    throw ConfigError("add: shape mismatch");
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  const int out = tape.next_id();
  return tape.make(tape.value(a) + tape.value(b), rg, [=](Tape<T>& t) {
    const MatX<T>& g = t.grad(out);
    if (t.requires_grad(a)) t.grad(a) += g;
    if (t.requires_grad(b)) t.grad(b) += g;
  });
}

// Y = X * W. X: (n x cin), W: (cin x cout).
template <typename T>
int matmul(Tape<T>& tape, int x, int w) {
  if (tape.value(x).cols() != tape.value(w).rows())
    throw ConfigError("matmul: inner dimension mismatch");
  const bool rg = tape.requires_grad(x) || tape.requires_grad(w);
  const int out = tape.next_id();
  return tape.make(tape.value(x) * tape.value(w), rg, [=](Tape<T>& t) {
    const MatX<T>& g = t.grad(out);
    if (t.requires_grad(x)) t.grad(x) += g * t.value(w).transpose();
    if (t.requires_grad(w)) t.grad(w) += t.value(x).transpose() * g;
  });
}

template <typename T>
int relu(Tape<T>& tape, int x) {
  const int out = tape.next_id();
  return tape.make(tape.value(x).cwiseMax(T(0)), tape.requires_grad(x),
                   [=](Tape<T>& t) {
                     if (!t.requires_grad(x)) return;
                     t.grad(x) +=
                         (t.value(x).array() > T(0))
                             .select(t.grad(out),
                                     MatX<T>::Zero(t.grad(out).rows(),
                                                   t.grad(out).cols()));
                   });
}

template <typename T>
int concat_cols(Tape<T>& tape, int a, int b) {
  const MatX<T>& va = tape.value(a);
  const MatX<T>& vb = tape.value(b);
  if (va.rows() != vb.rows()) throw ConfigError("concat_cols: row mismatch");
  MatX<T> v(va.rows(), va.cols() + vb.cols());
  v.leftCols(va.cols()) = va;
  v.rightCols(vb.cols()) = vb;
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  const int out = tape.next_id();
  const Eigen::Index ca = va.cols(), cb = vb.cols();
  return tape.make(std::move(v), rg, [=](Tape<T>& t) {
    const MatX<T>& g = t.grad(out);
    if (t.requires_grad(a)) t.grad(a) += g.leftCols(ca);
    if (t.requires_grad(b)) t.grad(b) += g.rightCols(cb);
  });
}

// Mean over all entries of squared differences.
template <typename T>
int mse_loss(Tape<T>& tape, int pred, int target) {
  const MatX<T>& p = tape.value(pred);
  const MatX<T>& y = tape.value(target);
  if (p.rows() != y.rows() || p.cols() != y.cols())
    throw ConfigError("mse_loss: shape mismatch between prediction and target");
  const T n = static_cast<T>(p.size());
  MatX<T> v(1, 1);
  v(0, 0) = (p - y).squaredNorm() / n;
  const bool rg = tape.requires_grad(pred) || tape.requires_grad(target);
  const int out = tape.next_id();
  return tape.make(std::move(v), rg, [=](Tape<T>& t) {
    const T g = t.grad(out)(0, 0);
    const MatX<T> d = (t.value(pred) - t.value(target)) * (T(2) * g / n);
    if (t.requires_grad(pred)) t.grad(pred) += d;
    if (t.requires_grad(target)) t.grad(target) -= d;
  });
}

}  // namespace ad
}  // namespace hemomesh
