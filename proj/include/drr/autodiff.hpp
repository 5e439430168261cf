// Copyright 2026 The DRR Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every intermediate value of one forward pass together with
// a closure that pushes the incoming adjoint back to its operands. Parameters
// are referenced, not copied, and their gradients are accumulated in place,
// so a multi-megabyte output projection costs nothing to put on the tape.
// Nodes whose operands are all constants (or frozen parameters) record no
// closure at all; inference therefore runs on the same code path.

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace drr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A named tensor. Gradients live on the Tape that differentiates it.
struct Parameter {
  std::string name;
  Matrix value;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {}
};

namespace ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix&)>;

  /// With `record_gradients` false every node is a constant (inference mode).
  explicit Tape(bool record_gradients = true) : record_(record_gradients) { nodes_.reserve(1024); }

  bool recording() const { return record_; }

  Var constant(Matrix v) {
    Node n;
    n.value = std::move(v);
    return push(std::move(n));
  }

  Var scalar(double x) { return constant(Matrix::Constant(1, 1, x)); }

  /// Restricts differentiation to parameters accepted by `pred`. Default: all.
  void set_trainable(std::function<bool(const Parameter&)> pred) { trainable_ = std::move(pred); }

  Var param(const Parameter& p) {
    Node n;
    n.ref = &p.value;
    if (record_ && (!trainable_ || trainable_(p))) {
      n.param = &p;
      n.needs_grad = true;
    }
    return push(std::move(n));
  }

  /// Accumulated gradient of a parameter, or nullptr if it received none.
  const Matrix* gradient(const Parameter& p) const {
    auto it = grads_.find(&p);
    return it == grads_.end() ? nullptr : &it->second;
  }

  const Matrix& value(Var v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    return n.ref ? *n.ref : n.value;
  }

  double scalar_value(Var v) const { return value(v)(0, 0); }

  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

  /// Gradient buffer of the trainable parameter behind a leaf, or nullptr.
  Matrix* param_grad(Var v) {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.param) return nullptr;
    auto [it, fresh] = grads_.try_emplace(n.param);
    if (fresh) it->second = Matrix::Zero(n.param->value.rows(), n.param->value.cols());
    return &it->second;
  }

  /// Records an op result. `back` is dropped when no operand needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> operands, Backward back) {
    Node n;
    n.value = std::move(value);
    for (Var o : operands) n.needs_grad = n.needs_grad || needs_grad(o);
    if (n.needs_grad) n.back = std::move(back);
    return push(std::move(n));
  }

  Var record(Matrix value, std::span<const Var> operands, Backward back) {
    Node n;
    n.value = std::move(value);
    for (Var o : operands) n.needs_grad = n.needs_grad || needs_grad(o);
    if (n.needs_grad) n.back = std::move(back);
    return push(std::move(n));
  }

  /// Adds `g` into the adjoint of `v` (or straight into its parameter).
  void accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.needs_grad) return;
    if (n.param) {
      *param_grad(v) += g;
      return;
    }
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(root)/d(root) = 1 and sweeps the tape in reverse.
  void backward(Var root) {
    if (value(root).size() != 1) throw std::invalid_argument("backward: root must be a scalar");
    if (!needs_grad(root)) return;
    nodes_[static_cast<std::size_t>(root.id)].grad = Matrix::Ones(1, 1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.back || n.grad.size() == 0) continue;
      Matrix g = std::move(n.grad);
      n.back(*this, g);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    grads_.clear();
  }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    const Parameter* param = nullptr;
    Matrix grad;
    bool needs_grad = false;
    Backward back;
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, Matrix> grads_;
  std::function<bool(const Parameter&)> trainable_;
  bool record_ = true;
};

// ---------------------------------------------------------------------------
// Elementwise helpers

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// ---------------------------------------------------------------------------
// Ops

inline Var detach(Tape& t, Var a) { return t.constant(t.value(a)); }

inline Var add(Tape& t, Var a, Var b) {
  return t.record(t.value(a) + t.value(b), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

inline Var sub(Tape& t, Var a, Var b) {
  return t.record(t.value(a) - t.value(b), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

/// Hadamard product.
inline Var mul(Tape& t, Var a, Var b) {
  Matrix out = t.value(a).cwiseProduct(t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
    if (tp.needs_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
  });
}

inline Var scale(Tape& t, Var a, double c) {
  return t.record(t.value(a) * c, {a}, [a, c](Tape& tp, const Matrix& g) { tp.accumulate(a, g * c); });
}

inline Var add_constant(Tape& t, Var a, double c) {
  Matrix out = t.value(a).array() + c;
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

inline Var matmul(Tape& t, Var a, Var b) {
  Matrix out = t.value(a) * t.value(b);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(a)) {
      if (Matrix* pg = tp.param_grad(a)) {
        pg->noalias() += g * tp.value(b).transpose();
      } else {
        tp.accumulate(a, g * tp.value(b).transpose());
      }
    }
    if (tp.needs_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

/// a^T * b
inline Var matmul_t(Tape& t, Var a, Var b) {
  Matrix out = t.value(a).transpose() * t.value(b);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(a)) {
      if (Matrix* pg = tp.param_grad(a)) {
        pg->noalias() += tp.value(b) * g.transpose();
      } else {
        tp.accumulate(a, tp.value(b) * g.transpose());
      }
    }
    if (tp.needs_grad(b)) tp.accumulate(b, tp.value(a) * g);
  });
}

/// Adds column vector b to every column of a.
inline Var add_broadcast(Tape& t, Var a, Var b) {
  Matrix out = t.value(a).colwise() + t.value(b).col(0);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.needs_grad(b)) tp.accumulate(b, g.rowwise().sum());
  });
}

inline Var tanh(Tape& t, Var a) {
  Matrix out = t.value(a).array().tanh().matrix();
  return t.record(out, {a}, [a, out](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.cwiseProduct((1.0 - out.array().square()).matrix()));
  });
}

inline Var sigmoid(Tape& t, Var a) {
  Matrix out = t.value(a).unaryExpr([](double x) { return sigmoid(x); });
  return t.record(out, {a}, [a, out](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.cwiseProduct((out.array() * (1.0 - out.array())).matrix()));
  });
}

inline Var softplus(Tape& t, Var a) {
  Matrix out = t.value(a).unaryExpr([](double x) { return softplus(x); });
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    Matrix d = tp.value(a).unaryExpr([](double x) { return sigmoid(x); });
    tp.accumulate(a, g.cwiseProduct(d));
  });
}

inline Var log(Tape& t, Var a) {
  Matrix out = t.value(a).array().log().matrix();
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.cwiseQuotient(tp.value(a)));
  });
}

inline Var square(Tape& t, Var a) {
  Matrix out = t.value(a).array().square().matrix();
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, 2.0 * g.cwiseProduct(tp.value(a)));
  });
}

inline Var sum(Tape& t, Var a) {
  return t.record(Matrix::Constant(1, 1, t.value(a).sum()), {a}, [a](Tape& tp, const Matrix& g) {
    const Matrix& v = tp.value(a);
    tp.accumulate(a, Matrix::Constant(v.rows(), v.cols(), g(0, 0)));
  });
}

inline Var dot(Tape& t, Var a, Var b) {
  const double d = t.value(a).cwiseProduct(t.value(b)).sum();
  return t.record(Matrix::Constant(1, 1, d), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(a)) tp.accumulate(a, g(0, 0) * tp.value(b));
    if (tp.needs_grad(b)) tp.accumulate(b, g(0, 0) * tp.value(a));
  });
}

/// Sum of 1x1 terms.
inline Var add_n(Tape& t, const std::vector<Var>& terms) {
  if (terms.empty()) return t.scalar(0.0);
  double s = 0.0;
  for (Var v : terms) s += t.scalar_value(v);
  return t.record(Matrix::Constant(1, 1, s), std::span<const Var>(terms),
                  [terms](Tape& tp, const Matrix& g) {
                    for (Var v : terms) tp.accumulate(v, g);
                  });
}

/// Vertical concatenation of column vectors.
inline Var concat(Tape& t, const std::vector<Var>& parts) {
  Eigen::Index rows = 0;
  for (Var p : parts) rows += t.value(p).rows();
  Matrix out(rows, 1);
  Eigen::Index off = 0;
  for (Var p : parts) {
    const Matrix& v = t.value(p);
    out.block(off, 0, v.rows(), 1) = v;
    off += v.rows();
  }
  return t.record(std::move(out), std::span<const Var>(parts), [parts](Tape& tp, const Matrix& g) {
    Eigen::Index o = 0;
    for (Var p : parts) {
      const Eigen::Index r = tp.value(p).rows();
      if (tp.needs_grad(p)) tp.accumulate(p, g.block(o, 0, r, 1));
      o += r;
    }
  });
}

/// Rows [start, start + rows) of a column vector.
inline Var slice(Tape& t, Var a, Eigen::Index start, Eigen::Index rows) {
  Matrix out = t.value(a).block(start, 0, rows, 1);
  return t.record(std::move(out), {a}, [a, start, rows](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(tp.value(a).rows(), 1);
    full.block(start, 0, rows, 1) = g;
    tp.accumulate(a, full);
  });
}

/// Horizontal stack of equally sized column vectors.
inline Var hstack(Tape& t, const std::vector<Var>& cols) {
  const Eigen::Index rows = t.value(cols.front()).rows();
  Matrix out(rows, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = t.value(cols[j]);
  return t.record(std::move(out), std::span<const Var>(cols), [cols](Tape& tp, const Matrix& g) {
    for (std::size_t j = 0; j < cols.size(); ++j)
      if (tp.needs_grad(cols[j])) tp.accumulate(cols[j], g.col(static_cast<Eigen::Index>(j)));
  });
}

inline Vector log_softmax_values(const Eigen::Ref<const Vector>& x) {
  const double m = x.maxCoeff();
  const double lse = m + std::log((x.array() - m).exp().sum());
  return x.array() - lse;
}

/// Column-vector log-softmax.
inline Var log_softmax(Tape& t, Var a) {
  Matrix out = log_softmax_values(t.value(a).col(0));
  return t.record(out, {a}, [a, out](Tape& tp, const Matrix& g) {
    const Matrix p = out.array().exp().matrix();
    tp.accumulate(a, g - p * g.sum());
  });
}

inline Var softmax(Tape& t, Var a) {
  Matrix out = log_softmax_values(t.value(a).col(0)).array().exp().matrix();
  return t.record(out, {a}, [a, out](Tape& tp, const Matrix& g) {
    const double s = out.cwiseProduct(g).sum();
    tp.accumulate(a, out.cwiseProduct((g.array() - s).matrix()));
  });
}

/// Element i of a column vector, as 1x1.
inline Var pick(Tape& t, Var a, Eigen::Index i) {
  return t.record(Matrix::Constant(1, 1, t.value(a)(i, 0)), {a}, [a, i](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(tp.value(a).rows(), 1);
    full(i, 0) = g(0, 0);
    tp.accumulate(a, full);
  });
}

/// Row `row` of a parameter matrix as a column vector (embedding lookup).
inline Var row_of(Tape& t, Var table, Eigen::Index row) {
  Matrix out = t.value(table).row(row).transpose();
  return t.record(std::move(out), {table}, [table, row](Tape& tp, const Matrix& g) {
    if (Matrix* pg = tp.param_grad(table)) {
      pg->row(row) += g.transpose();
    } else {
      Matrix full = Matrix::Zero(tp.value(table).rows(), tp.value(table).cols());
      full.row(row) = g.transpose();
      tp.accumulate(table, full);
    }
  });
}

struct SparseEntry {
  Eigen::Index index = 0;
  double value = 0.0;
};

/// W * x for a sparse x given as (column, value) pairs.
inline Var sparse_matvec(Tape& t, Var w, std::vector<SparseEntry> x) {
  const Matrix& wv = t.value(w);
  Matrix out = Matrix::Zero(wv.rows(), 1);
  for (const auto& e : x) out.col(0) += e.value * wv.col(e.index);
  return t.record(std::move(out), {w}, [w, x = std::move(x)](Tape& tp, const Matrix& g) {
    if (Matrix* pg = tp.param_grad(w)) {
      for (const auto& e : x) pg->col(e.index) += e.value * g.col(0);
    } else {
      Matrix full = Matrix::Zero(tp.value(w).rows(), tp.value(w).cols());
      for (const auto& e : x) full.col(e.index) += e.value * g.col(0);
      tp.accumulate(w, full);
    }
  });
}

}  // namespace ad
}  // namespace drr
