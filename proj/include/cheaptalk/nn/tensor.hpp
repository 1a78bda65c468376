#pragma once

// Dense 2-D tensors with tape-free reverse-mode differentiation. Every op
// result keeps shared links to its inputs; backward() walks the resulting DAG
// in reverse topological order.

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cheaptalk/errors.hpp"

namespace cheaptalk::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows in
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
};

inline thread_local int no_grad_depth = 0;

}  // namespace detail

// While alive, ops on this thread build no graph.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Index rows, Index cols) {
    return Tensor(Matrix::Zero(rows, cols));
  }
  static Tensor scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return Tensor(std::move(m));
  }
  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double item() const {
    if (rows() != 1 || cols() != 1) throw UsageError("item() on a non-scalar tensor");
    return node_->value(0, 0);
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  bool has_grad() const { return node_->grad.size() != 0; }
  // Gradient accumulated so far; zeros when nothing flowed in.
  Matrix grad() const {
    if (has_grad()) return node_->grad;
    return Matrix::Zero(rows(), cols());
  }
  void zero_grad() { node_->grad.resize(0, 0); }

  // Same value, no graph.
  Tensor detach() const { return Tensor(node_->value); }

  // Reverse-mode sweep from this scalar. Leaf gradients accumulate; interior
  // gradients are reset first.
  void backward() const {
    if (!node_ || !node_->requires_grad)
      throw UsageError("backward() on a detached tensor");
    if (rows() != 1 || cols() != 1) throw UsageError("backward() needs a scalar loss");

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        detail::Node* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    for (detail::Node* n : order)
      if (!n->leaf) n->grad.resize(0, 0);
    node_->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* n = *it;
      if (n->backward && n->grad.size() != 0) n->backward(*n);
    }
  }

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

// Builds an op result. `backward` receives the result node; parent i is
// self.parents[i] and only needs gradients when parents[i]->requires_grad.
inline Tensor make_op(Matrix value, std::initializer_list<Tensor> inputs,
                      std::function<void(Node&)> backward) {
  Tensor out(std::move(value));
  if (no_grad_depth > 0) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  auto n = out.node();
  n->requires_grad = true;
  n->leaf = false;
  for (const auto& t : inputs) n->parents.push_back(t.node());
  n->backward = std::move(backward);
  return out;
}

inline Tensor make_op(Matrix value, const std::vector<Tensor>& inputs,
                      std::function<void(Node&)> backward) {
  Tensor out(std::move(value));
  if (no_grad_depth > 0) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  auto n = out.node();
  n->requires_grad = true;
  n->leaf = false;
  for (const auto& t : inputs) n->parents.push_back(t.node());
  n->backward = std::move(backward);
  return out;
}

inline bool wants(const Node& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw UsageError(std::string(op) + ": shape mismatch");
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw UsageError("matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  return detail::make_op(std::move(out), {a, b}, [](detail::Node& self) {
    const Matrix& A = self.parents[0]->value;
    const Matrix& B = self.parents[1]->value;
    if (detail::wants(self, 0)) self.parents[0]->accumulate(self.grad * B.transpose());
    if (detail::wants(self, 1)) self.parents[1]->accumulate(A.transpose() * self.grad);
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  return detail::make_op(a.value() + b.value(), {a, b}, [](detail::Node& self) {
    for (std::size_t i = 0; i < 2; ++i)
      if (detail::wants(self, i)) self.parents[i]->accumulate(self.grad);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  return detail::make_op(a.value() - b.value(), {a, b}, [](detail::Node& self) {
    if (detail::wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (detail::wants(self, 1)) self.parents[1]->accumulate(-self.grad);
  });
}

// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  return detail::make_op(a.value().cwiseProduct(b.value()), {a, b},
                         [](detail::Node& self) {
                           const Matrix& A = self.parents[0]->value;
                           const Matrix& B = self.parents[1]->value;
                           if (detail::wants(self, 0))
                             self.parents[0]->accumulate(self.grad.cwiseProduct(B));
                           if (detail::wants(self, 1))
                             self.parents[1]->accumulate(self.grad.cwiseProduct(A));
                         });
}

// a (r x n) + row (1 x n), broadcast over rows.
inline Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw UsageError("add_row: bias must be 1 x cols");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return detail::make_op(std::move(out), {a, row}, [](detail::Node& self) {
    if (detail::wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (detail::wants(self, 1)) self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

// a (r x n) + col (r x 1), broadcast over columns.
inline Tensor add_col(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows())
    throw UsageError("add_col: operand must be rows x 1");
  Matrix out = a.value().colwise() + col.value().col(0);
  return detail::make_op(std::move(out), {a, col}, [](detail::Node& self) {
    if (detail::wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (detail::wants(self, 1)) self.parents[1]->accumulate(self.grad.rowwise().sum());
  });
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::make_op(a.value() * s, {a}, [s](detail::Node& self) {
    self.parents[0]->accumulate(self.grad * s);
  });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  Matrix out = a.value().array() + s;
  return detail::make_op(std::move(out), {a}, [](detail::Node& self) {
    self.parents[0]->accumulate(self.grad);
  });
}

// Elementwise product with a constant matrix.
inline Tensor mul_const(const Tensor& a, const Matrix& m) {
  if (m.rows() != a.rows() || m.cols() != a.cols())
    throw UsageError("mul_const: shape mismatch");
  return detail::make_op(a.value().cwiseProduct(m), {a}, [m](detail::Node& self) {
    self.parents[0]->accumulate(self.grad.cwiseProduct(m));
  });
}

inline Tensor sigmoid(const Tensor& a) {
  Matrix y = (1.0 + (-a.value().array()).exp()).inverse().matrix();
  return detail::make_op(y, {a}, [y](detail::Node& self) {
    self.parents[0]->accumulate(
        (self.grad.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

inline Tensor tanh(const Tensor& a) {
  Matrix y = a.value().array().tanh().matrix();
  return detail::make_op(y, {a}, [y](detail::Node& self) {
    self.parents[0]->accumulate(
        (self.grad.array() * (1.0 - y.array().square())).matrix());
  });
}

inline Tensor relu(const Tensor& a) {
  Matrix y = a.value().cwiseMax(0.0);
  return detail::make_op(y, {a}, [](detail::Node& self) {
    const Matrix& x = self.parents[0]->value;
    self.parents[0]->accumulate(
        (x.array() > 0.0).select(self.grad.array(), 0.0).matrix());
  });
}

inline Tensor square(const Tensor& a) {
  return detail::make_op(a.value().array().square().matrix(), {a},
                         [](detail::Node& self) {
                           const Matrix& x = self.parents[0]->value;
                           self.parents[0]->accumulate(
                               (2.0 * self.grad.array() * x.array()).matrix());
                         });
}

// x log x with the 0 log 0 = 0 convention; zero entries pass no gradient.
inline Tensor xlogx(const Tensor& a) {
  const Matrix& x = a.value();
  Matrix y = (x.array() > 0.0).select(x.array() * x.array().max(1e-300).log(), 0.0).matrix();
  return detail::make_op(std::move(y), {a}, [](detail::Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix d = (x.array() > 0.0)
                   .select(self.grad.array() * (x.array().max(1e-300).log() + 1.0), 0.0)
                   .matrix();
    self.parents[0]->accumulate(d);
  });
}

inline Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  Index r = a.rows(), c = a.cols();
  return detail::make_op(std::move(out), {a}, [r, c](detail::Node& self) {
    self.parents[0]->accumulate(Matrix::Constant(r, c, self.grad(0, 0)));
  });
}

inline Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

// r x n -> r x 1.
inline Tensor row_sum(const Tensor& a) {
  Matrix out = a.value().rowwise().sum();
  Index c = a.cols();
  return detail::make_op(std::move(out), {a}, [c](detail::Node& self) {
    self.parents[0]->accumulate(self.grad.replicate(1, c));
  });
}

inline Tensor row_mean(const Tensor& a) {
  return scale(row_sum(a), 1.0 / static_cast<double>(a.cols()));
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  Index rows = parts[0].rows(), cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw UsageError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  return detail::make_op(std::move(out), parts, [offsets](detail::Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (!detail::wants(self, i)) continue;
      self.parents[i]->accumulate(
          self.grad.middleCols(offsets[i], self.parents[i]->value.cols()));
    }
  });
}

inline Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw UsageError("slice_cols: out of range");
  Matrix out = a.value().middleCols(start, count);
  Index r = a.rows(), c = a.cols();
  return detail::make_op(std::move(out), {a}, [=](detail::Node& self) {
    Matrix g = Matrix::Zero(r, c);
    g.middleCols(start, count) = self.grad;
    self.parents[0]->accumulate(g);
  });
}

// out(i, 0) = a(i, index[i]).
inline Tensor gather_cols(const Tensor& a, const std::vector<int>& index) {
  if (static_cast<Index>(index.size()) != a.rows())
    throw UsageError("gather_cols: one index per row");
  Matrix out(a.rows(), 1);
  for (Index i = 0; i < a.rows(); ++i) {
    if (index[i] < 0 || index[i] >= a.cols()) throw UsageError("gather_cols: bad index");
    out(i, 0) = a.value()(i, index[i]);
  }
  Index r = a.rows(), c = a.cols();
  return detail::make_op(std::move(out), {a}, [=](detail::Node& self) {
    Matrix g = Matrix::Zero(r, c);
    for (Index i = 0; i < r; ++i) g(i, index[i]) = self.grad(i, 0);
    self.parents[0]->accumulate(g);
  });
}

inline Tensor softmax_rows(const Tensor& a) {
  Matrix y = a.value();
  for (Index i = 0; i < y.rows(); ++i) {
    double m = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return detail::make_op(y, {a}, [y](detail::Node& self) {
    Matrix gy = self.grad.cwiseProduct(y);
    Eigen::VectorXd dots = gy.rowwise().sum();
    Matrix g = gy - (y.array().colwise() * dots.array()).matrix();
    self.parents[0]->accumulate(g);
  });
}

// mask * a + (1 - mask) * b with a constant per-row mask (r x 1).
inline Tensor select_rows(const Matrix& mask, const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "select_rows");
  if (mask.rows() != a.rows() || mask.cols() != 1)
    throw UsageError("select_rows: mask must be rows x 1");
  Matrix keep = mask.replicate(1, a.cols());
  Matrix drop = (1.0 - keep.array()).matrix();
  return add(mul_const(a, keep), mul_const(b, drop));
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }

}  // namespace cheaptalk::nn
