#include "autograd/tape.hpp"

#include <cmath>
#include <unordered_set>

#include "common/error.hpp"

namespace b4g::ag {

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_) node_->grad.resize(0, 0);
}

Var make_op(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  Var out;
  out.node_ = std::make_shared<Node>();
  out.node_->value = std::move(value);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    out.node_->requires_grad = true;
    out.node_->parents.reserve(inputs.size());
    for (auto& in : inputs) out.node_->parents.push_back(in.node());
    out.node_->backward = std::move(backward);
  }
  return out;
}

void accumulate(Node& target, const Matrix& gradient) {
  if (!target.requires_grad) return;
  if (target.grad.size() == 0) {
    target.grad = gradient;
  } else {
    target.grad += gradient;
  }
}

void backward(const Var& root) {
  if (!root.defined() || root.rows() != 1 || root.cols() != 1)
    fail(ErrorKind::shape, "backward() needs a 1x1 root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS yields a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node& top = *root.node();
  accumulate(top, Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(ErrorKind::shape, std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                               "x" + std::to_string(a.cols()) + " vs " +
                               std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows())
    fail(ErrorKind::shape, "matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                               std::to_string(b.rows()) + " differ");
  return make_op(a.value() * b.value(), {a, b}, [](Node& self) {
    Node& x = *self.parents[0];
    Node& y = *self.parents[1];
    if (x.requires_grad) accumulate(x, self.grad * y.value.transpose());
    if (y.requires_grad) accumulate(y, x.value.transpose() * self.grad);
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], -self.grad);
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    fail(ErrorKind::shape, "add_row: bias must be 1x" + std::to_string(a.cols()));
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(out), {a, row}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    if (self.parents[1]->requires_grad)
      accumulate(*self.parents[1], self.grad.colwise().sum());
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    Node& x = *self.parents[0];
    Node& y = *self.parents[1];
    if (x.requires_grad) accumulate(x, self.grad.cwiseProduct(y.value));
    if (y.requires_grad) accumulate(y, self.grad.cwiseProduct(x.value));
  });
}

Var scale(const Var& a, double factor) {
  return make_op(a.value() * factor, {a}, [factor](Node& self) {
    accumulate(*self.parents[0], self.grad * factor);
  });
}

Var relu(const Var& a) {
  return make_op(a.value().cwiseMax(0.0), {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    accumulate(*self.parents[0], (x.array() > 0.0).cast<double>().matrix().cwiseProduct(self.grad));
  });
}

Var sigmoid(const Var& a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make_op(std::move(out), {a}, [](Node& self) {
    const auto s = self.value.array();
    accumulate(*self.parents[0], (self.grad.array() * s * (1.0 - s)).matrix());
  });
}

Var tanh(const Var& a) {
  return make_op(a.value().array().tanh().matrix(), {a}, [](Node& self) {
    const auto t = self.value.array();
    accumulate(*self.parents[0], (self.grad.array() * (1.0 - t * t)).matrix());
  });
}

Var gelu(const Var& a) {
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); });
  return make_op(std::move(out), {a}, [](Node& self) {
    const Matrix& in = self.parents[0]->value;
    Matrix d = in.unaryExpr([](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
      const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
      return cdf + v * pdf;
    });
    accumulate(*self.parents[0], d.cwiseProduct(self.grad));
  });
}

Var transpose(const Var& a) {
  return make_op(a.value().transpose(), {a}, [](Node& self) {
    accumulate(*self.parents[0], self.grad.transpose());
  });
}

Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return make_op(std::move(out), {a}, [](Node& self) {
    const Matrix& y = self.value;
    Eigen::VectorXd dots = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix d = y.cwiseProduct(self.grad.colwise() - dots);
    accumulate(*self.parents[0], d);
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 || beta.cols() != x.cols())
    fail(ErrorKind::shape, "layer_norm_rows: gamma/beta must be 1x" + std::to_string(x.cols()));
  const Matrix& in = x.value();
  const Eigen::Index cols = in.cols();
  Eigen::VectorXd mean = in.rowwise().mean();
  Matrix centered = in.colwise() - mean;
  Eigen::VectorXd inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(cols)) + eps).rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return make_op(std::move(out), {x, gamma, beta},
                 [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                   Node& xn = *self.parents[0];
                   Node& g = *self.parents[1];
                   Node& b = *self.parents[2];
                   if (g.requires_grad) accumulate(g, self.grad.cwiseProduct(xhat).colwise().sum());
                   if (b.requires_grad) accumulate(b, self.grad.colwise().sum());
                   if (xn.requires_grad) {
                     Matrix dxhat = self.grad.array().rowwise() * g.value.row(0).array();
                     Eigen::VectorXd m1 = dxhat.rowwise().mean();
                     Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
                     Matrix dx = (dxhat.colwise() - m1) - (xhat.array().colwise() * m2.array()).matrix();
                     dx = dx.array().colwise() * inv_std.array();
                     accumulate(xn, dx);
                   }
                 });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorKind::shape, "concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) fail(ErrorKind::shape, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> widths;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    widths.push_back(p.cols());
    at += p.cols();
  }
  return make_op(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                 [widths = std::move(widths)](Node& self) {
                   Eigen::Index at = 0;
                   for (std::size_t i = 0; i < widths.size(); ++i) {
                     if (self.parents[i]->requires_grad)
                       accumulate(*self.parents[i], self.grad.middleCols(at, widths[i]));
                     at += widths[i];
                   }
                 });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorKind::shape, "concat_rows: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) fail(ErrorKind::shape, "concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> heights;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    heights.push_back(p.rows());
    at += p.rows();
  }
  return make_op(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                 [heights = std::move(heights)](Node& self) {
                   Eigen::Index at = 0;
                   for (std::size_t i = 0; i < heights.size(); ++i) {
                     if (self.parents[i]->requires_grad)
                       accumulate(*self.parents[i], self.grad.middleRows(at, heights[i]));
                     at += heights[i];
                   }
                 });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    fail(ErrorKind::index, "slice_rows: range out of bounds");
  return make_op(a.value().middleRows(start, count), {a}, [start, count](Node& self) {
    Node& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleRows(start, count) = self.grad;
    accumulate(p, g);
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    fail(ErrorKind::index, "slice_cols: range out of bounds");
  return make_op(a.value().middleCols(start, count), {a}, [start, count](Node& self) {
    Node& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleCols(start, count) = self.grad;
    accumulate(p, g);
  });
}

Var gather_rows(const Var& a, std::span<const Eigen::Index> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) fail(ErrorKind::index, "gather_rows: row out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  return make_op(std::move(out), {a},
                 [idx = std::vector<Eigen::Index>(rows.begin(), rows.end())](Node& self) {
                   Node& p = *self.parents[0];
                   // Scatter in place; embedding tables are too large for a
                   // dense temporary per lookup.
                   if (p.grad.size() == 0) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
                   for (std::size_t i = 0; i < idx.size(); ++i)
                     p.grad.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
                 });
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) fail(ErrorKind::shape, "mean_rows: no rows");
  return make_op(a.value().colwise().mean(), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    const double inv = 1.0 / static_cast<double>(p.value.rows());
    accumulate(p, self.grad.replicate(p.value.rows(), 1) * inv);
  });
}

Var sum_all(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    accumulate(p, Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Var sum_squares(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    accumulate(p, p.value * (2.0 * self.grad(0, 0)));
  });
}

Var sqrt(const Var& s) {
  if (s.rows() != 1 || s.cols() != 1) fail(ErrorKind::shape, "sqrt: expects 1x1");
  Matrix out(1, 1);
  out(0, 0) = std::sqrt(s.scalar());
  return make_op(std::move(out), {s}, [](Node& self) {
    const double r = self.value(0, 0);
    Matrix g(1, 1);
    // d sqrt(x)/dx is unbounded at 0; treat the subgradient as 0 there.
    g(0, 0) = r > 0.0 ? self.grad(0, 0) * 0.5 / r : 0.0;
    accumulate(*self.parents[0], g);
  });
}

Var add_scalars(std::span<const Var> scalars) {
  Matrix out = Matrix::Zero(1, 1);
  for (const auto& s : scalars) {
    if (s.rows() != 1 || s.cols() != 1) fail(ErrorKind::shape, "add_scalars: expects 1x1 inputs");
    out(0, 0) += s.scalar();
  }
  return make_op(std::move(out), std::vector<Var>(scalars.begin(), scalars.end()), [](Node& self) {
    for (auto& p : self.parents) accumulate(*p, self.grad);
  });
}

Var global_l2_norm(std::span<const Var> tensors) {
  std::vector<Var> squares;
  squares.reserve(tensors.size());
  for (const auto& t : tensors) squares.push_back(sum_squares(t));
  return sqrt(add_scalars(squares));
}

Var cross_entropy(const Var& logits, Eigen::Index label) {
  if (logits.rows() != 1) fail(ErrorKind::shape, "cross_entropy: logits must be a single row");
  if (label < 0 || label >= logits.cols()) fail(ErrorKind::value, "cross_entropy: label out of range");
  const Eigen::RowVectorXd z = logits.value().row(0);
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  Matrix out(1, 1);
  out(0, 0) = lse - z(label);
  return make_op(std::move(out), {logits}, [label, lse](Node& self) {
    Node& p = *self.parents[0];
    Matrix g = (p.value.array() - lse).exp().matrix();
    g(0, label) -= 1.0;
    accumulate(p, g * self.grad(0, 0));
  });
}

}  // namespace b4g::ag
