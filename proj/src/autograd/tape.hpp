#pragma once

// Minimal reverse-mode differentiation over dense double matrices.
//
// Every op allocates a node holding its value and, when any input requires a
// gradient, a closure that pushes the output gradient back to its inputs.
// Graphs are rebuilt per forward pass; parameters are long-lived leaf nodes
// whose gradients accumulate until zero_grad().

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace b4g::ag {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  // Only meaningful on leaves; mutating an interior node invalidates the graph.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }

  void zero_grad();
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  friend Var make_op(Matrix value, std::vector<Var> inputs,
                     std::function<void(Node&)> backward);
  std::shared_ptr<Node> node_;
};

inline Var constant(Matrix value) { return Var(std::move(value), false); }
inline Var parameter(Matrix value) { return Var(std::move(value), true); }

// Builds an op node. The backward closure runs only when the node carries a
// gradient; inputs that do not require gradients are skipped by accumulate().
Var make_op(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward);
void accumulate(Node& target, const Matrix& gradient);

// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every reachable
// node that requires a gradient.
void backward(const Var& root);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);  // broadcast a 1xC row over rows
Var mul(const Var& a, const Var& b);        // elementwise
Var scale(const Var& a, double factor);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var gelu(const Var& a);  // erf form
Var transpose(const Var& a);
Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& a, std::span<const Eigen::Index> rows);
Var mean_rows(const Var& a);  // 1xC
Var sum_all(const Var& a);    // 1x1
Var sum_squares(const Var& a);
Var sqrt(const Var& scalar);
Var add_scalars(std::span<const Var> scalars);
// Euclidean norm over the concatenation of all entries of all tensors.
Var global_l2_norm(std::span<const Var> tensors);
// -log softmax(logits)[label] for a 1xC row, computed via log-sum-exp.
Var cross_entropy(const Var& logits, Eigen::Index label);

}  // namespace b4g::ag
