#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace isd {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

namespace detail {

// One vertex of the reverse-mode graph. `backprop` reads `grad` of the node
// it belongs to and accumulates into the grads of `inputs`; it never captures
// the node itself, so graphs hold no reference cycles.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;
};

}  // namespace detail

/// Dense row-major float64 array with optional reverse-mode graph linkage.
///
/// `Tensor` is a handle: copies share storage, which is how a parameter
/// leaf and the graphs built from it see the same gradient buffer. Rank is
/// 1 or 2; a rank-1 tensor of length d acts as a single row (1 x d) in
/// row-wise operations. Scalars have shape {1}.
///
/// Leaves with `requires_grad == false` (teacher parameters, anchor
/// snapshots, detached copies) never enter the graph: operations whose
/// inputs are all such leaves produce plain values with no linkage.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Row-major matrix from nested rows; all rows must have equal length.
  static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  /// Row count when viewed as a matrix (1 for rank-1 tensors).
  std::size_t rows() const;
  /// Column count when viewed as a matrix.
  std::size_t cols() const;

  std::span<const double> values() const;
  /// Writable view of the values. Only valid on leaves.
  std::span<double> mutable_values();
  std::span<const double> grad() const;
  std::span<double> mutable_grad();

  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  /// Marks a leaf trainable or not. Throws ContractError on non-leaves.
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  /// True when the tensor was produced by a differentiable operation.
  bool has_graph() const;

  /// Fresh leaf holding a copy of the values, with no graph linkage.
  Tensor detach() const;
  /// Deep copy of a leaf, keeping or replacing its trainable flag.
  Tensor clone(bool requires_grad) const;

  void zero_grad();

  /// Reverse-mode sweep from this scalar. Every reachable node's gradient is
  /// overwritten with d(this)/d(node).
  void backward() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Graph construction helper used by the operation implementations.
  static Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backprop);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node);
  std::shared_ptr<detail::Node> node_;
};

// Differentiable operations. Shape errors raise DimensionError.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
/// Adds a length-c bias to every row of an r x c matrix.
Tensor add_row(const Tensor& a, const Tensor& bias);
Tensor relu(const Tensor& a);
/// Elementwise natural log; non-positive entries raise NumericDomainError.
Tensor log(const Tensor& a);
/// Row-wise v / max(|v|_2, eps).
Tensor l2_normalize(const Tensor& a, double eps = 1e-12);
/// Row-wise softmax with max subtraction. Non-finite input raises NumericDomainError.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sum of each row, shape {rows, 1}.
Tensor row_sum(const Tensor& a);
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Same values under a new shape with equal element count.
Tensor reshape(const Tensor& a, Shape shape);

/// Largest relative error between analytic and central-difference gradients
/// over every entry of `params`: |a - n| / max(|a|, |n|, 1e-8).
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double step);

}  // namespace isd
