#ifndef SLMW_NUMERIC_TENSOR_HPP
#define SLMW_NUMERIC_TENSOR_HPP

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "slmw/error.hpp"

namespace slmw::numeric {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

template <typename Scalar>
struct Node {
  MatrixX<Scalar> value;
  MatrixX<Scalar> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates the given output gradient into the parents' grad buffers.
  std::function<void(const MatrixX<Scalar>&)> backward;
};

template <typename Scalar, typename Expr>
void accumulate(Node<Scalar>& node, const Expr& delta) {
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = delta;
  } else {
    node.grad += delta;
  }
}

template <typename Scalar, typename Expr>
void accumulate_block(Node<Scalar>& node, Index row, Index col, const Expr& delta) {
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) node.grad = MatrixX<Scalar>::Zero(node.value.rows(), node.value.cols());
  node.grad.block(row, col, delta.rows(), delta.cols()) += delta;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Rank-2 dense tensor (scalars are 1x1, vectors 1xN) with an optional
/// gradient buffer and recorded history for reverse-mode differentiation.
///
/// Copies are shallow handles onto the same storage; use clone() for an
/// independent copy.
template <typename Scalar>
class BasicTensor {
 public:
  using Matrix = MatrixX<Scalar>;
  using NodeType = detail::Node<Scalar>;

  BasicTensor() : node_(std::make_shared<NodeType>()) {}

  explicit BasicTensor(Matrix value, bool requires_grad = false)
      : node_(std::make_shared<NodeType>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static BasicTensor zeros(Index rows, Index cols, bool requires_grad = false) {
    return BasicTensor(Matrix::Zero(rows, cols), requires_grad);
  }
  static BasicTensor constant(Index rows, Index cols, Scalar v, bool requires_grad = false) {
    return BasicTensor(Matrix::Constant(rows, cols, v), requires_grad);
  }
  static BasicTensor scalar(Scalar v, bool requires_grad = false) {
    return constant(1, 1, v, requires_grad);
  }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  std::vector<Index> shape() const { return {rows(), cols()}; }

  const Matrix& value() const { return node_->value; }
  /// In-place access for optimizers and initializers; never call while a
  /// recorded graph that reads this tensor is still to be differentiated.
  Matrix& mutable_value() { return node_->value; }

  Scalar item() const {
    if (size() != 1) throw Error(ErrorCode::kShapeMismatch, "item() needs a 1x1 tensor");
    return node_->value(0, 0);
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool is_leaf() const { return !node_->backward; }

  bool has_grad() const { return node_->grad.size() != 0; }
  /// Gradient buffer; zeros of the value's shape if nothing has accumulated.
  Matrix grad() const {
    return has_grad() ? node_->grad : Matrix::Zero(rows(), cols());
  }
  void zero_grad() { node_->grad.resize(0, 0); }

  BasicTensor clone() const { return BasicTensor(node_->value, node_->requires_grad); }
  BasicTensor detach() const { return BasicTensor(node_->value, false); }

  const std::shared_ptr<NodeType>& node() const { return node_; }

  /// Builds an op result; history is recorded only when grad mode is on and
  /// some input requires a gradient.
  template <typename Backward>
  static BasicTensor make_result(Matrix value, std::initializer_list<BasicTensor> inputs,
                                 Backward&& backward) {
    std::vector<std::shared_ptr<NodeType>> parents;
    for (const auto& t : inputs) parents.push_back(t.node_);
    return make_result(std::move(value), std::move(parents), std::forward<Backward>(backward));
  }

  template <typename Backward>
  static BasicTensor make_result(Matrix value, std::vector<std::shared_ptr<NodeType>> parents,
                                 Backward&& backward) {
    BasicTensor out(std::move(value));
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->parents = std::move(parents);
    out.node_->backward = std::forward<Backward>(backward);
    return out;
  }

 private:
  std::shared_ptr<NodeType> node_;
};

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls until zero_grad(); intermediate gradients are recomputed each call.
template <typename Scalar>
void backward(const BasicTensor<Scalar>& loss) {
  using NodePtr = detail::Node<Scalar>*;
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "backward needs a scalar (1x1) loss");
  }
  if (!loss.requires_grad()) {
    throw Error(ErrorCode::kInvalidArgument, "loss does not depend on any tensor requiring grad");
  }

  // iterative post-order DFS gives a topological order (parents first)
  std::vector<NodePtr> order;
  std::unordered_set<NodePtr> visited;
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodePtr parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodePtr node : order) {
    if (node->backward) node->grad.resize(0, 0);
  }
  detail::accumulate(*loss.node(), MatrixX<Scalar>::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodePtr node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(node->grad);
  }
}

}  // namespace slmw::numeric

#endif  // SLMW_NUMERIC_TENSOR_HPP
