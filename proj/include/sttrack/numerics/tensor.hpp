#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sttrack/numerics/errors.hpp"

namespace sttrack::num {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs that require grad.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major float64 tensor with optional reverse-mode recording.
//
// Handles share the underlying node; values produced by ops are treated as
// immutable. Only leaves (inputs, parameters) may be written through
// mutable_data().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Same values, no history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  // Identity of the underlying storage (for graph bookkeeping and tests).
  const detail::Node* id() const { return node_.get(); }

  // Op plumbing.
  // Wraps an op output; rejects non-finite values and records history when
  // any input requires grad.
  static Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Runs reverse-mode accumulation from a scalar loss. Leaf gradients add to
// whatever is already stored; callers zero them between steps.
void backward(const Tensor& loss);

// Throws NumericError naming `what` if any value is NaN/Inf.
void require_finite(std::span<const double> values, const char* what);

// Gradient recording can be disabled for inference-only forwards.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Branch signature: non-smooth ops (ReLU, max, floor in bilinear sampling,
// |x|, clamps) fold their branch decisions into a thread-local hash while
// tracking is on. Two evaluations with equal signatures took the same
// piecewise-smooth branch.
class BranchTracker {
 public:
  BranchTracker();
  ~BranchTracker();
  BranchTracker(const BranchTracker&) = delete;
  BranchTracker& operator=(const BranchTracker&) = delete;
  std::uint64_t signature() const;
  void reset();

 private:
  bool previous_;
};
bool branch_tracking();
void fold_branch(std::uint64_t bits);

}  // namespace sttrack::num
