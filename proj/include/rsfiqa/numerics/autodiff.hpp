#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "rsfiqa/numerics/tensor.hpp"

namespace rsfiqa {

// Receives the gradient flowing into an op's output and accumulates into the
// gradient buffers of its inputs. Entries are nullptr for inputs that do not
// require a gradient.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> input_grads)>;

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};

}  // namespace detail

// Handle to a value in the differentiable graph. Copies share the node, so a
// parameter Var can be held by a model and by an optimizer at the same time.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var parameter(Tensor value) { return Var(std::move(value), true); }
  static Var constant(Tensor value) { return Var(std::move(value), false); }

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  // Zero-filled tensor of the value's shape when nothing has been accumulated.
  Tensor grad() const;
  void zero_grad();

  std::string_view op() const { return node_->op; }
  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }

 private:
  friend Var make_op(std::string_view, Tensor, std::vector<Var>, BackwardFn);
  std::shared_ptr<detail::Node> node_;
};

// Builds an op result. Records the op only when grad mode is on and at least
// one input requires a gradient; otherwise the result is a plain constant.
Var make_op(std::string_view name, Tensor value, std::vector<Var> inputs, BackwardFn backward);

bool grad_enabled() noexcept;

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Ops reachable from a root, ordered so that every op appears after all of
// the ops that consume its output (reverse topological order of execution).
class ComputationTape {
 public:
  static ComputationTape record(const Var& root);

  std::size_t size() const noexcept { return ops_.size(); }
  std::vector<std::string_view> op_names() const;

  // Seeds d(root)/d(root) = 1 and replays every op once. Intermediate
  // gradients and closures are released afterwards; leaf gradients
  // accumulate across calls until zero_grad().
  void backward();

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<std::shared_ptr<detail::Node>> ops_;
};

// Throws NonScalarLoss unless the loss holds exactly one element.
void backward(const Var& loss);

}  // namespace rsfiqa
