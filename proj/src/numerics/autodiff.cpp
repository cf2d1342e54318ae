#include "rsfiqa/numerics/autodiff.hpp"

#include <unordered_set>
#include <utility>

#include "rsfiqa/error.hpp"

namespace rsfiqa {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (has_grad()) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_op(std::string_view name, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Var out;
  out.node_ = std::make_shared<detail::Node>();
  out.node_->value = std::move(value);
  out.node_->op = name;
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const Var& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->inputs.reserve(inputs.size());
  for (Var& in : inputs) out.node_->inputs.push_back(in.node());
  out.node_->backward = std::move(backward);
  return out;
}

ComputationTape ComputationTape::record(const Var& root) {
  ComputationTape tape;
  tape.root_ = root.node();
  if (!root.requires_grad()) return tape;

  // Iterative post-order DFS; post-order lists inputs before consumers.
  std::vector<std::shared_ptr<detail::Node>> post;
  std::unordered_set<const detail::Node*> seen{root.node().get()};
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      std::shared_ptr<detail::Node> child = node->inputs[next++];
      if (child->requires_grad && child->backward && seen.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
      continue;
    }
    if (node->backward) post.push_back(node);
    stack.pop_back();
  }
  tape.ops_.assign(post.rbegin(), post.rend());
  return tape;
}

std::vector<std::string_view> ComputationTape::op_names() const {
  std::vector<std::string_view> names;
  names.reserve(ops_.size());
  for (const auto& op : ops_) names.push_back(op->op);
  return names;
}

void ComputationTape::backward() {
  if (!root_ || !root_->requires_grad) return;
  if (root_->grad.empty()) {
    root_->grad = Tensor(root_->value.shape(), 1.0);
  } else {
    for (double& g : root_->grad.data()) g += 1.0;
  }
  std::vector<Tensor*> slots;
  for (const auto& op : ops_) {
    if (op->grad.empty()) continue;
    slots.clear();
    for (const auto& in : op->inputs) {
      if (!in->requires_grad) {
        slots.push_back(nullptr);
        continue;
      }
      if (in->grad.empty()) in->grad = Tensor(in->value.shape(), 0.0);
      slots.push_back(&in->grad);
    }
    op->backward(op->grad, slots);
  }
  for (const auto& op : ops_) {
    op->grad = Tensor();
    op->backward = nullptr;
    op->inputs.clear();
  }
}

void backward(const Var& loss) {
  if (!loss.defined() || loss.size() != 1) {
    fail(ErrorCode::NonScalarLoss,
         "backward() needs a scalar loss, got " +
             (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  ComputationTape::record(loss).backward();
}

}  // namespace rsfiqa
