#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "voxlift/core/tensor.hpp"

namespace voxlift::core {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor make_node(Shape shape, DType dtype, std::vector<Tensor> parents,
                 std::function<void(Node&)> backward_fn) {
  Tensor out = Tensor::zeros(std::move(shape), dtype, false);
  bool needs_graph = false;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p.defined() && p.requires_grad()) {
        needs_graph = true;
        break;
      }
  }
  if (needs_graph) {
    out.node()->requires_grad = true;
    out.node()->parents = std::move(parents);
    out.node()->backward_fn = std::move(backward_fn);
  }
  return out;
}

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1)
    throw std::invalid_argument("backward requires a scalar root");
  if (!root.requires_grad()) return;

  // Post-order DFS; reverse gives a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].node();
      if (parent && parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad();
  if (root.dtype() == DType::kF32)
    root.node()->grad_f32[0] += 1.0f;
  else
    root.node()->grad_f64[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->grad_allocated()) node->backward_fn(*node);
  }
}

double grad_check(const std::function<Tensor(const Tensor&)>& fn,
                  const Tensor& x, double eps) {
  if (x.dtype() != DType::kF64)
    throw std::invalid_argument("grad_check runs in f64 mode");

  Tensor probe = x.clone(true);
  Tensor y = fn(probe);
  if (y.numel() != 1)
    throw std::invalid_argument("grad_check expects a scalar-valued fn");
  if (!std::isfinite(y.item())) return INFINITY;
  backward(y);
  std::vector<double> analytic(static_cast<size_t>(x.numel()), 0.0);
  if (probe.has_grad()) {
    Tensor g = probe.grad();
    for (std::int64_t i = 0; i < x.numel(); ++i)
      analytic[static_cast<size_t>(i)] = g.at(i);
  }

  NoGradGuard no_grad;
  Tensor work = x.clone(false);
  double worst = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double v = work.at(i);
    work.set(i, v + eps);
    const double fp = fn(work).item();
    work.set(i, v - eps);
    const double fm = fn(work).item();
    work.set(i, v);
    if (!std::isfinite(fp) || !std::isfinite(fm)) return INFINITY;
    const double fd = (fp - fm) / (2.0 * eps);
    const double a = analytic[static_cast<size_t>(i)];
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
    worst = std::max(worst, std::abs(a - fd) / denom);
  }
  return worst;
}

}  // namespace voxlift::core
