#include "voxlift/core/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace voxlift::core {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void Node::ensure_grad() {
  if (grad_allocated()) return;
  if (dtype == DType::kF32)
    grad_f32.assign(static_cast<size_t>(numel()), 0.0f);
  else
    grad_f64.assign(static_cast<size_t>(numel()), 0.0);
}

namespace {

NodePtr alloc_node(Shape shape, DType dtype) {
  for (auto d : shape)
    if (d <= 0) throw std::invalid_argument("tensor extents must be positive");
  auto node = std::make_shared<Node>();
  node->dtype = dtype;
  const auto n = static_cast<size_t>(shape_numel(shape));
  node->shape = std::move(shape);
  if (dtype == DType::kF32)
    node->data_f32.assign(n, 0.0f);
  else
    node->data_f64.assign(n, 0.0);
  return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, DType dtype, bool requires_grad) {
  auto node = alloc_node(std::move(shape), dtype);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

Tensor Tensor::full(Shape shape, double value, DType dtype,
                    bool requires_grad) {
  Tensor t = zeros(std::move(shape), dtype, requires_grad);
  const auto n = static_cast<size_t>(t.numel());
  if (dtype == DType::kF32)
    for (size_t i = 0; i < n; ++i) t.f32()[i] = static_cast<float>(value);
  else
    for (size_t i = 0; i < n; ++i) t.f64()[i] = value;
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) {
  return full({}, value, dtype, false);
}

Tensor Tensor::from_values(Shape shape, const std::vector<double>& values,
                           DType dtype, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("from_values: size mismatch for shape " +
                                shape_str(shape));
  Tensor t = zeros(std::move(shape), dtype, requires_grad);
  for (size_t i = 0; i < values.size(); ++i)
    t.set(static_cast<std::int64_t>(i), values[i]);
  return t;
}

Tensor Tensor::uniform(Shape shape, util::Rng& rng, double lo, double hi,
                       DType dtype, bool requires_grad) {
  Tensor t = zeros(std::move(shape), dtype, requires_grad);
  const auto n = t.numel();
  for (std::int64_t i = 0; i < n; ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

Tensor Tensor::normal(Shape shape, util::Rng& rng, double mean, double stddev,
                      DType dtype, bool requires_grad) {
  Tensor t = zeros(std::move(shape), dtype, requires_grad);
  const auto n = t.numel();
  for (std::int64_t i = 0; i < n; ++i) t.set(i, rng.normal(mean, stddev));
  return t;
}

void Tensor::set_requires_grad(bool value) {
  if (value && node_->backward_fn)
    throw std::invalid_argument("requires_grad is a leaf property");
  node_->requires_grad = value;
}

double Tensor::at(std::int64_t i) const {
  return node_->dtype == DType::kF32 ? static_cast<double>(f32()[i]) : f64()[i];
}

void Tensor::set(std::int64_t i, double value) {
  if (node_->dtype == DType::kF32)
    node_->data_f32[static_cast<size_t>(i)] = static_cast<float>(value);
  else
    node_->data_f64[static_cast<size_t>(i)] = value;
}

double Tensor::item() const {
  if (numel() != 1)
    throw std::invalid_argument("item() requires a single-element tensor, got " +
                                shape_str(shape()));
  return at(0);
}

Tensor Tensor::grad() const {
  if (!node_ || !node_->grad_allocated()) return Tensor();
  Tensor g = zeros(node_->shape, node_->dtype, false);
  if (node_->dtype == DType::kF32)
    g.node()->data_f32 = node_->grad_f32;
  else
    g.node()->data_f64 = node_->grad_f64;
  return g;
}

void Tensor::zero_grad() {
  node_->grad_f32.clear();
  node_->grad_f64.clear();
}

Tensor Tensor::detach() const { return clone(false); }

Tensor Tensor::clone(bool requires_grad) const {
  Tensor t = zeros(node_->shape, node_->dtype, requires_grad);
  t.node()->data_f32 = node_->data_f32;
  t.node()->data_f64 = node_->data_f64;
  return t;
}

Tensor Tensor::cast(DType dtype) const {
  if (dtype == node_->dtype) return clone(false);
  Tensor t = zeros(node_->shape, dtype, false);
  const auto n = numel();
  for (std::int64_t i = 0; i < n; ++i) t.set(i, at(i));
  return t;
}

}  // namespace voxlift::core
