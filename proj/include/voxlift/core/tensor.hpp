#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "voxlift/util/rng.hpp"

namespace voxlift::core {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

// One value node of the recorded computation graph. Holds flat row-major
// data, the accumulated gradient (lazily allocated), and the closure that
// pushes this node's gradient into its parents.
struct Node {
  Shape shape;
  DType dtype = DType::kF32;
  bool requires_grad = false;

  std::vector<float> data_f32;
  std::vector<double> data_f64;
  std::vector<float> grad_f32;
  std::vector<double> grad_f64;

  std::vector<Tensor> parents;
  std::function<void(Node&)> backward_fn;

  std::int64_t numel() const { return shape_numel(shape); }

  template <typename T>
  T* data() {
    if constexpr (sizeof(T) == sizeof(float))
      return reinterpret_cast<T*>(data_f32.data());
    else
      return reinterpret_cast<T*>(data_f64.data());
  }
  template <typename T>
  const T* data() const {
    return const_cast<Node*>(this)->data<T>();
  }

  bool grad_allocated() const {
    return !grad_f32.empty() || !grad_f64.empty();
  }
  void ensure_grad();  // allocates zeros on first use
  template <typename T>
  T* grad() {
    ensure_grad();
    if constexpr (sizeof(T) == sizeof(float))
      return reinterpret_cast<T*>(grad_f32.data());
    else
      return reinterpret_cast<T*>(grad_f64.data());
  }
};

using NodePtr = std::shared_ptr<Node>;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::kF32,
                      bool requires_grad = false);
  static Tensor full(Shape shape, double value, DType dtype = DType::kF32,
                     bool requires_grad = false);
  static Tensor scalar(double value, DType dtype = DType::kF32);
  static Tensor from_values(Shape shape, const std::vector<double>& values,
                            DType dtype = DType::kF32,
                            bool requires_grad = false);
  static Tensor uniform(Shape shape, util::Rng& rng, double lo, double hi,
                        DType dtype = DType::kF32, bool requires_grad = false);
  static Tensor normal(Shape shape, util::Rng& rng, double mean, double stddev,
                       DType dtype = DType::kF32, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  std::int64_t numel() const { return node_->numel(); }
  DType dtype() const { return node_->dtype; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value);

  float* f32() { return node_->data_f32.data(); }
  const float* f32() const { return node_->data_f32.data(); }
  double* f64() { return node_->data_f64.data(); }
  const double* f64() const { return node_->data_f64.data(); }

  double at(std::int64_t i) const;
  void set(std::int64_t i, double value);
  double item() const;  // numel()==1

  // Gradient as a tensor aliasing nothing (copy); undefined if never set.
  Tensor grad() const;
  bool has_grad() const { return node_ && node_->grad_allocated(); }
  void zero_grad();

  Tensor detach() const;  // shares nothing with the graph: deep copy, leaf
  Tensor clone(bool requires_grad) const;
  Tensor cast(DType dtype) const;  // leaf copy, no gradient flow

  Node* node() const { return node_.get(); }
  const NodePtr& node_ptr() const { return node_; }

  static Tensor wrap(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  NodePtr node_;
};

// --- graph machinery -------------------------------------------------------

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Allocates the output node and, when gradients are enabled and some parent
// requires them, records parents + backward closure.
Tensor make_node(Shape shape, DType dtype, std::vector<Tensor> parents,
                 std::function<void(Node&)> backward_fn);

// Reverse-mode sweep from a scalar root. Gradients accumulate into every
// requires_grad leaf; call zero_grad between steps to reset.
void backward(const Tensor& root);

// Max relative error between analytic gradients of fn and central
// differences, |a - fd| / max(|a|,|fd|,1e-8). Inputs must be f64.
// Non-finite outputs yield +inf rather than throwing.
double grad_check(const std::function<Tensor(const Tensor&)>& fn,
                  const Tensor& x, double eps = 1e-4);

}  // namespace voxlift::core
