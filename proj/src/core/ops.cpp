#include "voxlift/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "voxlift/kernels/kernels.hpp"

namespace voxlift::core {

namespace k = voxlift::kernels;

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_dtypes(const Tensor& a, const Tensor& b, const char* op) {
  require(a.dtype() == b.dtype(),
          std::string(op) + ": mixed f32/f64 operands are not supported");
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  Shape out(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const std::int64_t da = i < r - ra ? 1 : a[static_cast<size_t>(i - (r - ra))];
    const std::int64_t db = i < r - rb ? 1 : b[static_cast<size_t>(i - (r - rb))];
    require(da == db || da == 1 || db == 1,
            std::string(op) + ": shapes " + shape_str(a) + " and " +
                shape_str(b) + " do not broadcast");
    out[static_cast<size_t>(i)] = std::max(da, db);
  }
  return out;
}

// Per-output-dim element strides; 0 marks a broadcast dimension.
std::vector<std::int64_t> bcast_strides(const Shape& in, const Shape& out) {
  const int r = static_cast<int>(out.size());
  const int ri = static_cast<int>(in.size());
  std::vector<std::int64_t> strides(static_cast<size_t>(r), 0);
  std::int64_t acc = 1;
  for (int i = ri - 1; i >= 0; --i) {
    const int o = i + (r - ri);
    strides[static_cast<size_t>(o)] = (in[static_cast<size_t>(i)] == 1) ? 0 : acc;
    acc *= in[static_cast<size_t>(i)];
  }
  return strides;
}

// Visits every element of `shape`, passing (flat_out, off_a, off_b).
template <typename F>
void walk2(const Shape& shape, const std::vector<std::int64_t>& sa,
           const std::vector<std::int64_t>& sb, F&& f) {
  const int r = static_cast<int>(shape.size());
  const std::int64_t total = shape_numel(shape);
  std::vector<std::int64_t> idx(static_cast<size_t>(std::max(r, 1)), 0);
  std::int64_t oa = 0, ob = 0;
  for (std::int64_t flat = 0; flat < total; ++flat) {
    f(flat, oa, ob);
    for (int d = r - 1; d >= 0; --d) {
      idx[static_cast<size_t>(d)]++;
      oa += sa[static_cast<size_t>(d)];
      ob += sb[static_cast<size_t>(d)];
      if (idx[static_cast<size_t>(d)] < shape[static_cast<size_t>(d)]) break;
      oa -= sa[static_cast<size_t>(d)] * shape[static_cast<size_t>(d)];
      ob -= sb[static_cast<size_t>(d)] * shape[static_cast<size_t>(d)];
      idx[static_cast<size_t>(d)] = 0;
    }
  }
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// True when `in` equals the trailing dims of `out` (so it repeats as rows).
bool is_suffix(const Shape& in, const Shape& out) {
  if (in.size() > out.size()) return false;
  for (size_t i = 0; i < in.size(); ++i)
    if (in[in.size() - 1 - i] != out[out.size() - 1 - i]) return false;
  return true;
}

enum class BinKind { kAdd, kSub, kMul, kDiv };

template <typename T>
void bin_flat(BinKind kind, std::int64_t n, const T* a, const T* b, T* out) {
  switch (kind) {
    case BinKind::kAdd:
      k::ops<T>().add(static_cast<size_t>(n), a, b, out);
      break;
    case BinKind::kMul:
      k::ops<T>().mul(static_cast<size_t>(n), a, b, out);
      break;
    case BinKind::kSub:
      for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
      break;
    case BinKind::kDiv:
      for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
      break;
  }
}

template <typename T>
T bin_eval(BinKind kind, T a, T b) {
  switch (kind) {
    case BinKind::kAdd:
      return a + b;
    case BinKind::kSub:
      return a - b;
    case BinKind::kMul:
      return a * b;
    case BinKind::kDiv:
      return a / b;
  }
  return T(0);
}

template <typename T>
void binary_forward(BinKind kind, const Tensor& a, const Tensor& b,
                    Tensor& out) {
  const T* pa = a.node()->template data<T>();
  const T* pb = b.node()->template data<T>();
  T* po = out.node()->template data<T>();
  if (same_shape(a.shape(), b.shape())) {
    bin_flat(kind, out.numel(), pa, pb, po);
    return;
  }
  if (same_shape(a.shape(), out.shape()) && is_suffix(b.shape(), out.shape())) {
    const std::int64_t nb = b.numel();
    for (std::int64_t r = 0; r * nb < out.numel(); ++r)
      bin_flat(kind, nb, pa + r * nb, pb, po + r * nb);
    return;
  }
  if (same_shape(b.shape(), out.shape()) && is_suffix(a.shape(), out.shape())) {
    const std::int64_t na = a.numel();
    for (std::int64_t r = 0; r * na < out.numel(); ++r)
      for (std::int64_t i = 0; i < na; ++i)
        po[r * na + i] = bin_eval(kind, pa[i], pb[r * na + i]);
    return;
  }
  const auto sa = bcast_strides(a.shape(), out.shape());
  const auto sb = bcast_strides(b.shape(), out.shape());
  walk2(out.shape(), sa, sb, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
    po[o] = bin_eval(kind, pa[ia], pb[ib]);
  });
}

// dst_grad[off_target] += f(grad_out, other_operand) with broadcast reduce.
template <typename T, typename F>
void binary_backward_into(const Tensor& target, const Tensor& other,
                          Node& self, F&& contrib) {
  T* gt = target.node()->template grad<T>();
  const T* go = self.grad<T>();
  const T* po = other.node()->template data<T>();
  if (same_shape(target.shape(), self.shape) &&
      same_shape(other.shape(), self.shape)) {
    const std::int64_t n = self.numel();
    for (std::int64_t i = 0; i < n; ++i) gt[i] += contrib(go[i], po[i]);
    return;
  }
  const auto st = bcast_strides(target.shape(), self.shape);
  const auto so = bcast_strides(other.shape(), self.shape);
  walk2(self.shape, st, so, [&](std::int64_t o, std::int64_t it, std::int64_t io) {
    gt[it] += contrib(go[o], po[io]);
  });
}

template <typename T>
void unary_backward_scaled(const Tensor& target, Node& self,
                           const std::function<T(std::int64_t)>& factor) {
  T* gt = target.node()->template grad<T>();
  const T* go = self.grad<T>();
  const std::int64_t n = self.numel();
  for (std::int64_t i = 0; i < n; ++i) gt[i] += go[i] * factor(i);
}

Tensor binary_op(BinKind kind, const Tensor& a, const Tensor& b,
                 const char* name) {
  check_dtypes(a, b, name);
  Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  Tensor out = make_node(out_shape, a.dtype(), {a, b}, [kind, a, b](Node& self) {
    auto run = [&](auto tag) {
      using T = decltype(tag);
      switch (kind) {
        case BinKind::kAdd:
          if (a.requires_grad())
            binary_backward_into<T>(a, b, self, [](T g, T) { return g; });
          if (b.requires_grad())
            binary_backward_into<T>(b, a, self, [](T g, T) { return g; });
          break;
        case BinKind::kSub:
          if (a.requires_grad())
            binary_backward_into<T>(a, b, self, [](T g, T) { return g; });
          if (b.requires_grad())
            binary_backward_into<T>(b, a, self, [](T g, T) { return -g; });
          break;
        case BinKind::kMul:
          if (a.requires_grad())
            binary_backward_into<T>(a, b, self, [](T g, T o) { return g * o; });
          if (b.requires_grad())
            binary_backward_into<T>(b, a, self, [](T g, T o) { return g * o; });
          break;
        case BinKind::kDiv:
          if (a.requires_grad())
            binary_backward_into<T>(a, b, self, [](T g, T o) { return g / o; });
          if (b.requires_grad()) {
            // d(a/b)/db = -a/b^2; recompute from operands.
            T* gt = b.node()->template grad<T>();
            const T* go = self.grad<T>();
            const T* pa = a.node()->template data<T>();
            const T* pb = b.node()->template data<T>();
            const auto sa = bcast_strides(a.shape(), self.shape);
            const auto sb = bcast_strides(b.shape(), self.shape);
            walk2(self.shape, sa, sb,
                  [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                    gt[ib] -= go[o] * pa[ia] / (pb[ib] * pb[ib]);
                  });
          }
          break;
      }
    };
    if (self.dtype == DType::kF32)
      run(float{});
    else
      run(double{});
  });
  if (out.dtype() == DType::kF32)
    binary_forward<float>(kind, a, b, out);
  else
    binary_forward<double>(kind, a, b, out);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(BinKind::kAdd, a, b, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(BinKind::kSub, a, b, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(BinKind::kMul, a, b, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(BinKind::kDiv, a, b, "div"); }

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor add_scalar(const Tensor& a, double s) {
  Tensor out = make_node(a.shape(), a.dtype(), {a}, [a](Node& self) {
    if (!a.requires_grad()) return;
    if (self.dtype == DType::kF32) {
      k::ops<float>().axpy(static_cast<size_t>(self.numel()), 1.0f,
                           self.grad<float>(), a.node()->grad<float>());
    } else {
      k::ops<double>().axpy(static_cast<size_t>(self.numel()), 1.0,
                            self.grad<double>(), a.node()->grad<double>());
    }
  });
  const std::int64_t n = a.numel();
  if (a.dtype() == DType::kF32) {
    const float sv = static_cast<float>(s);
    for (std::int64_t i = 0; i < n; ++i) out.f32()[i] = a.f32()[i] + sv;
  } else {
    for (std::int64_t i = 0; i < n; ++i) out.f64()[i] = a.f64()[i] + s;
  }
  return out;
}

Tensor mul_scalar(const Tensor& a, double s) {
  Tensor out = make_node(a.shape(), a.dtype(), {a}, [a, s](Node& self) {
    if (!a.requires_grad()) return;
    if (self.dtype == DType::kF32) {
      k::ops<float>().axpy(static_cast<size_t>(self.numel()),
                           static_cast<float>(s), self.grad<float>(),
                           a.node()->grad<float>());
    } else {
      k::ops<double>().axpy(static_cast<size_t>(self.numel()), s,
                            self.grad<double>(), a.node()->grad<double>());
    }
  });
  if (a.dtype() == DType::kF32)
    k::ops<float>().scale(static_cast<size_t>(a.numel()),
                          static_cast<float>(s), a.f32(), out.f32());
  else
    k::ops<double>().scale(static_cast<size_t>(a.numel()), s, a.f64(),
                           out.f64());
  return out;
}

// --- unary transcendentals --------------------------------------------------

namespace {

template <typename T>
void sigmoid_buf(std::int64_t n, const T* x, T* y) {
  if constexpr (sizeof(T) == sizeof(float)) {
    std::vector<float> t(static_cast<size_t>(n));
    k::ops<float>().scale(static_cast<size_t>(n), -1.0f,
                          reinterpret_cast<const float*>(x), t.data());
    k::ops<float>().exp(static_cast<size_t>(n), t.data(), t.data());
    for (std::int64_t i = 0; i < n; ++i)
      reinterpret_cast<float*>(y)[i] = 1.0f / (1.0f + t[static_cast<size_t>(i)]);
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      const double v = reinterpret_cast<const double*>(x)[i];
      reinterpret_cast<double*>(y)[i] =
          v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                 : std::exp(v) / (1.0 + std::exp(v));
    }
  }
}

}  // namespace

Tensor exp(const Tensor& a) {
  Tensor out = make_node(a.shape(), a.dtype(), {a}, [a](Node& self) {
    if (!a.requires_grad()) return;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T* y = self.data<T>();
      unary_backward_scaled<T>(a, self, [y](std::int64_t i) { return y[i]; });
    };
    self.dtype == DType::kF32 ? run(float{}) : run(double{});
  });
  if (a.dtype() == DType::kF32)
    k::ops<float>().exp(static_cast<size_t>(a.numel()), a.f32(), out.f32());
  else
    k::ops<double>().exp(static_cast<size_t>(a.numel()), a.f64(), out.f64());
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out = make_node(a.shape(), a.dtype(), {a}, [a](Node& self) {
    if (!a.requires_grad()) return;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T* x = a.node()->template data<T>();
      unary_backward_scaled<T>(a, self,
                               [x](std::int64_t i) { return T(1) / x[i]; });
    };
    self.dtype == DType::kF32 ? run(float{}) : run(double{});
  });
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) out.set(i, std::log(a.at(i)));
  return out;
}

Tensor sqrt(const Tensor& a) {
  Tensor out = make_node(a.shape(), a.dtype(), {a}, [a](Node& self) {
    if (!a.requires_grad()) return;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T* y = self.data<T>();
      unary_backward_scaled<T>(
          a, self, [y](std::int64_t i) { return T(0.5) / y[i]; });
    };
    self.dtype == DType::kF32 ? run(float{}) : run(double{});
  });
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) out.set(i, std::sqrt(a.at(i)));
  return out;
}

Tensor pow_scalar(const Tensor& a, double exponent) {
  Tensor out = make_node(a.shape(), a.dtype(), {a}, [a, exponent](Node& self) {
    if (!a.requires_grad()) return;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T* x = a.node()->template data<T>();
      const T p = static_cast<T>(exponent);
      unary_backward_scaled<T>(a, self, [x, p](std::int64_t i) {
        return p * std::pow(x[i], p - T(1));
      });
    };
    self.dtype == DType::kF32 ? run(float{}) : run(double{});
  });
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) out.set(i, std::pow(a.at(i), exponent));
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = make_node(a.shape(), a.dtype(), {a}, [a](Node& self) {
    if (!a.requires_grad()) return;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T* y = self.data<T>();
      unary_backward_scaled<T>(
          a, self, [y](std::int64_t i) { return y[i] * (T(1) - y[i]); });
    };
    self.dtype == DType::kF32 ? run(float{}) : run(double{});
  });
  if (a.dtype() == DType::kF32)
    sigmoid_buf<float>(a.numel(), a.f32(), out.f32());
  else
    sigmoid_buf<double>(a.numel(), a.f64(), out.f64());
  return out;
}

Tensor softplus(const Tensor& a) {
  Tensor out = make_node(a.shape(), a.dtype(), {a}, [a](Node& self) {
    if (!a.requires_grad()) return;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const std::int64_t n = self.numel();
      std::vector<T> sig(static_cast<size_t>(n));
      sigmoid_buf<T>(n, a.node()->template data<T>(), sig.data());
      unary_backward_scaled<T>(
          a, self, [&sig](std::int64_t i) { return sig[static_cast<size_t>(i)]; });
    };
    self.dtype == DType::kF32 ? run(float{}) : run(double{});
  });
  const std::int64_t n = a.numel();
  if (a.dtype() == DType::kF32) {
    // softplus(x) = max(x,0) + log1p(exp(-|x|))
    std::vector<float> t(static_cast<size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
      t[static_cast<size_t>(i)] = -std::abs(a.f32()[i]);
    k::ops<float>().exp(static_cast<size_t>(n), t.data(), t.data());
    for (std::int64_t i = 0; i < n; ++i)
      out.f32()[i] = std::max(a.f32()[i], 0.0f) +
                     std::log1p(t[static_cast<size_t>(i)]);
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      const double x = a.f64()[i];
      out.f64()[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    }
  }
  return out;
}

Tensor tanh(const Tensor& a) {
  Tensor out = make_node(a.shape(), a.dtype(), {a}, [a](Node& self) {
    if (!a.requires_grad()) return;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T* y = self.data<T>();
      unary_backward_scaled<T>(
          a, self, [y](std::int64_t i) { return T(1) - y[i] * y[i]; });
    };
    self.dtype == DType::kF32 ? run(float{}) : run(double{});
  });
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) out.set(i, std::tanh(a.at(i)));
  return out;
}

// --- reductions --------------------------------------------------------------

Tensor sum(const Tensor& a) {
  Tensor out = make_node({}, a.dtype(), {a}, [a](Node& self) {
    if (!a.requires_grad()) return;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T g = self.grad<T>()[0];
      T* gt = a.node()->template grad<T>();
      const std::int64_t n = a.numel();
      for (std::int64_t i = 0; i < n; ++i) gt[i] += g;
    };
    self.dtype == DType::kF32 ? run(float{}) : run(double{});
  });
  if (a.dtype() == DType::kF32)
    out.f32()[0] = k::ops<float>().sum(static_cast<size_t>(a.numel()), a.f32());
  else
    out.f64()[0] = k::ops<double>().sum(static_cast<size_t>(a.numel()), a.f64());
  return out;
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  return mul_scalar(sum(a), inv);
}

Tensor reduce_max(const Tensor& a) {
  std::int64_t arg = 0;
  const std::int64_t n = a.numel();
  double best = a.at(0);
  for (std::int64_t i = 1; i < n; ++i)
    if (a.at(i) > best) {
      best = a.at(i);
      arg = i;
    }
  Tensor out = make_node({}, a.dtype(), {a}, [a, arg](Node& self) {
    if (!a.requires_grad()) return;
    if (self.dtype == DType::kF32)
      a.node()->grad<float>()[arg] += self.grad<float>()[0];
    else
      a.node()->grad<double>()[arg] += self.grad<double>()[0];
  });
  out.set(0, best);
  return out;
}

// --- softmax / layer norm ----------------------------------------------------

namespace {

template <typename T>
void softmax_rows(std::int64_t rows, std::int64_t cols, const T* x, T* y) {
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    T* yr = y + r * cols;
    T m = xr[0];
    for (std::int64_t j = 1; j < cols; ++j) m = std::max(m, xr[j]);
    for (std::int64_t j = 0; j < cols; ++j) yr[j] = xr[j] - m;
    k::ops<T>().exp(static_cast<size_t>(cols), yr, yr);
    const T s = k::ops<T>().sum(static_cast<size_t>(cols), yr);
    const T invs = T(1) / s;
    k::ops<T>().scale(static_cast<size_t>(cols), invs, yr, yr);
  }
}

}  // namespace

Tensor softmax_last(const Tensor& a) {
  require(a.rank() >= 1, "softmax_last requires rank >= 1");
  const std::int64_t cols = a.dim(a.rank() - 1);
  const std::int64_t rows = a.numel() / cols;
  Tensor out = make_node(a.shape(), a.dtype(), {a}, [a, rows, cols](Node& self) {
    if (!a.requires_grad()) return;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T* y = self.data<T>();
      const T* gy = self.grad<T>();
      T* gx = a.node()->template grad<T>();
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* yr = y + r * cols;
        const T* gr = gy + r * cols;
        const T d = k::ops<T>().dot(static_cast<size_t>(cols), gr, yr);
        T* gxr = gx + r * cols;
        for (std::int64_t j = 0; j < cols; ++j)
          gxr[j] += yr[j] * (gr[j] - d);
      }
    };
    self.dtype == DType::kF32 ? run(float{}) : run(double{});
  });
  if (a.dtype() == DType::kF32)
    softmax_rows<float>(rows, cols, a.f32(), out.f32());
  else
    softmax_rows<double>(rows, cols, a.f64(), out.f64());
  return out;
}

Tensor layer_norm_last(const Tensor& a, double eps) {
  require(a.rank() >= 1, "layer_norm_last requires rank >= 1");
  const std::int64_t cols = a.dim(a.rank() - 1);
  const std::int64_t rows = a.numel() / cols;
  Tensor out =
      make_node(a.shape(), a.dtype(), {a}, [a, rows, cols, eps](Node& self) {
        if (!a.requires_grad()) return;
        auto run = [&](auto tag) {
          using T = decltype(tag);
          const T* x = a.node()->template data<T>();
          const T* y = self.data<T>();
          const T* gy = self.grad<T>();
          T* gx = a.node()->template grad<T>();
          for (std::int64_t r = 0; r < rows; ++r) {
            const T* xr = x + r * cols;
            const T* yr = y + r * cols;
            const T* gr = gy + r * cols;
            T mu = 0;
            for (std::int64_t j = 0; j < cols; ++j) mu += xr[j];
            mu /= static_cast<T>(cols);
            T var = 0;
            for (std::int64_t j = 0; j < cols; ++j)
              var += (xr[j] - mu) * (xr[j] - mu);
            var /= static_cast<T>(cols);
            const T inv_std = T(1) / std::sqrt(var + static_cast<T>(eps));
            T mean_g = 0, mean_gy = 0;
            for (std::int64_t j = 0; j < cols; ++j) {
              mean_g += gr[j];
              mean_gy += gr[j] * yr[j];
            }
            mean_g /= static_cast<T>(cols);
            mean_gy /= static_cast<T>(cols);
            T* gxr = gx + r * cols;
            for (std::int64_t j = 0; j < cols; ++j)
              gxr[j] += inv_std * (gr[j] - mean_g - yr[j] * mean_gy);
          }
        };
        self.dtype == DType::kF32 ? run(float{}) : run(double{});
      });
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    const T* x = a.node()->template data<T>();
    T* y = out.node()->template data<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* xr = x + r * cols;
      T* yr = y + r * cols;
      T mu = 0;
      for (std::int64_t j = 0; j < cols; ++j) mu += xr[j];
      mu /= static_cast<T>(cols);
      T var = 0;
      for (std::int64_t j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
      var /= static_cast<T>(cols);
      const T inv_std = T(1) / std::sqrt(var + static_cast<T>(eps));
      for (std::int64_t j = 0; j < cols; ++j) yr[j] = (xr[j] - mu) * inv_std;
    }
  };
  a.dtype() == DType::kF32 ? fwd(float{}) : fwd(double{});
  return out;
}

// --- matmul ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_dtypes(a, b, "matmul");
  require(a.rank() == 2 && b.rank() == 2, "matmul expects rank-2 tensors");
  require(a.dim(1) == b.dim(0), "matmul: inner dims differ, " +
                                    shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
  const std::int64_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
  Tensor out = make_node({m, n}, a.dtype(), {a, b}, [a, b, m, kk, n](Node& self) {
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T* g = self.grad<T>();
      if (a.requires_grad())  // dA = dC * B^T
        k::ops<T>().gemm_nt(static_cast<size_t>(m), static_cast<size_t>(kk),
                            static_cast<size_t>(n), g,
                            b.node()->template data<T>(),
                            a.node()->template grad<T>(), true);
      if (b.requires_grad())  // dB = A^T * dC
        k::ops<T>().gemm_tn(static_cast<size_t>(kk), static_cast<size_t>(n),
                            static_cast<size_t>(m),
                            a.node()->template data<T>(), g,
                            b.node()->template grad<T>(), true);
    };
    self.dtype == DType::kF32 ? run(float{}) : run(double{});
  });
  if (a.dtype() == DType::kF32)
    k::ops<float>().gemm_nn(static_cast<size_t>(m), static_cast<size_t>(n),
                            static_cast<size_t>(kk), a.f32(), b.f32(),
                            out.f32(), false);
  else
    k::ops<double>().gemm_nn(static_cast<size_t>(m), static_cast<size_t>(n),
                             static_cast<size_t>(kk), a.f64(), b.f64(),
                             out.f64(), false);
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  check_dtypes(a, b, "bmm");
  require(a.rank() == 3 && b.rank() == 3, "bmm expects rank-3 tensors");
  const std::int64_t bs = a.dim(0), m = a.dim(1), kk = a.dim(2);
  require(b.dim(0) == bs, "bmm: batch dims differ");
  const std::int64_t n = transpose_b ? b.dim(1) : b.dim(2);
  require((transpose_b ? b.dim(2) : b.dim(1)) == kk,
          "bmm: inner dims differ, " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()));
  Tensor out = make_node(
      {bs, m, n}, a.dtype(), {a, b},
      [a, b, bs, m, kk, n, transpose_b](Node& self) {
        auto run = [&](auto tag) {
          using T = decltype(tag);
          for (std::int64_t i = 0; i < bs; ++i) {
            const T* g = self.grad<T>() + i * m * n;
            const T* pa = a.node()->template data<T>() + i * m * kk;
            const T* pb = b.node()->template data<T>() + i * (transpose_b ? n * kk : kk * n);
            if (a.requires_grad()) {
              T* ga = a.node()->template grad<T>() + i * m * kk;
              if (!transpose_b)  // dA = dC * B^T, B is [k,n]
                k::ops<T>().gemm_nt(static_cast<size_t>(m), static_cast<size_t>(kk),
                                    static_cast<size_t>(n), g, pb, ga, true);
              else  // B is [n,k]; dA = dC * B
                k::ops<T>().gemm_nn(static_cast<size_t>(m), static_cast<size_t>(kk),
                                    static_cast<size_t>(n), g, pb, ga, true);
            }
            if (b.requires_grad()) {
              T* gb = b.node()->template grad<T>() + i * (transpose_b ? n * kk : kk * n);
              if (!transpose_b)  // dB = A^T * dC
                k::ops<T>().gemm_tn(static_cast<size_t>(kk), static_cast<size_t>(n),
                                    static_cast<size_t>(m), pa, g, gb, true);
              else  // dB = dC^T * A  ([n,m] x [m,k])
                k::ops<T>().gemm_tn(static_cast<size_t>(n), static_cast<size_t>(kk),
                                    static_cast<size_t>(m), g, pa, gb, true);
            }
          }
        };
        self.dtype == DType::kF32 ? run(float{}) : run(double{});
      });
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    for (std::int64_t i = 0; i < bs; ++i) {
      const T* pa = a.node()->template data<T>() + i * m * kk;
      const T* pb = b.node()->template data<T>() + i * (transpose_b ? n * kk : kk * n);
      T* po = out.node()->template data<T>() + i * m * n;
      if (transpose_b)
        k::ops<T>().gemm_nt(static_cast<size_t>(m), static_cast<size_t>(n),
                            static_cast<size_t>(kk), pa, pb, po, false);
      else
        k::ops<T>().gemm_nn(static_cast<size_t>(m), static_cast<size_t>(n),
                            static_cast<size_t>(kk), pa, pb, po, false);
    }
  };
  a.dtype() == DType::kF32 ? fwd(float{}) : fwd(double{});
  return out;
}

// --- shape ops ----------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_numel(shape) == a.numel(),
          "reshape: element count mismatch, " + shape_str(a.shape()) + " -> " +
              shape_str(shape));
  Tensor out = make_node(std::move(shape), a.dtype(), {a}, [a](Node& self) {
    if (!a.requires_grad()) return;
    if (self.dtype == DType::kF32)
      k::ops<float>().axpy(static_cast<size_t>(self.numel()), 1.0f,
                           self.grad<float>(), a.node()->grad<float>());
    else
      k::ops<double>().axpy(static_cast<size_t>(self.numel()), 1.0,
                            self.grad<double>(), a.node()->grad<double>());
  });
  out.node()->data_f32 = a.node()->data_f32;
  out.node()->data_f64 = a.node()->data_f64;
  return out;
}

Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const int r = a.rank();
  require(static_cast<int>(perm.size()) == r, "permute: rank mismatch");
  Shape out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[static_cast<size_t>(i)] = a.dim(perm[static_cast<size_t>(i)]);

  // strides of the input laid out along the output's dims
  std::vector<std::int64_t> in_strides(static_cast<size_t>(r), 1);
  {
    std::vector<std::int64_t> s(static_cast<size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i)
      s[static_cast<size_t>(i)] = s[static_cast<size_t>(i + 1)] * a.dim(i + 1);
    for (int i = 0; i < r; ++i)
      in_strides[static_cast<size_t>(i)] = s[static_cast<size_t>(perm[static_cast<size_t>(i)])];
  }
  const std::vector<std::int64_t> zero(static_cast<size_t>(r), 0);

  Tensor out = make_node(out_shape, a.dtype(), {a},
                         [a, out_shape, in_strides, zero](Node& self) {
                           if (!a.requires_grad()) return;
                           auto run = [&](auto tag) {
                             using T = decltype(tag);
                             const T* g = self.grad<T>();
                             T* ga = a.node()->template grad<T>();
                             walk2(out_shape, in_strides, zero,
                                   [&](std::int64_t o, std::int64_t ia, std::int64_t) {
                                     ga[ia] += g[o];
                                   });
                           };
                           self.dtype == DType::kF32 ? run(float{}) : run(double{});
                         });
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    const T* x = a.node()->template data<T>();
    T* y = out.node()->template data<T>();
    walk2(out_shape, in_strides, zero,
          [&](std::int64_t o, std::int64_t ia, std::int64_t) { y[o] = x[ia]; });
  };
  a.dtype() == DType::kF32 ? fwd(float{}) : fwd(double{});
  return out;
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  broadcast_shape(a.shape(), shape, "broadcast_to");  // validity
  require(broadcast_shape(a.shape(), shape, "broadcast_to") == shape,
          "broadcast_to: source does not broadcast to target");
  const auto sa = bcast_strides(a.shape(), shape);
  const std::vector<std::int64_t> zero(shape.size(), 0);
  Tensor out = make_node(shape, a.dtype(), {a}, [a, shape, sa, zero](Node& self) {
    if (!a.requires_grad()) return;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T* g = self.grad<T>();
      T* ga = a.node()->template grad<T>();
      walk2(shape, sa, zero, [&](std::int64_t o, std::int64_t ia, std::int64_t) {
        ga[ia] += g[o];
      });
    };
    self.dtype == DType::kF32 ? run(float{}) : run(double{});
  });
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    const T* x = a.node()->template data<T>();
    T* y = out.node()->template data<T>();
    walk2(shape, sa, zero,
          [&](std::int64_t o, std::int64_t ia, std::int64_t) { y[o] = x[ia]; });
  };
  a.dtype() == DType::kF32 ? fwd(float{}) : fwd(double{});
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  require(!parts.empty(), "concat: empty input");
  const int r = parts[0].rank();
  require(axis >= 0 && axis < r, "concat: bad axis");
  Shape out_shape = parts[0].shape();
  std::int64_t axis_total = 0;
  for (const auto& p : parts) {
    require(p.rank() == r && p.dtype() == parts[0].dtype(),
            "concat: inhomogeneous inputs");
    for (int d = 0; d < r; ++d)
      require(d == axis || p.dim(d) == out_shape[static_cast<size_t>(d)],
              "concat: shape mismatch off-axis");
    axis_total += p.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = axis_total;

  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[static_cast<size_t>(d)];
  for (int d = axis + 1; d < r; ++d) inner *= out_shape[static_cast<size_t>(d)];

  std::vector<Tensor> parents = parts;
  Tensor out = make_node(
      out_shape, parts[0].dtype(), parents,
      [parts, outer, inner, axis_total, axis](Node& self) {
        auto run = [&](auto tag) {
          using T = decltype(tag);
          const T* g = self.grad<T>();
          std::int64_t off = 0;
          for (const auto& p : parts) {
            const std::int64_t pa = p.dim(axis);
            if (p.requires_grad()) {
              T* gp = p.node()->template grad<T>();
              for (std::int64_t o = 0; o < outer; ++o) {
                const T* src = g + (o * axis_total + off) * inner;
                T* dst = gp + o * pa * inner;
                k::ops<T>().axpy(static_cast<size_t>(pa * inner), T(1), src, dst);
              }
            }
            off += pa;
          }
        };
        self.dtype == DType::kF32 ? run(float{}) : run(double{});
      });
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    T* y = out.node()->template data<T>();
    std::int64_t off = 0;
    for (const auto& p : parts) {
      const std::int64_t pa = p.dim(axis);
      const T* x = p.node()->template data<T>();
      for (std::int64_t o = 0; o < outer; ++o)
        std::memcpy(y + (o * axis_total + off) * inner, x + o * pa * inner,
                    static_cast<size_t>(pa * inner) * sizeof(T));
      off += pa;
    }
  };
  parts[0].dtype() == DType::kF32 ? fwd(float{}) : fwd(double{});
  return out;
}

Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t len) {
  const int r = a.rank();
  require(axis >= 0 && axis < r, "slice: bad axis");
  require(start >= 0 && len > 0 && start + len <= a.dim(axis),
          "slice: range out of bounds");
  Shape out_shape = a.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= a.dim(d);
  for (int d = axis + 1; d < r; ++d) inner *= a.dim(d);
  const std::int64_t da = a.dim(axis);

  Tensor out = make_node(out_shape, a.dtype(), {a},
                         [a, outer, inner, da, start, len](Node& self) {
                           if (!a.requires_grad()) return;
                           auto run = [&](auto tag) {
                             using T = decltype(tag);
                             const T* g = self.grad<T>();
                             T* ga = a.node()->template grad<T>();
                             for (std::int64_t o = 0; o < outer; ++o)
                               k::ops<T>().axpy(static_cast<size_t>(len * inner), T(1),
                                                g + o * len * inner,
                                                ga + (o * da + start) * inner);
                           };
                           self.dtype == DType::kF32 ? run(float{}) : run(double{});
                         });
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    const T* x = a.node()->template data<T>();
    T* y = out.node()->template data<T>();
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(y + o * len * inner, x + (o * da + start) * inner,
                  static_cast<size_t>(len * inner) * sizeof(T));
  };
  a.dtype() == DType::kF32 ? fwd(float{}) : fwd(double{});
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<std::int64_t>& index) {
  require(a.rank() >= 1, "gather_rows requires rank >= 1");
  const std::int64_t rows = a.dim(0);
  const std::int64_t rsz = a.numel() / rows;
  for (auto i : index)
    require(i >= 0 && i < rows, "gather_rows: index out of range");
  Shape out_shape = a.shape();
  out_shape[0] = static_cast<std::int64_t>(index.size());
  Tensor out = make_node(out_shape, a.dtype(), {a}, [a, index, rsz](Node& self) {
    if (!a.requires_grad()) return;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T* g = self.grad<T>();
      T* ga = a.node()->template grad<T>();
      for (size_t i = 0; i < index.size(); ++i)
        k::ops<T>().axpy(static_cast<size_t>(rsz), T(1),
                         g + static_cast<std::int64_t>(i) * rsz,
                         ga + index[i] * rsz);
    };
    self.dtype == DType::kF32 ? run(float{}) : run(double{});
  });
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    const T* x = a.node()->template data<T>();
    T* y = out.node()->template data<T>();
    for (size_t i = 0; i < index.size(); ++i)
      std::memcpy(y + static_cast<std::int64_t>(i) * rsz, x + index[i] * rsz,
                  static_cast<size_t>(rsz) * sizeof(T));
  };
  a.dtype() == DType::kF32 ? fwd(float{}) : fwd(double{});
  return out;
}

Tensor scatter_rows_add(const Tensor& src,
                        const std::vector<std::int64_t>& index,
                        std::int64_t out_rows) {
  require(src.rank() >= 1, "scatter_rows_add requires rank >= 1");
  require(static_cast<std::int64_t>(index.size()) == src.dim(0),
          "scatter_rows_add: one index per source row");
  const std::int64_t rsz = src.numel() / src.dim(0);
  for (auto i : index)
    require(i >= 0 && i < out_rows, "scatter_rows_add: index out of range");
  Shape out_shape = src.shape();
  out_shape[0] = out_rows;
  Tensor out = make_node(out_shape, src.dtype(), {src}, [src, index, rsz](Node& self) {
    if (!src.requires_grad()) return;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T* g = self.grad<T>();
      T* gs = src.node()->template grad<T>();
      for (size_t i = 0; i < index.size(); ++i)
        k::ops<T>().axpy(static_cast<size_t>(rsz), T(1), g + index[i] * rsz,
                         gs + static_cast<std::int64_t>(i) * rsz);
    };
    self.dtype == DType::kF32 ? run(float{}) : run(double{});
  });
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    const T* x = src.node()->template data<T>();
    T* y = out.node()->template data<T>();
    for (size_t i = 0; i < index.size(); ++i)
      k::ops<T>().axpy(static_cast<size_t>(rsz), T(1),
                       x + static_cast<std::int64_t>(i) * rsz, y + index[i] * rsz);
  };
  src.dtype() == DType::kF32 ? fwd(float{}) : fwd(double{});
  return out;
}

// --- convolution ---------------------------------------------------------------

namespace {

// im2col for channel-last same-padding stride-1 convs; `dims` spatial extents.
template <typename T, int ND>
void im2col(const T* x, const std::int64_t* dims, std::int64_t cin,
            const std::int64_t* ksz, T* col) {
  std::int64_t spatial = 1;
  for (int d = 0; d < ND; ++d) spatial *= dims[d];
  std::int64_t patch = cin;
  for (int d = 0; d < ND; ++d) patch *= ksz[d];

  std::int64_t pos_idx[ND] = {0};
  for (std::int64_t p = 0; p < spatial; ++p) {
    T* row = col + p * patch;
    std::int64_t off_idx[ND] = {0};
    std::int64_t kcount = 1;
    for (int d = 0; d < ND; ++d) kcount *= ksz[d];
    for (std::int64_t kk = 0; kk < kcount; ++kk) {
      bool inside = true;
      std::int64_t src = 0;
      for (int d = 0; d < ND; ++d) {
        const std::int64_t c = pos_idx[d] + off_idx[d] - ksz[d] / 2;
        if (c < 0 || c >= dims[d]) {
          inside = false;
          break;
        }
        src = src * dims[d] + c;
      }
      T* dst = row + kk * cin;
      if (inside)
        std::memcpy(dst, x + src * cin, static_cast<size_t>(cin) * sizeof(T));
      else
        std::memset(dst, 0, static_cast<size_t>(cin) * sizeof(T));
      for (int d = ND - 1; d >= 0; --d) {
        if (++off_idx[d] < ksz[d]) break;
        off_idx[d] = 0;
      }
    }
    for (int d = ND - 1; d >= 0; --d) {
      if (++pos_idx[d] < dims[d]) break;
      pos_idx[d] = 0;
    }
  }
}

// Adjoint of im2col: scatter col rows back into the (gradient of the) image.
template <typename T, int ND>
void col2im_add(const T* col, const std::int64_t* dims, std::int64_t cin,
                const std::int64_t* ksz, T* gx) {
  std::int64_t spatial = 1;
  for (int d = 0; d < ND; ++d) spatial *= dims[d];
  std::int64_t kcount = 1;
  for (int d = 0; d < ND; ++d) kcount *= ksz[d];
  const std::int64_t patch = kcount * cin;

  std::int64_t pos_idx[ND] = {0};
  for (std::int64_t p = 0; p < spatial; ++p) {
    const T* row = col + p * patch;
    std::int64_t off_idx[ND] = {0};
    for (std::int64_t kk = 0; kk < kcount; ++kk) {
      bool inside = true;
      std::int64_t src = 0;
      for (int d = 0; d < ND; ++d) {
        const std::int64_t c = pos_idx[d] + off_idx[d] - ksz[d] / 2;
        if (c < 0 || c >= dims[d]) {
          inside = false;
          break;
        }
        src = src * dims[d] + c;
      }
      if (inside)
        k::ops<T>().axpy(static_cast<size_t>(cin), T(1), row + kk * cin,
                         gx + src * cin);
      for (int d = ND - 1; d >= 0; --d) {
        if (++off_idx[d] < ksz[d]) break;
        off_idx[d] = 0;
      }
    }
    for (int d = ND - 1; d >= 0; --d) {
      if (++pos_idx[d] < dims[d]) break;
      pos_idx[d] = 0;
    }
  }
}

template <int ND>
Tensor conv_nd(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require(x.rank() == ND + 1, "conv: input rank mismatch");
  require(kernel.rank() == ND + 2, "conv: kernel rank mismatch");
  check_dtypes(x, kernel, "conv");
  std::int64_t dims[ND], ksz[ND];
  for (int d = 0; d < ND; ++d) {
    dims[d] = x.dim(d);
    ksz[d] = kernel.dim(d);
    require(ksz[d] % 2 == 1, "conv: kernel extents must be odd");
  }
  const std::int64_t cin = x.dim(ND);
  require(kernel.dim(ND) == cin, "conv: channel mismatch");
  const std::int64_t cout = kernel.dim(ND + 1);
  require(!bias.defined() || (bias.rank() == 1 && bias.dim(0) == cout),
          "conv: bias shape mismatch");

  std::int64_t spatial = 1, kcount = 1;
  for (int d = 0; d < ND; ++d) {
    spatial *= dims[d];
    kcount *= ksz[d];
  }
  const std::int64_t patch = kcount * cin;

  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(ND)] = cout;

  std::vector<std::int64_t> dims_v(dims, dims + ND), ksz_v(ksz, ksz + ND);
  std::vector<Tensor> parents = {x, kernel};
  if (bias.defined()) parents.push_back(bias);
  Tensor out = make_node(
      out_shape, x.dtype(), parents,
      [x, kernel, bias, dims_v, ksz_v, cin, cout, spatial, patch](Node& self) {
        auto run = [&](auto tag) {
          using T = decltype(tag);
          const T* g = self.grad<T>();
          if (bias.defined() && bias.requires_grad()) {
            T* gb = bias.node()->template grad<T>();
            for (std::int64_t p = 0; p < spatial; ++p)
              k::ops<T>().axpy(static_cast<size_t>(cout), T(1), g + p * cout, gb);
          }
          if (kernel.requires_grad() || x.requires_grad()) {
            if (kernel.requires_grad()) {
              // dW = col^T * dY; col recomputed from the saved input.
              std::vector<T> col(static_cast<size_t>(spatial * patch));
              im2col<T, ND>(x.node()->template data<T>(), dims_v.data(), cin,
                            ksz_v.data(), col.data());
              k::ops<T>().gemm_tn(static_cast<size_t>(patch),
                                  static_cast<size_t>(cout),
                                  static_cast<size_t>(spatial), col.data(), g,
                                  kernel.node()->template grad<T>(), true);
            }
            if (x.requires_grad()) {
              // dcol = dY * W^T, then scatter back.
              std::vector<T> dcol(static_cast<size_t>(spatial * patch));
              k::ops<T>().gemm_nt(static_cast<size_t>(spatial),
                                  static_cast<size_t>(patch),
                                  static_cast<size_t>(cout), g,
                                  kernel.node()->template data<T>(),
                                  dcol.data(), false);
              col2im_add<T, ND>(dcol.data(), dims_v.data(), cin, ksz_v.data(),
                                x.node()->template grad<T>());
            }
          }
        };
        self.dtype == DType::kF32 ? run(float{}) : run(double{});
      });
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> col(static_cast<size_t>(spatial * patch));
    im2col<T, ND>(x.node()->template data<T>(), dims_v.data(), cin, ksz_v.data(),
                  col.data());
    T* y = out.node()->template data<T>();
    k::ops<T>().gemm_nn(static_cast<size_t>(spatial), static_cast<size_t>(cout),
                        static_cast<size_t>(patch), col.data(),
                        kernel.node()->template data<T>(), y, false);
    if (bias.defined()) {
      const T* b = bias.node()->template data<T>();
      for (std::int64_t p = 0; p < spatial; ++p)
        k::ops<T>().axpy(static_cast<size_t>(cout), T(1), b, y + p * cout);
    }
  };
  x.dtype() == DType::kF32 ? fwd(float{}) : fwd(double{});
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  return conv_nd<2>(x, kernel, bias);
}

Tensor conv3d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  return conv_nd<3>(x, kernel, bias);
}

Tensor upsample_nearest3d(const Tensor& x, int factor) {
  require(x.rank() == 4, "upsample_nearest3d expects [H,W,D,C]");
  require(factor >= 1, "upsample factor must be >= 1");
  const std::int64_t H = x.dim(0), W = x.dim(1), D = x.dim(2), C = x.dim(3);
  const std::int64_t f = factor;
  Shape out_shape = {H * f, W * f, D * f, C};
  Tensor out = make_node(out_shape, x.dtype(), {x}, [x, H, W, D, C, f](Node& self) {
    if (!x.requires_grad()) return;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T* g = self.grad<T>();
      T* gx = x.node()->template grad<T>();
      const std::int64_t Wf = W * f, Df = D * f;
      for (std::int64_t i = 0; i < H * f; ++i)
        for (std::int64_t j = 0; j < Wf; ++j)
          for (std::int64_t l = 0; l < Df; ++l)
            k::ops<T>().axpy(static_cast<size_t>(C), T(1),
                             g + ((i * Wf + j) * Df + l) * C,
                             gx + (((i / f) * W + j / f) * D + l / f) * C);
    };
    self.dtype == DType::kF32 ? run(float{}) : run(double{});
  });
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    const T* src = x.node()->template data<T>();
    T* y = out.node()->template data<T>();
    const std::int64_t Wf = W * f, Df = D * f;
    for (std::int64_t i = 0; i < H * f; ++i)
      for (std::int64_t j = 0; j < Wf; ++j)
        for (std::int64_t l = 0; l < Df; ++l)
          std::memcpy(y + ((i * Wf + j) * Df + l) * C,
                      src + (((i / f) * W + j / f) * D + l / f) * C,
                      static_cast<size_t>(C) * sizeof(T));
  };
  x.dtype() == DType::kF32 ? fwd(float{}) : fwd(double{});
  return out;
}

// --- grid sampling ---------------------------------------------------------------

namespace {

// align-corners mapping of u in [-1,1] onto [0, n-1], clamped.
template <typename T>
inline void grid_coord(T u, std::int64_t n, std::int64_t& i0, T& w1) {
  if (n == 1) {
    i0 = 0;
    w1 = 0;
    return;
  }
  T c = (u + T(1)) * T(0.5) * static_cast<T>(n - 1);
  c = std::min(std::max(c, T(0)), static_cast<T>(n - 1));
  i0 = static_cast<std::int64_t>(c);
  if (i0 > n - 2) i0 = n - 2;
  w1 = c - static_cast<T>(i0);
}

}  // namespace

Tensor bilinear_sample(const Tensor& grid, const Tensor& points) {
  require(grid.rank() == 3, "bilinear_sample expects grid [H,W,C]");
  require(points.rank() == 2 && points.dim(1) == 2,
          "bilinear_sample expects points [n,2]");
  check_dtypes(grid, points, "bilinear_sample");
  require(!points.requires_grad(),
          "bilinear_sample: gradients w.r.t. points are unsupported");
  const std::int64_t H = grid.dim(0), W = grid.dim(1), C = grid.dim(2);
  const std::int64_t n = points.dim(0);
  Tensor out = make_node({n, C}, grid.dtype(), {grid, points},
                         [grid, points, H, W, C, n](Node& self) {
                           if (!grid.requires_grad()) return;
                           auto run = [&](auto tag) {
                             using T = decltype(tag);
                             const T* g = self.grad<T>();
                             const T* pts = points.node()->template data<T>();
                             T* gg = grid.node()->template grad<T>();
                             for (std::int64_t p = 0; p < n; ++p) {
                               std::int64_t i0, j0;
                               T wi, wj;
                               grid_coord(pts[p * 2 + 0], H, i0, wi);
                               grid_coord(pts[p * 2 + 1], W, j0, wj);
                               const std::int64_t i1 = std::min(i0 + 1, H - 1);
                               const std::int64_t j1 = std::min(j0 + 1, W - 1);
                               const T w00 = (1 - wi) * (1 - wj), w01 = (1 - wi) * wj;
                               const T w10 = wi * (1 - wj), w11 = wi * wj;
                               const T* gr = g + p * C;
                               k::ops<T>().axpy(static_cast<size_t>(C), w00, gr, gg + (i0 * W + j0) * C);
                               k::ops<T>().axpy(static_cast<size_t>(C), w01, gr, gg + (i0 * W + j1) * C);
                               k::ops<T>().axpy(static_cast<size_t>(C), w10, gr, gg + (i1 * W + j0) * C);
                               k::ops<T>().axpy(static_cast<size_t>(C), w11, gr, gg + (i1 * W + j1) * C);
                             }
                           };
                           self.dtype == DType::kF32 ? run(float{}) : run(double{});
                         });
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    const T* gsrc = grid.node()->template data<T>();
    const T* pts = points.node()->template data<T>();
    T* y = out.node()->template data<T>();
    for (std::int64_t p = 0; p < n; ++p) {
      std::int64_t i0, j0;
      T wi, wj;
      grid_coord(pts[p * 2 + 0], H, i0, wi);
      grid_coord(pts[p * 2 + 1], W, j0, wj);
      const std::int64_t i1 = std::min(i0 + 1, H - 1);
      const std::int64_t j1 = std::min(j0 + 1, W - 1);
      const T w00 = (1 - wi) * (1 - wj), w01 = (1 - wi) * wj;
      const T w10 = wi * (1 - wj), w11 = wi * wj;
      T* yr = y + p * C;
      for (std::int64_t c = 0; c < C; ++c)
        yr[c] = w00 * gsrc[(i0 * W + j0) * C + c] +
                w01 * gsrc[(i0 * W + j1) * C + c] +
                w10 * gsrc[(i1 * W + j0) * C + c] +
                w11 * gsrc[(i1 * W + j1) * C + c];
    }
  };
  grid.dtype() == DType::kF32 ? fwd(float{}) : fwd(double{});
  return out;
}

Tensor trilinear_sample(const Tensor& grid, const Tensor& points) {
  require(grid.rank() == 4, "trilinear_sample expects grid [H,W,D,C]");
  require(points.rank() == 2 && points.dim(1) == 3,
          "trilinear_sample expects points [n,3]");
  check_dtypes(grid, points, "trilinear_sample");
  require(!points.requires_grad(),
          "trilinear_sample: gradients w.r.t. points are unsupported");
  const std::int64_t H = grid.dim(0), W = grid.dim(1), D = grid.dim(2),
                     C = grid.dim(3);
  const std::int64_t n = points.dim(0);
  Tensor out = make_node(
      {n, C}, grid.dtype(), {grid, points},
      [grid, points, H, W, D, C, n](Node& self) {
        if (!grid.requires_grad()) return;
        auto run = [&](auto tag) {
          using T = decltype(tag);
          const T* g = self.grad<T>();
          const T* pts = points.node()->template data<T>();
          T* gg = grid.node()->template grad<T>();
          for (std::int64_t p = 0; p < n; ++p) {
            std::int64_t i0, j0, l0;
            T wi, wj, wl;
            grid_coord(pts[p * 3 + 0], H, i0, wi);
            grid_coord(pts[p * 3 + 1], W, j0, wj);
            grid_coord(pts[p * 3 + 2], D, l0, wl);
            const std::int64_t i1 = std::min(i0 + 1, H - 1);
            const std::int64_t j1 = std::min(j0 + 1, W - 1);
            const std::int64_t l1 = std::min(l0 + 1, D - 1);
            const T* gr = g + p * C;
            for (int corner = 0; corner < 8; ++corner) {
              const std::int64_t ii = (corner & 4) ? i1 : i0;
              const std::int64_t jj = (corner & 2) ? j1 : j0;
              const std::int64_t ll = (corner & 1) ? l1 : l0;
              const T w = ((corner & 4) ? wi : 1 - wi) *
                          ((corner & 2) ? wj : 1 - wj) *
                          ((corner & 1) ? wl : 1 - wl);
              k::ops<T>().axpy(static_cast<size_t>(C), w, gr,
                               gg + ((ii * W + jj) * D + ll) * C);
            }
          }
        };
        self.dtype == DType::kF32 ? run(float{}) : run(double{});
      });
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    const T* gsrc = grid.node()->template data<T>();
    const T* pts = points.node()->template data<T>();
    T* y = out.node()->template data<T>();
    for (std::int64_t p = 0; p < n; ++p) {
      std::int64_t i0, j0, l0;
      T wi, wj, wl;
      grid_coord(pts[p * 3 + 0], H, i0, wi);
      grid_coord(pts[p * 3 + 1], W, j0, wj);
      grid_coord(pts[p * 3 + 2], D, l0, wl);
      const std::int64_t i1 = std::min(i0 + 1, H - 1);
      const std::int64_t j1 = std::min(j0 + 1, W - 1);
      const std::int64_t l1 = std::min(l0 + 1, D - 1);
      T* yr = y + p * C;
      for (std::int64_t c = 0; c < C; ++c) yr[c] = 0;
      for (int corner = 0; corner < 8; ++corner) {
        const std::int64_t ii = (corner & 4) ? i1 : i0;
        const std::int64_t jj = (corner & 2) ? j1 : j0;
        const std::int64_t ll = (corner & 1) ? l1 : l0;
        const T w = ((corner & 4) ? wi : 1 - wi) * ((corner & 2) ? wj : 1 - wj) *
                    ((corner & 1) ? wl : 1 - wl);
        const T* src = gsrc + ((ii * W + jj) * D + ll) * C;
        for (std::int64_t c = 0; c < C; ++c) yr[c] += w * src[c];
      }
    }
  };
  grid.dtype() == DType::kF32 ? fwd(float{}) : fwd(double{});
  return out;
}

}  // namespace voxlift::core
