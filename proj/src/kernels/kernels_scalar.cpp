#include <cmath>
#include <cstring>

#include "voxlift/kernels/kernels.hpp"

// Reference implementations. Plain loops, no explicit vectorization; these
// define the semantics the SIMD variants are tested against.

namespace voxlift::kernels {
namespace {

template <typename T>
void gemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k, const T* a,
                    const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate) std::memset(crow, 0, n * sizeof(T));
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt_scalar(std::size_t m, std::size_t n, std::size_t k, const T* a,
                    const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      if (accumulate)
        c[i * n + j] += acc;
      else
        c[i * n + j] = acc;
    }
  }
}

template <typename T>
void gemm_tn_scalar(std::size_t m, std::size_t n, std::size_t k, const T* a,
                    const T* b, T* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(T));
  for (std::size_t p = 0; p < k; ++p) {
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = a[p * m + i];
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void axpy_scalar(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale_scalar(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

template <typename T>
void add_scalar(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul_scalar(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void exp_scalar(std::size_t n, const T* x, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

template <typename T>
T sum_scalar(std::size_t n, const T* x) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <typename T>
T dot_scalar(std::size_t n, const T* a, const T* b) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
constexpr OpsT<T> make_scalar_table() {
  return OpsT<T>{gemm_nn_scalar<T>, gemm_nt_scalar<T>, gemm_tn_scalar<T>,
                 axpy_scalar<T>,    scale_scalar<T>,   add_scalar<T>,
                 mul_scalar<T>,     exp_scalar<T>,     sum_scalar<T>,
                 dot_scalar<T>};
}

}  // namespace

const OpsT<float>& scalar_table_f32() {
  static const OpsT<float> table = make_scalar_table<float>();
  return table;
}

const OpsT<double>& scalar_table_f64() {
  static const OpsT<double> table = make_scalar_table<double>();
  return table;
}

}  // namespace voxlift::kernels
