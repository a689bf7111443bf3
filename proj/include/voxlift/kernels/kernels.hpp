#pragma once

#include <cstddef>

// Data-parallel inner loops used by the tensor library. Every entry point has
// a scalar reference implementation and (on x86-64) an AVX2 variant; the
// active table is chosen once at startup from CPUID, or forced via
// set_backend() / the VOXLIFT_KERNELS environment variable ("scalar"/"avx2").
//
// All matrices are dense row-major with contiguous rows.

namespace voxlift::kernels {

enum class Backend { kScalar, kAvx2 };

template <typename T>
struct OpsT {
  // c[m,n] = a[m,k] * b[k,n]            (+= c when accumulate)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const T* a,
                  const T* b, T* c, bool accumulate);
  // c[m,n] = a[m,k] * b[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const T* a,
                  const T* b, T* c, bool accumulate);
  // c[m,n] = a[k,m]^T * b[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const T* a,
                  const T* b, T* c, bool accumulate);
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);   // y += alpha*x
  void (*scale)(std::size_t n, T alpha, const T* x, T* y);  // y  = alpha*x
  void (*add)(std::size_t n, const T* a, const T* b, T* out);
  void (*mul)(std::size_t n, const T* a, const T* b, T* out);
  void (*exp)(std::size_t n, const T* x, T* out);
  T (*sum)(std::size_t n, const T* x);
  T (*dot)(std::size_t n, const T* a, const T* b);
};

bool cpu_supports_avx2();
Backend active_backend();
void set_backend(Backend backend);  // throws std::runtime_error if unsupported
const char* backend_name(Backend backend);

// Active dispatch tables.
const OpsT<float>& ops_f32();
const OpsT<double>& ops_f64();

template <typename T>
inline const OpsT<T>& ops() {
  if constexpr (sizeof(T) == sizeof(float)) {
    return reinterpret_cast<const OpsT<T>&>(ops_f32());
  } else {
    return reinterpret_cast<const OpsT<T>&>(ops_f64());
  }
}

// Fixed tables, independent of the active backend (equivalence tests).
const OpsT<float>& table_f32(Backend backend);
const OpsT<double>& table_f64(Backend backend);

}  // namespace voxlift::kernels
