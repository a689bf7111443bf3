#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "voxlift/kernels/kernels.hpp"

namespace voxlift::kernels {

const OpsT<float>& scalar_table_f32();
const OpsT<double>& scalar_table_f64();

#if defined(__x86_64__) || defined(_M_X64)
const OpsT<float>& avx2_table_f32();
const OpsT<double>& avx2_table_f64();
#endif

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

Backend detect_backend() {
  if (const char* env = std::getenv("VOXLIFT_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::kScalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!cpu_supports_avx2())
        throw std::runtime_error("VOXLIFT_KERNELS=avx2 but CPU lacks AVX2+FMA");
      return Backend::kAvx2;
    }
  }
  return cpu_supports_avx2() ? Backend::kAvx2 : Backend::kScalar;
}

struct Dispatch {
  Backend backend;
  const OpsT<float>* f32;
  const OpsT<double>* f64;

  Dispatch() { select(detect_backend()); }

  void select(Backend b) {
    switch (b) {
      case Backend::kScalar:
        f32 = &scalar_table_f32();
        f64 = &scalar_table_f64();
        break;
      case Backend::kAvx2:
#if defined(__x86_64__) || defined(_M_X64)
        if (!cpu_supports_avx2())
          throw std::runtime_error("AVX2 backend requested on non-AVX2 CPU");
        f32 = &avx2_table_f32();
        f64 = &avx2_table_f64();
        break;
#else
        throw std::runtime_error("AVX2 backend unavailable on this platform");
#endif
    }
    backend = b;
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

Backend active_backend() { return dispatch().backend; }

void set_backend(Backend backend) { dispatch().select(backend); }

const char* backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
  }
  return "?";
}

const OpsT<float>& ops_f32() { return *dispatch().f32; }
const OpsT<double>& ops_f64() { return *dispatch().f64; }

const OpsT<float>& table_f32(Backend backend) {
#if defined(__x86_64__) || defined(_M_X64)
  if (backend == Backend::kAvx2) return avx2_table_f32();
#endif
  if (backend == Backend::kAvx2)
    throw std::runtime_error("AVX2 table unavailable on this platform");
  return scalar_table_f32();
}

const OpsT<double>& table_f64(Backend backend) {
#if defined(__x86_64__) || defined(_M_X64)
  if (backend == Backend::kAvx2) return avx2_table_f64();
#endif
  if (backend == Backend::kAvx2)
    throw std::runtime_error("AVX2 table unavailable on this platform");
  return scalar_table_f64();
}

}  // namespace voxlift::kernels
