// AVX2+FMA variants of the kernel table. This translation unit is the only
// one compiled with -mavx2 -mfma; it is reached solely through the dispatch
// table after a CPUID check.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "voxlift/kernels/kernels.hpp"

namespace voxlift::kernels {
namespace {

inline float hsum8(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  return _mm_cvtss_f32(lo);
}

inline double hsum4(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  lo = _mm_add_sd(lo, _mm_unpackhi_pd(lo, lo));
  return _mm_cvtsd_f64(lo);
}

// ---------------------------------------------------------------------------
// f32 GEMM
// ---------------------------------------------------------------------------

// MR rows of A (stride k) times a 16-column strip of B; C rows stride n.
template <int MR>
inline void nn_tile16_f32(std::size_t k, std::size_t n, const float* a,
                          const float* b, float* c, bool accumulate) {
  __m256 acc0[MR], acc1[MR];
  for (int r = 0; r < MR; ++r) {
    if (accumulate) {
      acc0[r] = _mm256_loadu_ps(c + r * n);
      acc1[r] = _mm256_loadu_ps(c + r * n + 8);
    } else {
      acc0[r] = _mm256_setzero_ps();
      acc1[r] = _mm256_setzero_ps();
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b + p * n);
    const __m256 b1 = _mm256_loadu_ps(b + p * n + 8);
    for (int r = 0; r < MR; ++r) {
      const __m256 av = _mm256_set1_ps(a[r * k + p]);
      acc0[r] = _mm256_fmadd_ps(av, b0, acc0[r]);
      acc1[r] = _mm256_fmadd_ps(av, b1, acc1[r]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    _mm256_storeu_ps(c + r * n, acc0[r]);
    _mm256_storeu_ps(c + r * n + 8, acc1[r]);
  }
}

template <int MR>
inline void nn_tile8_f32(std::size_t k, std::size_t n, const float* a,
                         const float* b, float* c, bool accumulate) {
  __m256 acc[MR];
  for (int r = 0; r < MR; ++r)
    acc[r] = accumulate ? _mm256_loadu_ps(c + r * n) : _mm256_setzero_ps();
  for (std::size_t p = 0; p < k; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b + p * n);
    for (int r = 0; r < MR; ++r)
      acc[r] = _mm256_fmadd_ps(_mm256_set1_ps(a[r * k + p]), b0, acc[r]);
  }
  for (int r = 0; r < MR; ++r) _mm256_storeu_ps(c + r * n, acc[r]);
}

void gemm_nn_f32(std::size_t m, std::size_t n, std::size_t k, const float* a,
                 const float* b, float* c, bool accumulate) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4)
      nn_tile16_f32<4>(k, n, a + i * k, b + j, c + i * n + j, accumulate);
    for (; i < m; ++i)
      nn_tile16_f32<1>(k, n, a + i * k, b + j, c + i * n + j, accumulate);
  }
  for (; j + 8 <= n; j += 8) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4)
      nn_tile8_f32<4>(k, n, a + i * k, b + j, c + i * n + j, accumulate);
    for (; i < m; ++i)
      nn_tile8_f32<1>(k, n, a + i * k, b + j, c + i * n + j, accumulate);
  }
  if (j < n) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t jj = j; jj < n; ++jj) {
        float acc = accumulate ? c[i * n + jj] : 0.0f;
        for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + jj];
        c[i * n + jj] = acc;
      }
    }
  }
}

void gemm_nt_f32(std::size_t m, std::size_t n, std::size_t k, const float* a,
                 const float* b, float* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
      __m256 acc2 = _mm256_setzero_ps(), acc3 = _mm256_setzero_ps();
      const float* b0 = b + (j + 0) * k;
      const float* b1 = b + (j + 1) * k;
      const float* b2 = b + (j + 2) * k;
      const float* b3 = b + (j + 3) * k;
      std::size_t p = 0;
      for (; p + 8 <= k; p += 8) {
        const __m256 av = _mm256_loadu_ps(arow + p);
        acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + p), acc0);
        acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + p), acc1);
        acc2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + p), acc2);
        acc3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + p), acc3);
      }
      float s0 = hsum8(acc0), s1 = hsum8(acc1), s2 = hsum8(acc2),
            s3 = hsum8(acc3);
      for (; p < k; ++p) {
        s0 += arow[p] * b0[p];
        s1 += arow[p] * b1[p];
        s2 += arow[p] * b2[p];
        s3 += arow[p] * b3[p];
      }
      float* crow = c + i * n + j;
      if (accumulate) {
        crow[0] += s0;
        crow[1] += s1;
        crow[2] += s2;
        crow[3] += s3;
      } else {
        crow[0] = s0;
        crow[1] = s1;
        crow[2] = s2;
        crow[3] = s3;
      }
    }
    for (; j < n; ++j) {
      const float* brow = b + j * k;
      __m256 accv = _mm256_setzero_ps();
      std::size_t p = 0;
      for (; p + 8 <= k; p += 8)
        accv = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p),
                               _mm256_loadu_ps(brow + p), accv);
      float s = hsum8(accv);
      for (; p < k; ++p) s += arow[p] * brow[p];
      if (accumulate)
        c[i * n + j] += s;
      else
        c[i * n + j] = s;
    }
  }
}

void gemm_tn_f32(std::size_t m, std::size_t n, std::size_t k, const float* a,
                 const float* b, float* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(float));
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const float* b0 = b + (p + 0) * n;
    const float* b1 = b + (p + 1) * n;
    const float* b2 = b + (p + 2) * n;
    const float* b3 = b + (p + 3) * n;
    for (std::size_t i = 0; i < m; ++i) {
      const float s0 = a[(p + 0) * m + i], s1 = a[(p + 1) * m + i];
      const float s2 = a[(p + 2) * m + i], s3 = a[(p + 3) * m + i];
      const __m256 a0 = _mm256_set1_ps(s0);
      const __m256 a1 = _mm256_set1_ps(s1);
      const __m256 a2 = _mm256_set1_ps(s2);
      const __m256 a3 = _mm256_set1_ps(s3);
      float* crow = c + i * n;
      std::size_t j = 0;
      for (; j + 8 <= n; j += 8) {
        __m256 cv = _mm256_loadu_ps(crow + j);
        cv = _mm256_fmadd_ps(a0, _mm256_loadu_ps(b0 + j), cv);
        cv = _mm256_fmadd_ps(a1, _mm256_loadu_ps(b1 + j), cv);
        cv = _mm256_fmadd_ps(a2, _mm256_loadu_ps(b2 + j), cv);
        cv = _mm256_fmadd_ps(a3, _mm256_loadu_ps(b3 + j), cv);
        _mm256_storeu_ps(crow + j, cv);
      }
      for (; j < n; ++j)
        crow[j] += s0 * b0[j] + s1 * b1[j] + s2 * b2[j] + s3 * b3[j];
    }
  }
  for (; p < k; ++p) {
    const float* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const float av = a[p * m + i];
      float* crow = c + i * n;
      std::size_t j = 0;
      const __m256 avv = _mm256_set1_ps(av);
      for (; j + 8 <= n; j += 8)
        _mm256_storeu_ps(
            crow + j,
            _mm256_fmadd_ps(avv, _mm256_loadu_ps(brow + j),
                            _mm256_loadu_ps(crow + j)));
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// ---------------------------------------------------------------------------
// f64 GEMM
// ---------------------------------------------------------------------------

template <int MR>
inline void nn_tile8_f64(std::size_t k, std::size_t n, const double* a,
                         const double* b, double* c, bool accumulate) {
  __m256d acc0[MR], acc1[MR];
  for (int r = 0; r < MR; ++r) {
    if (accumulate) {
      acc0[r] = _mm256_loadu_pd(c + r * n);
      acc1[r] = _mm256_loadu_pd(c + r * n + 4);
    } else {
      acc0[r] = _mm256_setzero_pd();
      acc1[r] = _mm256_setzero_pd();
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * n);
    const __m256d b1 = _mm256_loadu_pd(b + p * n + 4);
    for (int r = 0; r < MR; ++r) {
      const __m256d av = _mm256_set1_pd(a[r * k + p]);
      acc0[r] = _mm256_fmadd_pd(av, b0, acc0[r]);
      acc1[r] = _mm256_fmadd_pd(av, b1, acc1[r]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    _mm256_storeu_pd(c + r * n, acc0[r]);
    _mm256_storeu_pd(c + r * n + 4, acc1[r]);
  }
}

void gemm_nn_f64(std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c, bool accumulate) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4)
      nn_tile8_f64<4>(k, n, a + i * k, b + j, c + i * n + j, accumulate);
    for (; i < m; ++i)
      nn_tile8_f64<1>(k, n, a + i * k, b + j, c + i * n + j, accumulate);
  }
  if (j < n) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t jj = j; jj < n; ++jj) {
        double acc = accumulate ? c[i * n + jj] : 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + jj];
        c[i * n + jj] = acc;
      }
    }
  }
}

void gemm_nt_f64(std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      __m256d accv = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4)
        accv = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p),
                               _mm256_loadu_pd(brow + p), accv);
      double s = hsum4(accv);
      for (; p < k; ++p) s += arow[p] * brow[p];
      if (accumulate)
        c[i * n + j] += s;
      else
        c[i * n + j] = s;
    }
  }
}

void gemm_tn_f64(std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[p * m + i];
      double* crow = c + i * n;
      const __m256d avv = _mm256_set1_pd(av);
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4)
        _mm256_storeu_pd(
            crow + j,
            _mm256_fmadd_pd(avv, _mm256_loadu_pd(brow + j),
                            _mm256_loadu_pd(crow + j)));
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise / reductions
// ---------------------------------------------------------------------------

void axpy_f32(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_f32(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void add_f32(std::size_t n, const float* a, const float* b, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i,
                     _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_f32(std::size_t n, const float* a, const float* b, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i,
                     _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

// Cody-Waite range reduction plus a degree-5 polynomial on [-ln2/2, ln2/2].
inline __m256 exp8(__m256 x) {
  const __m256 hi = _mm256_set1_ps(88.3762626647950f);
  const __m256 lo = _mm256_set1_ps(-87.3365478515625f);
  const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
  const __m256 c1 = _mm256_set1_ps(0.693359375f);
  const __m256 c2 = _mm256_set1_ps(-2.12194440e-4f);
  x = _mm256_min_ps(x, hi);
  x = _mm256_max_ps(x, lo);

  __m256 fx = _mm256_fmadd_ps(x, log2e, _mm256_set1_ps(0.5f));
  fx = _mm256_floor_ps(fx);
  x = _mm256_fnmadd_ps(fx, c1, x);
  x = _mm256_fnmadd_ps(fx, c2, x);

  const __m256 z = _mm256_mul_ps(x, x);
  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
  y = _mm256_fmadd_ps(y, z, x);
  y = _mm256_add_ps(y, _mm256_set1_ps(1.0f));

  const __m256i n = _mm256_cvttps_epi32(fx);
  const __m256i pow2n =
      _mm256_slli_epi32(_mm256_add_epi32(n, _mm256_set1_epi32(127)), 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(pow2n));
}

void exp_f32(std::size_t n, const float* x, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, exp8(_mm256_loadu_ps(x + i)));
  if (i < n) {
    float buf_in[8] = {0}, buf_out[8];
    for (std::size_t r = i; r < n; ++r) buf_in[r - i] = x[r];
    _mm256_storeu_ps(buf_out, exp8(_mm256_loadu_ps(buf_in)));
    for (std::size_t r = i; r < n; ++r) out[r] = buf_out[r - i];
  }
}

float sum_f32(std::size_t n, const float* x) {
  __m256 a0 = _mm256_setzero_ps(), a1 = _mm256_setzero_ps();
  __m256 a2 = _mm256_setzero_ps(), a3 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    a0 = _mm256_add_ps(a0, _mm256_loadu_ps(x + i));
    a1 = _mm256_add_ps(a1, _mm256_loadu_ps(x + i + 8));
    a2 = _mm256_add_ps(a2, _mm256_loadu_ps(x + i + 16));
    a3 = _mm256_add_ps(a3, _mm256_loadu_ps(x + i + 24));
  }
  for (; i + 8 <= n; i += 8) a0 = _mm256_add_ps(a0, _mm256_loadu_ps(x + i));
  float s = hsum8(_mm256_add_ps(_mm256_add_ps(a0, a1), _mm256_add_ps(a2, a3)));
  for (; i < n; ++i) s += x[i];
  return s;
}

float dot_f32(std::size_t n, const float* a, const float* b) {
  __m256 a0 = _mm256_setzero_ps(), a1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    a0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), a0);
    a1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), a1);
  }
  for (; i + 8 <= n; i += 8)
    a0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), a0);
  float s = hsum8(_mm256_add_ps(a0, a1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_f64(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_f64(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void add_f64(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_f64(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

// f64 exp stays on libm; the graph-check path wants full double accuracy.
void exp_f64(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

double sum_f64(std::size_t n, const double* x) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
    a1 = _mm256_add_pd(a1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
  double s = hsum4(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) s += x[i];
  return s;
}

double dot_f64(std::size_t n, const double* a, const double* b) {
  __m256d a0 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), a0);
  double s = hsum4(a0);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

const OpsT<float>& avx2_table_f32() {
  static const OpsT<float> table{gemm_nn_f32, gemm_nt_f32, gemm_tn_f32,
                                 axpy_f32,    scale_f32,   add_f32,
                                 mul_f32,     exp_f32,     sum_f32,
                                 dot_f32};
  return table;
}

const OpsT<double>& avx2_table_f64() {
  static const OpsT<double> table{gemm_nn_f64, gemm_nt_f64, gemm_tn_f64,
                                  axpy_f64,    scale_f64,   add_f64,
                                  mul_f64,     exp_f64,     sum_f64,
                                  dot_f64};
  return table;
}

}  // namespace voxlift::kernels

#endif  // x86-64
