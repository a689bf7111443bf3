#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "voxlift/kernels/kernels.hpp"
#include "voxlift/util/rng.hpp"

using namespace voxlift;
using kernels::Backend;

namespace {

std::vector<float> random_vec(util::Rng& rng, std::size_t n, double lo = -2.0,
                              double hi = 2.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

double max_rel_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(static_cast<double>(a[i]) - b[i]);
    const double ref = std::max({std::abs(static_cast<double>(a[i])),
                                 std::abs(static_cast<double>(b[i])), 1.0});
    worst = std::max(worst, d / ref);
  }
  return worst;
}

}  // namespace

TEST_CASE("gemm variants: avx2 matches scalar reference") {
  if (!kernels::cpu_supports_avx2()) return;
  util::Rng rng(42);
  // deliberately awkward shapes to hit every tail path
  const std::size_t shapes[][3] = {{1, 1, 1},   {3, 5, 7},    {4, 16, 8},
                                   {5, 17, 9},  {12, 33, 20}, {64, 48, 31},
                                   {33, 130, 65}, {2, 7, 129}};
  for (auto [m, n, k] : shapes) {
    auto a = random_vec(rng, m * k);
    auto b_nn = random_vec(rng, k * n);
    auto b_nt = random_vec(rng, n * k);
    auto b_tn = random_vec(rng, k * n);
    auto a_tn = random_vec(rng, k * m);
    for (bool acc : {false, true}) {
      std::vector<float> c0 = random_vec(rng, m * n), c1 = c0;
      kernels::table_f32(Backend::kScalar).gemm_nn(m, n, k, a.data(), b_nn.data(), c0.data(), acc);
      kernels::table_f32(Backend::kAvx2).gemm_nn(m, n, k, a.data(), b_nn.data(), c1.data(), acc);
      CHECK(max_rel_diff(c0, c1) < 1e-5);

      std::vector<float> d0 = random_vec(rng, m * n), d1 = d0;
      kernels::table_f32(Backend::kScalar).gemm_nt(m, n, k, a.data(), b_nt.data(), d0.data(), acc);
      kernels::table_f32(Backend::kAvx2).gemm_nt(m, n, k, a.data(), b_nt.data(), d1.data(), acc);
      CHECK(max_rel_diff(d0, d1) < 1e-5);

      std::vector<float> e0 = random_vec(rng, m * n), e1 = e0;
      kernels::table_f32(Backend::kScalar).gemm_tn(m, n, k, a_tn.data(), b_tn.data(), e0.data(), acc);
      kernels::table_f32(Backend::kAvx2).gemm_tn(m, n, k, a_tn.data(), b_tn.data(), e1.data(), acc);
      CHECK(max_rel_diff(e0, e1) < 1e-5);
    }
  }
}

TEST_CASE("gemm f64 variants match scalar reference") {
  if (!kernels::cpu_supports_avx2()) return;
  util::Rng rng(43);
  const std::size_t m = 13, n = 21, k = 17;
  std::vector<double> a(m * k), b(k * n), bt(n * k), at(k * m);
  for (auto* v : {&a, &b, &bt, &at})
    for (auto& x : *v) x = rng.uniform(-2, 2);
  std::vector<double> c0(m * n, 0), c1(m * n, 0);
  kernels::table_f64(Backend::kScalar).gemm_nn(m, n, k, a.data(), b.data(), c0.data(), false);
  kernels::table_f64(Backend::kAvx2).gemm_nn(m, n, k, a.data(), b.data(), c1.data(), false);
  for (std::size_t i = 0; i < c0.size(); ++i) CHECK(c0[i] == doctest::Approx(c1[i]).epsilon(1e-13));

  kernels::table_f64(Backend::kScalar).gemm_nt(m, n, k, a.data(), bt.data(), c0.data(), false);
  kernels::table_f64(Backend::kAvx2).gemm_nt(m, n, k, a.data(), bt.data(), c1.data(), false);
  for (std::size_t i = 0; i < c0.size(); ++i) CHECK(c0[i] == doctest::Approx(c1[i]).epsilon(1e-13));

  kernels::table_f64(Backend::kScalar).gemm_tn(m, n, k, at.data(), b.data(), c0.data(), false);
  kernels::table_f64(Backend::kAvx2).gemm_tn(m, n, k, at.data(), b.data(), c1.data(), false);
  for (std::size_t i = 0; i < c0.size(); ++i) CHECK(c0[i] == doctest::Approx(c1[i]).epsilon(1e-13));
}

TEST_CASE("elementwise kernels: avx2 matches scalar bit-for-bit") {
  if (!kernels::cpu_supports_avx2()) return;
  util::Rng rng(7);
  for (std::size_t n : {1u, 7u, 8u, 9u, 64u, 1000u}) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);
    std::vector<float> r0(n), r1(n);
    kernels::table_f32(Backend::kScalar).add(n, a.data(), b.data(), r0.data());
    kernels::table_f32(Backend::kAvx2).add(n, a.data(), b.data(), r1.data());
    CHECK(r0 == r1);
    kernels::table_f32(Backend::kScalar).mul(n, a.data(), b.data(), r0.data());
    kernels::table_f32(Backend::kAvx2).mul(n, a.data(), b.data(), r1.data());
    CHECK(r0 == r1);
    kernels::table_f32(Backend::kScalar).scale(n, 1.5f, a.data(), r0.data());
    kernels::table_f32(Backend::kAvx2).scale(n, 1.5f, a.data(), r1.data());
    CHECK(r0 == r1);
  }
}

TEST_CASE("vectorized exp stays within 2 ulp-ish of libm") {
  if (!kernels::cpu_supports_avx2()) return;
  util::Rng rng(11);
  std::vector<float> x(4096);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = static_cast<float>(rng.uniform(-80, 80));
  x[0] = 0.0f;
  x[1] = -87.0f;
  x[2] = 88.0f;
  x[3] = 1.0f;
  std::vector<float> y(x.size());
  kernels::table_f32(Backend::kAvx2).exp(x.size(), x.data(), y.data());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double ref = std::exp(static_cast<double>(x[i]));
    CHECK(std::abs(y[i] - ref) <= 2e-6 * std::abs(ref));
  }
}

TEST_CASE("reductions match across backends") {
  if (!kernels::cpu_supports_avx2()) return;
  util::Rng rng(13);
  for (std::size_t n : {1u, 31u, 32u, 33u, 1023u}) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);
    const float s0 = kernels::table_f32(Backend::kScalar).sum(n, a.data());
    const float s1 = kernels::table_f32(Backend::kAvx2).sum(n, a.data());
    CHECK(s0 == doctest::Approx(s1).epsilon(1e-5));
    const float d0 = kernels::table_f32(Backend::kScalar).dot(n, a.data(), b.data());
    const float d1 = kernels::table_f32(Backend::kAvx2).dot(n, a.data(), b.data());
    CHECK(d0 == doctest::Approx(d1).epsilon(1e-5));
  }
}

TEST_CASE("backend selection is explicit and reversible") {
  const Backend initial = kernels::active_backend();
  kernels::set_backend(Backend::kScalar);
  CHECK(kernels::active_backend() == Backend::kScalar);
  if (kernels::cpu_supports_avx2()) {
    kernels::set_backend(Backend::kAvx2);
    CHECK(kernels::active_backend() == Backend::kAvx2);
  }
  kernels::set_backend(initial);
}
