// Rough single-thread throughput numbers for the kernel table; handy when
// sizing training runs for a new machine.

#include <chrono>
#include <cstdio>
#include <vector>

#include "voxlift/kernels/kernels.hpp"
#include "voxlift/util/rng.hpp"

using voxlift::kernels::Backend;

namespace {

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e100;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

void bench_gemm(Backend backend, std::size_t m, std::size_t n, std::size_t k) {
  const auto& ops = voxlift::kernels::table_f32(backend);
  voxlift::util::Rng rng(7);
  std::vector<float> a(m * k), b(k * n), c(m * n);
  for (auto& v : a) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : b) v = static_cast<float>(rng.uniform(-1, 1));
  const double secs = time_best_of(5, [&] {
    ops.gemm_nn(m, n, k, a.data(), b.data(), c.data(), false);
  });
  const double gflops = 2.0 * static_cast<double>(m * n * k) / secs / 1e9;
  std::printf("gemm_nn f32 %-6s %4zux%4zux%4zu  %7.2f GFLOP/s\n",
              voxlift::kernels::backend_name(backend), m, n, k, gflops);

  const double secs_nt = time_best_of(5, [&] {
    ops.gemm_nt(m, n, k, a.data(), b.data(), c.data(), false);
  });
  std::printf("gemm_nt f32 %-6s %4zux%4zux%4zu  %7.2f GFLOP/s\n",
              voxlift::kernels::backend_name(backend), m, n, k,
              2.0 * static_cast<double>(m * n * k) / secs_nt / 1e9);

  const double secs_tn = time_best_of(5, [&] {
    ops.gemm_tn(m, n, k, a.data(), b.data(), c.data(), false);
  });
  std::printf("gemm_tn f32 %-6s %4zux%4zux%4zu  %7.2f GFLOP/s\n",
              voxlift::kernels::backend_name(backend), m, n, k,
              2.0 * static_cast<double>(m * n * k) / secs_tn / 1e9);
}

void bench_exp(Backend backend) {
  const auto& ops = voxlift::kernels::table_f32(backend);
  std::vector<float> x(1 << 20), y(1 << 20);
  voxlift::util::Rng rng(3);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-10, 10));
  const double secs = time_best_of(5, [&] { ops.exp(x.size(), x.data(), y.data()); });
  std::printf("exp     f32 %-6s n=%zu  %7.2f Melem/s\n",
              voxlift::kernels::backend_name(backend), x.size(),
              static_cast<double>(x.size()) / secs / 1e6);
}

}  // namespace

int main() {
  std::printf("cpu avx2: %s\n", voxlift::kernels::cpu_supports_avx2() ? "yes" : "no");
  for (Backend b : {Backend::kScalar, Backend::kAvx2}) {
    if (b == Backend::kAvx2 && !voxlift::kernels::cpu_supports_avx2()) continue;
    bench_gemm(b, 512, 192, 64);
    bench_gemm(b, 512, 512, 64);
    bench_gemm(b, 4096, 256, 432);
    bench_exp(b);
  }
  return 0;
}
