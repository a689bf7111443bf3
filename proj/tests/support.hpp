#pragma once

// Shared helpers for the unit and acceptance suites: random tensors and the
// registry of differentiable primitives with their grad-check harnesses.

#include <functional>
#include <string>
#include <vector>

#include "voxlift/core/ops.hpp"
#include "voxlift/core/tensor.hpp"
#include "voxlift/util/rng.hpp"

namespace voxlift::testing {

using core::DType;
using core::Shape;
using core::Tensor;

inline Tensor rand_t(util::Rng& rng, Shape shape, double lo = -1.0,
                     double hi = 1.0) {
  return Tensor::uniform(std::move(shape), rng, lo, hi, DType::kF64, false);
}

struct PrimitiveCheck {
  std::string name;
  // Runs one randomized grad-check trial, returns the max relative error.
  std::function<double(std::uint64_t seed)> run;
};

inline std::vector<PrimitiveCheck> primitive_checks() {
  using namespace voxlift::core;
  std::vector<PrimitiveCheck> checks;
  auto add_check = [&](std::string name,
                       std::function<double(std::uint64_t)> run) {
    checks.push_back({std::move(name), std::move(run)});
  };

  auto simple = [&](std::string name, Shape shape,
                    std::function<Tensor(const Tensor&)> fn, double lo = -1.0,
                    double hi = 1.0) {
    add_check(std::move(name), [=](std::uint64_t seed) {
      util::Rng rng(seed);
      Tensor x = rand_t(rng, shape, lo, hi);
      return grad_check([&](const Tensor& t) { return sum(mul(fn(t), fn(t))); },
                        x);
    });
  };

  simple("add.broadcast", {3, 4}, [](const Tensor& x) {
    util::Rng r(5);
    static Tensor b = rand_t(r, {4});
    return add(x, b);
  });
  simple("sub", {2, 3, 2}, [](const Tensor& x) {
    util::Rng r(6);
    static Tensor b = rand_t(r, {2, 3, 2});
    return sub(x, b);
  });
  simple("mul.broadcast", {4, 3}, [](const Tensor& x) {
    util::Rng r(7);
    static Tensor b = rand_t(r, {3}, 0.5, 1.5);
    return mul(x, b);
  });
  simple("div", {3, 3}, [](const Tensor& x) {
    util::Rng r(8);
    static Tensor b = rand_t(r, {3, 3}, 0.7, 1.9);
    return div(x, b);
  });
  simple("add_scalar", {5}, [](const Tensor& x) { return add_scalar(x, 0.37); });
  simple("mul_scalar", {5}, [](const Tensor& x) { return mul_scalar(x, -1.3); });
  simple("exp", {3, 3}, [](const Tensor& x) { return exp(x); });
  simple("log", {7}, [](const Tensor& x) { return log(x); }, 0.4, 2.0);
  simple("sqrt", {7}, [](const Tensor& x) { return sqrt(x); }, 0.3, 2.0);
  simple("pow", {5}, [](const Tensor& x) { return pow_scalar(x, 2.5); }, 0.4, 1.6);
  simple("sigmoid", {2, 6}, [](const Tensor& x) { return sigmoid(x); }, -3, 3);
  simple("softplus", {2, 6}, [](const Tensor& x) { return softplus(x); }, -3, 3);
  simple("tanh", {2, 6}, [](const Tensor& x) { return tanh(x); }, -2, 2);
  simple("softmax", {3, 5}, [](const Tensor& x) { return softmax_last(x); }, -2, 2);
  // Project through random weights: sum(norm(x)^2) is nearly constant and
  // would drown the centered difference in cancellation.
  add_check("layer_norm", [](std::uint64_t seed) {
    util::Rng rng(seed);
    Tensor x = rand_t(rng, {4, 6}, -2, 2);
    Tensor w = rand_t(rng, {4, 6});
    using namespace voxlift::core;
    return grad_check(
        [&](const Tensor& t) {
          Tensor y = mul(layer_norm_last(t), w);
          return sum(mul(y, y));
        },
        x);
  });
  simple("reshape", {2, 6}, [](const Tensor& x) { return reshape(x, {3, 4}); });
  simple("permute", {2, 3, 4},
         [](const Tensor& x) { return permute(x, {2, 0, 1}); });
  simple("broadcast", {1, 4},
         [](const Tensor& x) { return broadcast_to(x, {3, 4}); });
  simple("slice", {4, 5}, [](const Tensor& x) { return slice(x, 1, 1, 3); });
  simple("upsample3d", {2, 2, 2, 3},
         [](const Tensor& x) { return upsample_nearest3d(x, 2); });

  add_check("sum_mean_max", [](std::uint64_t seed) {
    util::Rng rng(seed);
    Tensor x = rand_t(rng, {3, 4});
    // Spread values so max has an isolated argmax.
    for (std::int64_t i = 0; i < x.numel(); ++i)
      x.set(i, x.at(i) + 0.05 * static_cast<double>(i));
    using namespace voxlift::core;
    return grad_check(
        [](const Tensor& t) {
          return add(add(sum(t), mean(mul(t, t))), reduce_max(t));
        },
        x);
  });

  add_check("concat_gather_scatter", [](std::uint64_t seed) {
    util::Rng rng(seed);
    Tensor x = rand_t(rng, {4, 3});
    using namespace voxlift::core;
    return grad_check(
        [](const Tensor& t) {
          Tensor c = concat({t, mul_scalar(t, 2.0)}, 0);
          Tensor g = gather_rows(c, {1, 5, 0, 0, 7});
          Tensor s = scatter_rows_add(g, {2, 0, 1, 2, 1}, 3);
          return sum(mul(s, s));
        },
        x);
  });

  add_check("matmul_lhs", [](std::uint64_t seed) {
    util::Rng rng(seed);
    Tensor x = rand_t(rng, {3, 4});
    Tensor w = rand_t(rng, {4, 5});
    using namespace voxlift::core;
    return grad_check(
        [&](const Tensor& t) {
          Tensor y = matmul(t, w);
          return sum(mul(y, y));
        },
        x);
  });
  add_check("matmul_rhs", [](std::uint64_t seed) {
    util::Rng rng(seed);
    Tensor a = rand_t(rng, {3, 4});
    Tensor x = rand_t(rng, {4, 5});
    using namespace voxlift::core;
    return grad_check(
        [&](const Tensor& t) {
          Tensor y = matmul(a, t);
          return sum(mul(y, y));
        },
        x);
  });
  add_check("bmm", [](std::uint64_t seed) {
    util::Rng rng(seed);
    Tensor x = rand_t(rng, {2, 3, 4});
    Tensor b = rand_t(rng, {2, 4, 3});
    Tensor bt = rand_t(rng, {2, 3, 4});
    using namespace voxlift::core;
    return grad_check(
        [&](const Tensor& t) {
          Tensor y = bmm(t, b);
          Tensor z = bmm(t, bt, true);
          return sum(mul(y, y)) + sum(mul(z, z));
        },
        x);
  });
  add_check("bmm_rhs", [](std::uint64_t seed) {
    util::Rng rng(seed);
    Tensor a = rand_t(rng, {2, 3, 4});
    Tensor x = rand_t(rng, {2, 4, 3});
    using namespace voxlift::core;
    return grad_check(
        [&](const Tensor& t) {
          Tensor y = bmm(a, t);
          Tensor z = bmm(a, permute(t, {0, 2, 1}), true);
          return sum(mul(y, y)) + sum(mul(z, z));
        },
        x);
  });

  add_check("conv2d_input", [](std::uint64_t seed) {
    util::Rng rng(seed);
    Tensor x = rand_t(rng, {4, 4, 2});
    Tensor k = rand_t(rng, {3, 3, 2, 3});
    Tensor b = rand_t(rng, {3});
    using namespace voxlift::core;
    return grad_check(
        [&](const Tensor& t) {
          Tensor y = conv2d(t, k, b);
          return sum(mul(y, y));
        },
        x);
  });
  add_check("conv2d_kernel", [](std::uint64_t seed) {
    util::Rng rng(seed);
    Tensor x = rand_t(rng, {4, 4, 2});
    Tensor k = rand_t(rng, {3, 3, 2, 3});
    Tensor b = rand_t(rng, {3});
    using namespace voxlift::core;
    return grad_check(
        [&](const Tensor& t) {
          Tensor y = conv2d(x, t, b);
          return sum(mul(y, y));
        },
        k);
  });
  add_check("conv3d_input", [](std::uint64_t seed) {
    util::Rng rng(seed);
    Tensor x = rand_t(rng, {3, 3, 3, 2});
    Tensor k = rand_t(rng, {3, 3, 3, 2, 2});
    Tensor b = rand_t(rng, {2});
    using namespace voxlift::core;
    return grad_check(
        [&](const Tensor& t) {
          Tensor y = conv3d(t, k, b);
          return sum(mul(y, y));
        },
        x);
  });
  add_check("conv3d_kernel_bias", [](std::uint64_t seed) {
    util::Rng rng(seed);
    Tensor x = rand_t(rng, {3, 3, 3, 2});
    Tensor k = rand_t(rng, {3, 3, 3, 2, 2});
    using namespace voxlift::core;
    return grad_check(
        [&](const Tensor& t) {
          Tensor kk = slice(reshape(t, {109, 1}), 0, 0, 108);
          kk = reshape(kk, {3, 3, 3, 2, 2});
          Tensor bb = reshape(slice(reshape(t, {109, 1}), 0, 108, 1), {1});
          Tensor y = conv3d(x, kk, concat({bb, bb}, 0));
          return sum(mul(y, y));
        },
        rand_t(rng, {109}));
  });

  add_check("bilinear_sample", [](std::uint64_t seed) {
    util::Rng rng(seed);
    Tensor grid = rand_t(rng, {4, 5, 3});
    Tensor pts = rand_t(rng, {6, 2}, -1.2, 1.2);  // includes clamp region
    using namespace voxlift::core;
    return grad_check(
        [&](const Tensor& t) {
          Tensor y = bilinear_sample(t, pts);
          return sum(mul(y, y));
        },
        grid);
  });
  add_check("trilinear_sample", [](std::uint64_t seed) {
    util::Rng rng(seed);
    Tensor grid = rand_t(rng, {3, 4, 3, 2});
    Tensor pts = rand_t(rng, {7, 3}, -1.2, 1.2);
    using namespace voxlift::core;
    return grad_check(
        [&](const Tensor& t) {
          Tensor y = trilinear_sample(t, pts);
          return sum(mul(y, y));
        },
        grid);
  });

  return checks;
}

}  // namespace voxlift::testing
