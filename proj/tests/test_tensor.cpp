#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "voxlift/core/blob.hpp"
#include "voxlift/core/ops.hpp"
#include "voxlift/core/optim.hpp"

using namespace voxlift;
using namespace voxlift::core;
using voxlift::testing::rand_t;

TEST_CASE("backward: sum of squares and constants") {
  Tensor x = Tensor::from_values({2}, {1.0, 2.0}, DType::kF64, true);
  Tensor y = sum(mul(x, x));
  backward(y);
  Tensor g = x.grad();
  CHECK(g.at(0) == doctest::Approx(2.0));
  CHECK(g.at(1) == doctest::Approx(4.0));

  // f constant w.r.t. x: gradient is zero everywhere (never materialized).
  Tensor c = Tensor::scalar(3.0, DType::kF64);
  Tensor z = mul(c, c);
  backward(z);  // no-op: z does not require grad
  Tensor x2 = Tensor::from_values({2}, {1.0, 2.0}, DType::kF64, true);
  CHECK_FALSE(x2.has_grad());
}

TEST_CASE("backward: non-scalar root is a contract violation") {
  Tensor x = Tensor::from_values({2}, {1.0, 2.0}, DType::kF64, true);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("gradient accumulation without reset, explicit zeroing") {
  Tensor x = Tensor::from_values({2}, {1.0, 2.0}, DType::kF64, true);
  auto loss = [&] { return sum(mul(x, x)); };
  backward(loss());
  backward(loss());
  CHECK(x.grad().at(0) == doctest::Approx(4.0));
  x.zero_grad();
  backward(loss());
  CHECK(x.grad().at(0) == doctest::Approx(2.0));
}

TEST_CASE("every registered primitive passes grad_check on random shapes") {
  for (const auto& check : testing::primitive_checks()) {
    for (std::uint64_t seed : {11u, 22u, 33u}) {
      const double err = check.run(seed);
      INFO(check.name << " seed " << seed << " err " << err);
      CHECK(err < 1e-5);
    }
  }
}

TEST_CASE("grad_check: quadratic is near machine precision") {
  util::Rng rng(5);
  Tensor x = rand_t(rng, {6});
  const double err =
      grad_check([](const Tensor& t) { return sum(mul(t, t)); }, x);
  CHECK(err < 1e-8);
}

TEST_CASE("grad_check: softmax then sum of squares") {
  util::Rng rng(6);
  Tensor x = rand_t(rng, {4, 5}, -2, 2);
  const double err = grad_check(
      [](const Tensor& t) {
        Tensor s = softmax_last(t);
        return sum(mul(s, s));
      },
      x);
  CHECK(err < 1e-5);
}

TEST_CASE("grad_check: kink at a sample point is flagged, nudging fixes it") {
  Tensor tied = Tensor::from_values({2}, {0.5, 0.5}, DType::kF64, false);
  auto fn = [](const Tensor& t) { return reduce_max(t); };
  CHECK(grad_check(fn, tied) > 1e-2);  // subgradient vs. centered difference
  Tensor nudged = Tensor::from_values({2}, {0.6, 0.5}, DType::kF64, false);
  CHECK(grad_check(fn, nudged) < 1e-8);
}

TEST_CASE("grad_check: composed attention block vs central differences") {
  util::Rng rng(9);
  Tensor x = rand_t(rng, {3, 4}, -1, 1);
  auto attention = [](const Tensor& t) {
    Tensor scores = mul_scalar(matmul(t, permute(t, {1, 0})), 0.5);
    Tensor attn = softmax_last(scores);
    Tensor y = matmul(attn, t);
    return sum(mul(y, y));
  };
  CHECK(grad_check(attention, x, 1e-4) < 1e-5);
}

TEST_CASE("backward linearity: grads of a*f + b*g combine linearly") {
  util::Rng rng(12);
  Tensor x = rand_t(rng, {5}, 0.2, 1.5);
  const double a = 2.25, b = -0.75;

  Tensor x1 = x.clone(true);
  backward(sum(mul(x1, x1)));
  Tensor gf = x1.grad();
  Tensor x2 = x.clone(true);
  backward(sum(exp(x2)));
  Tensor gg = x2.grad();

  Tensor x3 = x.clone(true);
  backward(add(mul_scalar(sum(mul(x3, x3)), a), mul_scalar(sum(exp(x3)), b)));
  Tensor gc = x3.grad();

  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double expect = a * gf.at(i) + b * gg.at(i);
    CHECK(std::abs(gc.at(i) - expect) <=
          1e-10 * std::max(1.0, std::abs(expect)));
  }
}

TEST_CASE("forward/backward determinism: identical bits across runs") {
  auto run = [] {
    util::Rng rng(77);
    Tensor x = Tensor::uniform({8, 8}, rng, -1, 1, DType::kF32, true);
    Tensor w = Tensor::uniform({8, 8}, rng, -1, 1, DType::kF32, true);
    Tensor y = sum(mul(softmax_last(matmul(x, w)), x));
    backward(y);
    std::vector<float> bits;
    const float* g = x.node()->grad<float>();
    bits.assign(g, g + 64);
    bits.push_back(static_cast<float>(y.item()));
    return bits;
  };
  CHECK(run() == run());
}

TEST_CASE("f64 mode mirrors any f32-expressible graph") {
  util::Rng rng(21);
  for (DType dt : {DType::kF32, DType::kF64}) {
    Tensor x = Tensor::uniform({3, 3}, rng, -1, 1, dt, true);
    Tensor y = mean(softplus(matmul(x, x)));
    CHECK(std::isfinite(y.item()));
    backward(y);
    CHECK(x.has_grad());
  }
}

TEST_CASE("adamw: analytic first steps") {
  // zero grad + zero decay leaves params untouched
  {
    Tensor p = Tensor::from_values({1}, {0.7}, DType::kF64, true);
    AdamW opt({{{p}, 0.1}}, {});
    backward(mul_scalar(sum(p), 0.0));
    opt.step();
    CHECK(p.at(0) == doctest::Approx(0.7).epsilon(1e-12));
  }
  // p=0, g=1, lr=0.1, eps~0, t=1: bias-corrected mhat=vhat=1 -> p = -0.1
  {
    Tensor p = Tensor::from_values({1}, {0.0}, DType::kF64, true);
    AdamWConfig cfg;
    cfg.eps = 1e-16;
    AdamW opt({{{p}, 0.1}}, cfg);
    backward(sum(p));
    opt.step();
    CHECK(p.at(0) == doctest::Approx(-0.1).epsilon(1e-9));
  }
  // decoupled decay: p=1, g=0, lr=0.1, wd=0.01 -> 0.999
  {
    Tensor p = Tensor::from_values({1}, {1.0}, DType::kF64, true);
    AdamWConfig cfg;
    cfg.weight_decay = 0.01;
    AdamW opt({{{p}, 0.1}}, cfg);
    backward(mul_scalar(sum(p), 0.0));
    opt.step();
    CHECK(p.at(0) == doctest::Approx(0.999).epsilon(1e-12));
  }
}

TEST_CASE("adamw: NaN gradients abort the step") {
  Tensor p = Tensor::from_values({1}, {1.0}, DType::kF64, true);
  AdamW opt({{{p}, 0.1}}, {});
  backward(sum(p));
  p.node()->grad<double>()[0] = std::nan("");
  CHECK_THROWS_AS(opt.step(), std::runtime_error);
  CHECK(p.at(0) == doctest::Approx(1.0));  // untouched
}

TEST_CASE("lr schedule: zero at step 0, peak at warmup") {
  CHECK(lr_schedule_scale(0, 500, 2000, LrSchedule::kWarmupConstant) == 0.0);
  CHECK(lr_schedule_scale(250, 500, 2000, LrSchedule::kWarmupConstant) ==
        doctest::Approx(0.5));
  CHECK(lr_schedule_scale(500, 500, 2000, LrSchedule::kWarmupConstant) == 1.0);
  CHECK(lr_schedule_scale(1999, 500, 2000, LrSchedule::kWarmupConstant) == 1.0);
  CHECK(lr_schedule_scale(1250, 500, 2000, LrSchedule::kWarmupLinearDecay) ==
        doctest::Approx(0.5));
}

TEST_CASE("tensor blob round-trip is bit-exact; corrupt files name themselves") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "voxlift_blob_test";
  fs::create_directories(dir);

  util::Rng rng(3);
  Tensor t32 = Tensor::uniform({3, 4, 2}, rng, -5, 5, DType::kF32);
  Tensor t64 = Tensor::uniform({7}, rng, -5, 5, DType::kF64);
  const std::string p32 = (dir / "a.vltb").string();
  const std::string p64 = (dir / "b.vltb").string();
  save_blob(p32, t32);
  save_blob(p64, t64);

  Tensor r32 = load_blob(p32);
  Tensor r64 = load_blob(p64);
  CHECK(r32.shape() == t32.shape());
  CHECK(r32.node()->data_f32 == t32.node()->data_f32);
  CHECK(r64.node()->data_f64 == t64.node()->data_f64);

  // truncation -> error mentioning the file, not a crash
  {
    std::ifstream in(p32, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream out(p32, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  try {
    load_blob(p32);
    FAIL("expected a load error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("a.vltb") != std::string::npos);
  }

  // bad magic
  {
    std::ofstream out(p64, std::ios::binary | std::ios::trunc);
    out << "NOPE1234";
  }
  CHECK_THROWS_AS(load_blob(p64), std::runtime_error);

  // checkpoint container round-trip
  const std::string ckpt = (dir / "model.vlck").string();
  save_checkpoint(ckpt, {{"w", t32}, {"stats/mean", t64}});
  auto entries = load_checkpoint(ckpt);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].first == "w");
  CHECK(entries[0].second.node()->data_f32 == t32.node()->data_f32);
  CHECK(entries[1].first == "stats/mean");
  fs::remove_all(dir);
}

TEST_CASE("broadcasting follows trailing alignment") {
  Tensor a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6}, DType::kF64);
  Tensor b = Tensor::from_values({3}, {10, 20, 30}, DType::kF64);
  Tensor c = add(a, b);
  CHECK(c.at(0) == 11);
  CHECK(c.at(4) == 25);
  Tensor col = Tensor::from_values({2, 1}, {100, 200}, DType::kF64);
  Tensor d = add(a, col);
  CHECK(d.at(2) == 103);
  CHECK(d.at(3) == 204);
  Tensor bad = Tensor::from_values({2}, {0, 0}, DType::kF64);
  CHECK_THROWS_AS(add(a, bad), std::invalid_argument);
}
