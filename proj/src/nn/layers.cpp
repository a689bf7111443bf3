#include "voxlift/nn/layers.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace voxlift::nn {

using namespace voxlift::core;

namespace {

// Zero-mean uniform scaled by fan-in.
Tensor fan_in_uniform(Shape shape, std::int64_t fan_in, util::Rng& rng,
                      DType dtype) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  return Tensor::uniform(std::move(shape), rng, -bound, bound, dtype, true);
}

}  // namespace

Tensor smooth_act(const Tensor& x) {
  return add_scalar(softplus(x), -std::numbers::ln2);
}

Linear Linear::init(std::int64_t in, std::int64_t out, util::Rng& rng,
                    DType dtype) {
  Linear l;
  l.weight = fan_in_uniform({in, out}, in, rng, dtype);
  l.bias = Tensor::zeros({out}, dtype, true);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  return add(matmul(x, weight), bias);
}

void Linear::collect(const std::string& prefix, ParamMap& params) const {
  params.add(prefix + ".weight", weight);
  params.add(prefix + ".bias", bias);
}

LayerNorm LayerNorm::init(std::int64_t c, DType dtype) {
  LayerNorm n;
  n.gamma = Tensor::full({c}, 1.0, dtype, true);
  n.beta = Tensor::zeros({c}, dtype, true);
  return n;
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return add(mul(layer_norm_last(x), gamma), beta);
}

void LayerNorm::collect(const std::string& prefix, ParamMap& params) const {
  params.add(prefix + ".gamma", gamma);
  params.add(prefix + ".beta", beta);
}

MultiHeadAttention MultiHeadAttention::init(std::int64_t width, int heads,
                                            util::Rng& rng, DType dtype) {
  if (width % heads != 0)
    throw std::invalid_argument("attention width must divide by head count");
  MultiHeadAttention m;
  m.heads = heads;
  m.proj_q = Linear::init(width, width, rng, dtype);
  m.proj_k = Linear::init(width, width, rng, dtype);
  m.proj_v = Linear::init(width, width, rng, dtype);
  m.proj_o = Linear::init(width, width, rng, dtype);
  return m;
}

Tensor MultiHeadAttention::operator()(const Tensor& query,
                                      const Tensor& key_value,
                                      Tensor* capture) const {
  const std::int64_t c = proj_q.weight.dim(0);
  if (query.dim(1) != c || key_value.dim(1) != c)
    throw std::invalid_argument("attention width mismatch");
  const std::int64_t nq = query.dim(0), nk = key_value.dim(0);
  const std::int64_t h = heads, d = c / heads;

  auto split = [&](const Tensor& t, std::int64_t n) {
    return permute(reshape(t, {n, h, d}), {1, 0, 2});  // [h,n,d]
  };
  Tensor q = split(proj_q(query), nq);
  Tensor kk = split(proj_k(key_value), nk);
  Tensor v = split(proj_v(key_value), nk);

  Tensor scores = mul_scalar(bmm(q, kk, /*transpose_b=*/true),
                             1.0 / std::sqrt(static_cast<double>(d)));
  Tensor weights = softmax_last(scores);  // [h,nq,nk]
  if (capture) {
    NoGradGuard no_grad;
    Tensor mean_heads = Tensor::zeros({nq, nk}, weights.dtype());
    for (std::int64_t hh = 0; hh < h; ++hh)
      for (std::int64_t i = 0; i < nq * nk; ++i)
        mean_heads.set(i, mean_heads.at(i) +
                              weights.at(hh * nq * nk + i) /
                                  static_cast<double>(h));
    *capture = mean_heads;
  }
  Tensor mixed = bmm(weights, v);                       // [h,nq,d]
  Tensor merged = reshape(permute(mixed, {1, 0, 2}), {nq, c});
  return proj_o(merged);
}

void MultiHeadAttention::collect(const std::string& prefix,
                                 ParamMap& params) const {
  proj_q.collect(prefix + ".q", params);
  proj_k.collect(prefix + ".k", params);
  proj_v.collect(prefix + ".v", params);
  proj_o.collect(prefix + ".o", params);
}

Ffn Ffn::init(std::int64_t width, std::int64_t hidden, util::Rng& rng,
              DType dtype) {
  Ffn f;
  f.fc1 = Linear::init(width, hidden, rng, dtype);
  f.fc2 = Linear::init(hidden, width, rng, dtype);
  return f;
}

Tensor Ffn::operator()(const Tensor& x) const {
  return fc2(smooth_act(fc1(x)));
}

void Ffn::collect(const std::string& prefix, ParamMap& params) const {
  fc1.collect(prefix + ".fc1", params);
  fc2.collect(prefix + ".fc2", params);
}

TransformerBlock TransformerBlock::init(std::int64_t width, int heads,
                                        std::int64_t ffn_hidden, util::Rng& rng,
                                        DType dtype) {
  TransformerBlock b;
  b.norm_q = LayerNorm::init(width, dtype);
  b.norm_kv = LayerNorm::init(width, dtype);
  b.norm_ffn = LayerNorm::init(width, dtype);
  b.attn = MultiHeadAttention::init(width, heads, rng, dtype);
  b.ffn = Ffn::init(width, ffn_hidden, rng, dtype);
  return b;
}

Tensor TransformerBlock::self_forward(const Tensor& x, Tensor* capture) const {
  Tensor normed = norm_q(x);
  Tensor y = add(x, attn(normed, normed, capture));
  return add(y, ffn(norm_ffn(y)));
}

Tensor TransformerBlock::cross_forward(const Tensor& x, const Tensor& context,
                                       Tensor* capture) const {
  Tensor y = add(x, attn(norm_q(x), norm_kv(context), capture));
  return add(y, ffn(norm_ffn(y)));
}

void TransformerBlock::collect(const std::string& prefix,
                               ParamMap& params) const {
  norm_q.collect(prefix + ".norm_q", params);
  norm_kv.collect(prefix + ".norm_kv", params);
  norm_ffn.collect(prefix + ".norm_ffn", params);
  attn.collect(prefix + ".attn", params);
  ffn.collect(prefix + ".ffn", params);
}

PatchEmbed PatchEmbed::init(int res, int patch, std::int64_t width,
                            util::Rng& rng, DType dtype) {
  if (res % patch != 0)
    throw std::invalid_argument("patch size must divide the image resolution");
  PatchEmbed p;
  p.res = res;
  p.patch = patch;
  const std::int64_t in = static_cast<std::int64_t>(patch) * patch * 3;
  p.weight = fan_in_uniform({in, width}, in, rng, dtype);
  p.bias = Tensor::zeros({width}, dtype, true);
  p.pos = Tensor::normal({p.tokens_per_view(), width}, rng, 0.0, 0.02, dtype,
                         true);
  return p;
}

Tensor PatchEmbed::operator()(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != res || image.dim(1) != res ||
      image.dim(2) != 3)
    throw std::invalid_argument("patch_embed expects [res,res,3]");
  const int grid = res / patch;
  std::vector<std::int64_t> order;
  order.reserve(static_cast<size_t>(res) * res);
  for (int gi = 0; gi < grid; ++gi)
    for (int gj = 0; gj < grid; ++gj)
      for (int pi = 0; pi < patch; ++pi)
        for (int pj = 0; pj < patch; ++pj)
          order.push_back((gi * patch + pi) * static_cast<std::int64_t>(res) +
                          gj * patch + pj);
  Tensor pixels = reshape(image, {static_cast<std::int64_t>(res) * res, 3});
  Tensor patches = reshape(gather_rows(pixels, order),
                           {static_cast<std::int64_t>(grid) * grid,
                            static_cast<std::int64_t>(patch) * patch * 3});
  return add(add(matmul(patches, weight), bias), pos);
}

void PatchEmbed::collect(const std::string& prefix, ParamMap& params) const {
  params.add(prefix + ".weight", weight);
  params.add(prefix + ".bias", bias);
  params.add(prefix + ".pos", pos);
}

Conv2dLayer Conv2dLayer::init(int ksize, std::int64_t cin, std::int64_t cout,
                              util::Rng& rng, DType dtype) {
  Conv2dLayer c;
  const std::int64_t fan_in = static_cast<std::int64_t>(ksize) * ksize * cin;
  c.kernel = fan_in_uniform({ksize, ksize, cin, cout}, fan_in, rng, dtype);
  c.bias = Tensor::zeros({cout}, dtype, true);
  return c;
}

Tensor Conv2dLayer::operator()(const Tensor& x) const {
  return conv2d(x, kernel, bias);
}

void Conv2dLayer::collect(const std::string& prefix, ParamMap& params) const {
  params.add(prefix + ".kernel", kernel);
  params.add(prefix + ".bias", bias);
}

Conv3dLayer Conv3dLayer::init(int ksize, std::int64_t cin, std::int64_t cout,
                              util::Rng& rng, DType dtype) {
  Conv3dLayer c;
  const std::int64_t fan_in =
      static_cast<std::int64_t>(ksize) * ksize * ksize * cin;
  c.kernel = fan_in_uniform({ksize, ksize, ksize, cin, cout}, fan_in, rng, dtype);
  c.bias = Tensor::zeros({cout}, dtype, true);
  return c;
}

Tensor Conv3dLayer::operator()(const Tensor& x) const {
  return conv3d(x, kernel, bias);
}

void Conv3dLayer::collect(const std::string& prefix, ParamMap& params) const {
  params.add(prefix + ".kernel", kernel);
  params.add(prefix + ".bias", bias);
}

}  // namespace voxlift::nn
