#pragma once

#include <string>
#include <vector>

#include "voxlift/core/blob.hpp"
#include "voxlift/core/ops.hpp"
#include "voxlift/core/tensor.hpp"

namespace voxlift::nn {

using core::DType;
using core::Tensor;

// Named parameters, in registration order (checkpoints, optimizer groups).
struct ParamMap {
  core::NamedTensors entries;
  void add(const std::string& name, const Tensor& t) {
    entries.emplace_back(name, t);
  }
};

// Smooth activation used everywhere: softplus shifted to pass through zero,
// so zero weights and biases keep zero activations.
Tensor smooth_act(const Tensor& x);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
  static Linear init(std::int64_t in, std::int64_t out, util::Rng& rng,
                     DType dtype);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamMap& params) const;
};

struct LayerNorm {
  Tensor gamma, beta;  // [c]
  static LayerNorm init(std::int64_t c, DType dtype);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamMap& params) const;
};

struct MultiHeadAttention {
  Linear proj_q, proj_k, proj_v, proj_o;
  int heads = 1;
  static MultiHeadAttention init(std::int64_t width, int heads, util::Rng& rng,
                                 DType dtype);
  // query [nq,c], key_value [nk,c] -> [nq,c]. When capture is non-null the
  // head-averaged attention matrix [nq,nk] is stored there (detached).
  Tensor operator()(const Tensor& query, const Tensor& key_value,
                    Tensor* capture = nullptr) const;
  void collect(const std::string& prefix, ParamMap& params) const;
};

struct Ffn {
  Linear fc1, fc2;
  static Ffn init(std::int64_t width, std::int64_t hidden, util::Rng& rng,
                  DType dtype);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamMap& params) const;
};

// Pre-norm transformer block with residuals; self- or cross-attention.
struct TransformerBlock {
  LayerNorm norm_q, norm_kv, norm_ffn;
  MultiHeadAttention attn;
  Ffn ffn;
  static TransformerBlock init(std::int64_t width, int heads,
                               std::int64_t ffn_hidden, util::Rng& rng,
                               DType dtype);
  Tensor self_forward(const Tensor& x, Tensor* capture = nullptr) const;
  Tensor cross_forward(const Tensor& x, const Tensor& context,
                       Tensor* capture = nullptr) const;
  void collect(const std::string& prefix, ParamMap& params) const;
};

// Linear patchifier with a learnable per-patch 2D positional embedding,
// shared across views.
struct PatchEmbed {
  Tensor weight;  // [p*p*3, c]
  Tensor bias;    // [c]
  Tensor pos;     // [(res/p)^2, c]
  int patch = 4;
  int res = 32;
  static PatchEmbed init(int res, int patch, std::int64_t width, util::Rng& rng,
                         DType dtype);
  Tensor operator()(const Tensor& image) const;  // [res,res,3] -> [hw,c]
  std::int64_t tokens_per_view() const {
    return static_cast<std::int64_t>(res / patch) * (res / patch);
  }
  void collect(const std::string& prefix, ParamMap& params) const;
};

struct Conv2dLayer {
  Tensor kernel;  // [k,k,cin,cout]
  Tensor bias;    // [cout]
  static Conv2dLayer init(int ksize, std::int64_t cin, std::int64_t cout,
                          util::Rng& rng, DType dtype);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamMap& params) const;
};

struct Conv3dLayer {
  Tensor kernel;  // [k,k,k,cin,cout]
  Tensor bias;    // [cout]
  static Conv3dLayer init(int ksize, std::int64_t cin, std::int64_t cout,
                          util::Rng& rng, DType dtype);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamMap& params) const;
};

}  // namespace voxlift::nn
