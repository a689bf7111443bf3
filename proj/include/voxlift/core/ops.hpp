#pragma once

#include <utility>
#include <vector>

#include "voxlift/core/tensor.hpp"

// Differentiable primitives. Binary elementwise ops broadcast with trailing
// dimension alignment; everything returns a fresh tensor recorded on the
// graph when gradients are enabled.

namespace voxlift::core {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor pow_scalar(const Tensor& a, double exponent);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor tanh(const Tensor& a);

Tensor sum(const Tensor& a);         // rank-0
Tensor mean(const Tensor& a);        // rank-0
Tensor reduce_max(const Tensor& a);  // rank-0, subgradient to first argmax

Tensor softmax_last(const Tensor& a);
Tensor layer_norm_last(const Tensor& a, double eps = 1e-5);

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n]
// [B,m,k] x [B,k,n]; with transpose_b, b is [B,n,k].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& perm);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t len);
Tensor gather_rows(const Tensor& a, const std::vector<std::int64_t>& index);
// out[index[i], :] += src[i, :]; adjoint of gather_rows.
Tensor scatter_rows_add(const Tensor& src,
                        const std::vector<std::int64_t>& index,
                        std::int64_t out_rows);

// Stride-1 same convolutions, channel-last, odd kernels, zero padding.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias);
Tensor conv3d(const Tensor& x, const Tensor& kernel, const Tensor& bias);
Tensor upsample_nearest3d(const Tensor& x, int factor);

// Grid sampling with align-corners mapping (-1 -> first node center,
// +1 -> last node center) and clamp-to-border. Differentiable in the grid;
// the sample points are treated as constants.
Tensor bilinear_sample(const Tensor& grid, const Tensor& points);
Tensor trilinear_sample(const Tensor& grid, const Tensor& points);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace voxlift::core
