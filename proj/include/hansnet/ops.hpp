#pragma once

#include <cstddef>
#include <vector>

#include "hansnet/tensor.hpp"

namespace hansnet {

// Elementwise. Binary ops broadcast numpy-style (right-aligned, singleton axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws NumericalError if any divisor has magnitude below 1e-300.
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);
/// log(1 + e^x), overflow-safe.
Tensor softplus(const Tensor& a);

Shape broadcast_shape(const Shape& a, const Shape& b);

/// Batched product of the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

/// input [B,Cin,H,W], kernel [Cout,Cin,K,K], optional bias [Cout]. Layers that
/// need same-size output use odd K with padding K/2.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias = {}, std::size_t stride = 1,
              std::size_t padding = 0);

/// Softmax along `axis` with max subtraction.
Tensor softmax(const Tensor& x, int axis);

/// Corner-aligned convention: coordinate -1 is the first pixel center, +1 the
/// last. Single-pixel axes map every coordinate to that pixel.
inline constexpr bool kGridAlignCorners = true;

/// feat [B,C,H,W], coords [B,N,2] as (x, y) in [-1,1] -> [B,N,C]. Out-of-range
/// coordinates are clamped to the border.
Tensor grid_sample_bilinear(const Tensor& feat, const Tensor& coords);

/// Corner-aligned bilinear resize of [B,C,H,W] to [B,C,h,w].
Tensor upsample_bilinear(const Tensor& x, std::size_t h, std::size_t w);

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
Tensor maxpool2d(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
/// Materializes a copy with axes reordered: out.shape[i] = x.shape[perm[i]].
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor concat(const std::vector<Tensor>& parts, int axis);

Tensor sum(const Tensor& x, const std::vector<int>& axes, bool keepdim = false);
Tensor mean(const Tensor& x, const std::vector<int>& axes, bool keepdim = false);
Tensor max(const Tensor& x, const std::vector<int>& axes, bool keepdim = false);
/// Sum of every element as a rank-0 tensor.
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

/// Channel dropout on [B,C,H,W]: whole channels are zeroed with probability p,
/// survivors scaled by 1/(1-p). p == 0 returns the input unchanged.
Tensor dropout2d(const Tensor& x, double p, Rng& rng);

/// Poincare-ball exponential map over the last axis:
///   tanh(sqrt(-k)|v|) / (sqrt(-k)|v| + eps) * v
/// `kappa` is a one-element tensor and may carry a gradient.
Tensor poincare_expmap(const Tensor& v, const Tensor& kappa, double eps);

/// [...,2] -> [...,4L]; per coordinate component j and level l the pair
/// sin(2^l pi p_j), cos(2^l pi p_j), component-major then level-minor.
Tensor positional_encode(const Tensor& p, std::size_t levels);

}  // namespace hansnet
