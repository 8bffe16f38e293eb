#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hansnet/checkpoint.hpp"
#include "hansnet/tensor.hpp"

namespace hansnet {

/// Pixel-center coordinates of an H x W grid under the corner-aligned
/// convention, row-major, (x, y) order: [1, H*W, 2]. A single-pixel axis
/// gets coordinate 0.
Tensor dense_grid(std::size_t h, std::size_t w);

/// Coordinate MLP: concat(p, posenc(p), sampled features) -> hidden -> hidden -> 2,
/// tanh between layers, linear output.
struct ImplicitHead {
    Tensor w1, b1;  // [2 + 4L + C, hidden], [hidden]
    Tensor w2, b2;  // [hidden, hidden], [hidden]
    Tensor w3, b3;  // [hidden, 2], [2]
    std::size_t levels = 6;

    std::size_t input_width() const { return w1.dim(0); }

    /// coords [B,N,2] (a [1,N,2] grid is repeated over the batch). Features
    /// from every map in `feats` are sampled at each coordinate and
    /// concatenated in order; their channel counts must sum to C.
    Tensor forward(const Tensor& coords, const std::vector<Tensor>& feats) const;
    Tensor forward(const Tensor& coords, const Tensor& feat) const { return forward(coords, std::vector<Tensor>{feat}); }

    /// Logits on the dense H x W grid reshaped to [B, 2, H, W].
    Tensor query_dense(const std::vector<Tensor>& feats, std::size_t h, std::size_t w) const;

    ParamList params(const std::string& prefix = "inr") const;
};

ImplicitHead implicit_init(std::size_t feat_channels, std::size_t levels, std::size_t hidden, std::uint64_t seed);

}  // namespace hansnet
