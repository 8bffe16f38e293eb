#include "hansnet/implicit.hpp"

#include "hansnet/init.hpp"
#include "hansnet/ops.hpp"
#include "hansnet/rng.hpp"

namespace hansnet {

namespace {

double axis_coord(std::size_t i, std::size_t n) {
    if (n == 1) return 0.0;
    return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
}

}  // namespace

Tensor dense_grid(std::size_t h, std::size_t w) {
    if (h == 0 || w == 0) throw ContractError("grid dimensions must be positive");
    Tensor g({1, h * w, 2});
    auto d = g.mutable_data();
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            d[(i * w + j) * 2] = axis_coord(j, w);
            d[(i * w + j) * 2 + 1] = axis_coord(i, h);
        }
    return g;
}

Tensor ImplicitHead::forward(const Tensor& coords, const std::vector<Tensor>& feats) const {
    if (feats.empty()) throw ContractError("implicit head needs at least one feature map");
    if (coords.rank() != 3 || coords.dim(2) != 2) throw DimensionError("coordinates must be [B,N,2]");
    const std::size_t b = feats.front().dim(0);
    Tensor p = coords;
    if (coords.dim(0) != b) {
        if (coords.dim(0) != 1) throw DimensionError("coordinate batch does not match features");
        p = concat(std::vector<Tensor>(b, coords), 0);
    }
    std::vector<Tensor> parts{p, positional_encode(p, levels)};
    std::size_t width = 2 + 4 * levels;
    for (const auto& f : feats) {
        parts.push_back(grid_sample_bilinear(f, p));
        width += f.dim(1);
    }
    if (width != input_width())
        throw DimensionError("implicit head expects input width " + std::to_string(input_width()) + ", got " +
                             std::to_string(width));
    Tensor h = hansnet::tanh(add(matmul(concat(parts, 2), w1), b1));
    h = hansnet::tanh(add(matmul(h, w2), b2));
    return add(matmul(h, w3), b3);
}

Tensor ImplicitHead::query_dense(const std::vector<Tensor>& feats, std::size_t h, std::size_t w) const {
    const std::size_t b = feats.front().dim(0);
    Tensor y = forward(dense_grid(h, w), feats);  // [B, HW, 2]
    return reshape(permute(y, {0, 2, 1}), {b, 2, h, w});
}

ParamList ImplicitHead::params(const std::string& prefix) const {
    return {{prefix + ".mlp1.w", w1}, {prefix + ".mlp1.b", b1}, {prefix + ".mlp2.w", w2},
            {prefix + ".mlp2.b", b2}, {prefix + ".mlp3.w", w3}, {prefix + ".mlp3.b", b3}};
}

ImplicitHead implicit_init(std::size_t feat_channels, std::size_t levels, std::size_t hidden, std::uint64_t seed) {
    if (levels < 1) throw ConfigError("positional encoding levels must be at least 1");
    if (hidden < 1) throw ConfigError("implicit head width must be positive");
    Rng rng(seed);
    ImplicitHead head;
    head.levels = levels;
    const std::size_t in = 2 + 4 * levels + feat_channels;
    head.w1 = fan_in_uniform({in, hidden}, in, rng);
    head.b1 = Tensor::zeros({hidden});
    head.w2 = fan_in_uniform({hidden, hidden}, hidden, rng);
    head.b2 = Tensor::zeros({hidden});
    head.w3 = fan_in_uniform({hidden, 2}, hidden, rng);
    head.b3 = Tensor::zeros({2});
    return head;
}

}  // namespace hansnet
