#include "hansnet/attention.hpp"

#include <cmath>

#include "hansnet/init.hpp"
#include "hansnet/ops.hpp"
#include "hansnet/rng.hpp"

namespace hansnet {

namespace {

void check_input(const AttentionLayer& layer, const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != layer.channels())
        throw DimensionError("attention expects [B," + std::to_string(layer.channels()) + ",H,W], got " +
                             shape_str(x.shape()));
}

// [B, C', H, W] -> [B, N, C']
Tensor tokens(const Tensor& t) {
    return permute(reshape(t, {t.dim(0), t.dim(1), t.dim(2) * t.dim(3)}), {0, 2, 1});
}

}  // namespace

Tensor AttentionLayer::attention_map(const Tensor& x) const {
    check_input(*this, x);
    const std::size_t b = x.dim(0), n = x.dim(2) * x.dim(3), dk = q.dim(0);
    Tensor qt = tokens(conv2d(x, q));                  // [B, N, dk]
    Tensor kt = reshape(conv2d(x, k), {b, dk, n});     // [B, dk, N]
    Tensor scores = scale(matmul(qt, kt), 1.0 / std::sqrt(static_cast<double>(dk)));
    return softmax(scores, 2);
}

Tensor AttentionLayer::gate(const Tensor& x) const {
    check_input(*this, x);
    Tensor pooled = mean(x, {2, 3});                                   // [B, C]
    Tensor hidden = hansnet::tanh(add(matmul(pooled, mlp1), mlp1_b));  // [B, C/4]
    Tensor g = sigmoid(add(matmul(hidden, mlp2), mlp2_b));            // [B, 1]
    return reshape(g, {x.dim(0), 1, 1, 1});
}

Tensor AttentionLayer::forward(const Tensor& x) const {
    check_input(*this, x);
    const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor attn = attention_map(x);
    Tensor o = matmul(attn, tokens(conv2d(x, v)));  // [B, N, C]
    Tensor o_img = reshape(permute(o, {0, 2, 1}), {b, c, h, w});
    return add(x, mul(gate(x), o_img));
}

ParamList AttentionLayer::params(const std::string& prefix) const {
    return {{prefix + ".q", q},
            {prefix + ".k", k},
            {prefix + ".v", v},
            {prefix + ".mlp1", mlp1},
            {prefix + ".mlp1.bias", mlp1_b},
            {prefix + ".mlp2", mlp2},
            {prefix + ".mlp2.bias", mlp2_b}};
}

AttentionLayer attention_init(std::size_t c, std::uint64_t seed, double final_scale) {
    if (c == 0 || c % 8 != 0)
        throw ConfigError("attention channels must be a positive multiple of 8, got " + std::to_string(c));
    Rng rng(seed);
    AttentionLayer layer;
    const std::size_t dk = c / 8, hidden = c / 4;
    layer.q = fan_in_uniform({dk, c, 1, 1}, c, rng);
    layer.k = fan_in_uniform({dk, c, 1, 1}, c, rng);
    layer.v = fan_in_uniform({c, c, 1, 1}, c, rng);
    layer.mlp1 = fan_in_uniform({c, hidden}, c, rng);
    layer.mlp1_b = Tensor::zeros({hidden});
    layer.mlp2 = Tensor::uniform({hidden, 1}, -final_scale, final_scale, rng);
    layer.mlp2_b = Tensor::zeros({1});
    return layer;
}

}  // namespace hansnet
